"""
Planar Geometry
Poses, robot footprints, quadratic (ellipsoid) level sets and exact
segment/obstacle intersection tests.

An ellipsoid is the region {x : x'Px + q'x + r <= 0}. The robot body is held
at the -1 level set and obstacles beyond the +1 level set, so the canonical
radii of the two level sets always satisfy r1^2 - r2^2 = 1.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from modules.errors import LevelSetUndefinedError, NotPositiveDefiniteError

logger = logging.getLogger(__name__)

ArrayLike = Union[Sequence[float], np.ndarray]

FOOTPRINT_SIZE = 1.0
PSD_TOLERANCE = 1e-8
ON_BOUNDARY_TOL = 1e-12


def normalize_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(theta + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


# ── Pose / footprint ─────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Pose:
    """Robot configuration (x, y, theta) with theta in (-pi, pi]."""
    x: float
    y: float
    theta: float

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"Pose.{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.theta)

    def to_local(self, points: ArrayLike) -> np.ndarray:
        """World points -> robot frame (robot at origin, heading along +x)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return (pts - self.position) @ rotation(self.theta)

    def to_world(self, points: ArrayLike) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return pts @ rotation(self.theta).T + self.position

    def distance_to(self, point: ArrayLike) -> float:
        p = np.asarray(point, dtype=float)
        return float(math.hypot(p[0] - self.x, p[1] - self.y))


@dataclass(frozen=True)
class Footprint:
    """Four body corners, counter-clockwise, in the world frame."""
    corners: np.ndarray = field(repr=False)

    @property
    def centroid(self) -> np.ndarray:
        return self.corners.mean(axis=0)


def _unit_corners(size: float = FOOTPRINT_SIZE) -> np.ndarray:
    h = 0.5 * size
    return np.array([[-h, -h], [h, -h], [h, h], [-h, h]])


def footprint(pose: Pose, size: float = FOOTPRINT_SIZE) -> Footprint:
    """Square body of side `size` centred on the pose position."""
    return Footprint(corners=pose.to_world(_unit_corners(size)))


def footprint_corners_batch(poses: np.ndarray, size: float = FOOTPRINT_SIZE) -> np.ndarray:
    """(K, 3) array of poses -> (K, 4, 2) array of corners."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    local = _unit_corners(size)
    c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
    xs = c[:, None] * local[None, :, 0] - s[:, None] * local[None, :, 1]
    ys = s[:, None] * local[None, :, 0] + c[:, None] * local[None, :, 1]
    return np.stack([xs + poses[:, 0:1], ys + poses[:, 1:2]], axis=-1)


# ── Ellipsoid algebra ────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Ellipsoid:
    """Quadratic region x'Px + q'x + r <= 0 with P = [[u11, u2], [u2, u22]], q = (b1, b2)."""
    u11: float
    u2: float
    u22: float
    b1: float
    b2: float
    r: float

    @classmethod
    def from_matrices(cls, P: ArrayLike, q: ArrayLike, r: float) -> "Ellipsoid":
        P = np.asarray(P, dtype=float)
        q = np.asarray(q, dtype=float).reshape(2)
        return cls(float(P[0, 0]), float(0.5 * (P[0, 1] + P[1, 0])), float(P[1, 1]),
                   float(q[0]), float(q[1]), float(r))

    @classmethod
    def from_vector(cls, x: ArrayLike) -> "Ellipsoid":
        x = np.asarray(x, dtype=float)
        return cls(*(float(v) for v in x[:6]))

    @property
    def P(self) -> np.ndarray:
        return np.array([[self.u11, self.u2], [self.u2, self.u22]])

    @property
    def q(self) -> np.ndarray:
        return np.array([self.b1, self.b2])

    def as_vector(self) -> np.ndarray:
        return np.array([self.u11, self.u2, self.u22, self.b1, self.b2, self.r])

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.P)[0])

    def is_valid(self, tol: float = PSD_TOLERANCE) -> bool:
        return bool(np.all(np.isfinite(self.as_vector()))) and self.min_eigenvalue() >= 1.0 - tol

    def center(self) -> np.ndarray:
        return -0.5 * np.linalg.solve(self.P, self.q)


@dataclass(frozen=True)
class LevelSetRadii:
    lambda_cap: float
    r1: float
    r2: float
    schur: float

    @property
    def identity_residual(self) -> float:
        return abs(self.r1 ** 2 - self.r2 ** 2 - 1.0)


def quadratic_rows(points: ArrayLike) -> np.ndarray:
    """Rows a(p) with a(p) . (u11, u2, u22, b1, b2, r) = p'Pp + q'p + r."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    x, y = pts[:, 0], pts[:, 1]
    return np.column_stack([x * x, 2.0 * x * y, y * y, x, y, np.ones_like(x)])


def level_set_value(e: Ellipsoid, p: ArrayLike) -> Union[float, np.ndarray]:
    """p'Pp + q'p + r; scalar for one point, array for an (K, 2) batch."""
    arr = np.asarray(p, dtype=float)
    values = quadratic_rows(arr) @ e.as_vector()
    if arr.ndim == 1:
        return float(values[0])
    return values


def canonical_radii(e: Ellipsoid) -> LevelSetRadii:
    """
    Radii of the 0 and -1 level sets after completing the square.

    With u3 = b1/2 and u4 = b2/2 the value equals
    u11 (x + ...)^2 + S (y + ...)^2 + Lambda, where S = u22 - u2^2/u11 and
    Lambda = r - u3^2/u11 - (u4 - u2 u3/u11)^2 / S.
    """
    if not (e.u11 > 0.0):
        raise NotPositiveDefiniteError(f"u11 = {e.u11} is not positive")
    schur = e.u22 - e.u2 * e.u2 / e.u11
    if not (schur > 0.0):
        raise NotPositiveDefiniteError(f"Schur complement {schur} is not positive")
    if e.r > -1.0:
        raise LevelSetUndefinedError(f"r = {e.r} > -1, the -1 level set is empty")

    u3, u4 = 0.5 * e.b1, 0.5 * e.b2
    completion = u3 * u3 / e.u11 + (u4 - e.u2 * u3 / e.u11) ** 2 / schur
    lambda_cap = e.r - completion
    lambda_shift = (e.r + 1.0) - completion
    r1 = math.sqrt(-lambda_cap)
    r2 = math.sqrt(max(-lambda_shift, 0.0))
    return LevelSetRadii(lambda_cap=lambda_cap, r1=r1, r2=r2, schur=schur)


def ellipsoid_to_world(e_local: Ellipsoid, pose: Pose) -> Ellipsoid:
    """Re-express a robot-frame ellipsoid in the world frame."""
    R = rotation(pose.theta)
    z = pose.position
    P_w = R @ e_local.P @ R.T
    Rq = R @ e_local.q
    q_w = -2.0 * P_w @ z + Rq
    r_w = float(z @ P_w @ z - Rq @ z + e_local.r)
    return Ellipsoid.from_matrices(P_w, q_w, r_w)


def ellipsoid_to_local(e_world: Ellipsoid, pose: Pose) -> Ellipsoid:
    R = rotation(pose.theta)
    z = pose.position
    P_l = R.T @ e_world.P @ R
    q_l = R.T @ (2.0 * e_world.P @ z + e_world.q)
    r_l = float(level_set_value(e_world, z))
    return Ellipsoid.from_matrices(P_l, q_l, r_l)


def footprint_inside(e: Ellipsoid, f: Footprint, level: float) -> bool:
    return bool(np.all(level_set_value(e, f.corners) <= level))


def in_overlap(e_prev: Ellipsoid, e_next: Ellipsoid, f: Footprint) -> bool:
    return footprint_inside(e_prev, f, 0.0) and footprint_inside(e_next, f, 0.0)


# ── Obstacles and exact intersection tests ───────────────────────────────────

@dataclass(frozen=True)
class CircleObstacle:
    center: Tuple[float, float]
    radius: float

    def __post_init__(self):
        if not (self.radius > 0.0):
            raise ValueError(f"circle radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    kind = "circle"


@dataclass(frozen=True)
class PolygonObstacle:
    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise ValueError(f"polygon needs at least 3 vertices, got {len(verts)}")
        if signed_area(np.array(verts)) < 0.0:
            verts = tuple(reversed(verts))
        object.__setattr__(self, "vertices", verts)

    kind = "polygon"

    @property
    def array(self) -> np.ndarray:
        return np.array(self.vertices)

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        v = self.array
        return v, np.roll(v, -1, axis=0)


Obstacle = Union[CircleObstacle, PolygonObstacle]


def signed_area(vertices: np.ndarray) -> float:
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _cross(o: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def point_segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from every point to every segment: (K, 2) x (S, 2) -> (K, S)."""
    p = np.asarray(points, dtype=float).reshape(-1, 1, 2)
    a = np.asarray(a, dtype=float).reshape(1, -1, 2)
    b = np.asarray(b, dtype=float).reshape(1, -1, 2)
    d = b - a
    denom = np.sum(d * d, axis=-1)
    safe = np.where(denom > 0.0, denom, 1.0)
    t = np.clip(np.sum((p - a) * d, axis=-1) / safe, 0.0, 1.0)
    t = np.where(denom > 0.0, t, 0.0)
    closest = a + t[..., None] * d
    return np.linalg.norm(p - closest, axis=-1)


def segments_cross(p1: np.ndarray, p2: np.ndarray, q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Closed-segment intersection (touching counts), broadcast over leading axes."""
    o1 = _cross(p1, p2, q1)
    o2 = _cross(p1, p2, q2)
    o3 = _cross(q1, q2, p1)
    o4 = _cross(q1, q2, p2)
    straddle = (o1 * o2 <= 0.0) & (o3 * o4 <= 0.0)
    bbox = ((np.minimum(p1[..., 0], p2[..., 0]) <= np.maximum(q1[..., 0], q2[..., 0]))
            & (np.minimum(q1[..., 0], q2[..., 0]) <= np.maximum(p1[..., 0], p2[..., 0]))
            & (np.minimum(p1[..., 1], p2[..., 1]) <= np.maximum(q1[..., 1], q2[..., 1]))
            & (np.minimum(q1[..., 1], q2[..., 1]) <= np.maximum(p1[..., 1], p2[..., 1])))
    return straddle & bbox


def points_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Closed point-in-polygon test (boundary counts as inside)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    v = np.asarray(vertices, dtype=float)
    w = np.roll(v, -1, axis=0)
    px, py = pts[:, 0:1], pts[:, 1:2]
    straddles = (v[None, :, 1] > py) != (w[None, :, 1] > py)
    dy = np.where(w[:, 1] - v[:, 1] == 0.0, 1.0, w[:, 1] - v[:, 1])
    x_cross = v[None, :, 0] + (py - v[None, :, 1]) * (w[None, :, 0] - v[None, :, 0]) / dy[None, :]
    inside = np.count_nonzero(straddles & (px < x_cross), axis=1) % 2 == 1
    on_edge = np.min(point_segment_distance(pts, v, w), axis=1) <= ON_BOUNDARY_TOL
    return inside | on_edge


def segments_hit_obstacle(a: np.ndarray, b: np.ndarray, obstacle: Obstacle) -> np.ndarray:
    """Vectorised closed-segment test against one obstacle; a, b are (K, 2)."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    if isinstance(obstacle, CircleObstacle):
        c = np.asarray(obstacle.center)
        d = b - a
        denom = np.sum(d * d, axis=1)
        safe = np.where(denom > 0.0, denom, 1.0)
        t = np.clip(np.sum((c - a) * d, axis=1) / safe, 0.0, 1.0)
        closest = a + t[:, None] * d
        return np.linalg.norm(closest - c, axis=1) <= obstacle.radius
    v, w = obstacle.edges()
    crossing = segments_cross(a[:, None, :], b[:, None, :], v[None, :, :], w[None, :, :]).any(axis=1)
    return crossing | points_in_polygon(a, v) | points_in_polygon(b, v)


def segments_intersect_obstacles(a: np.ndarray, b: np.ndarray, obstacles: Iterable[Obstacle]) -> np.ndarray:
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float).reshape(-1, 2),
                               np.asarray(b, dtype=float).reshape(-1, 2))
    hit = np.zeros(len(b), dtype=bool)
    for obstacle in obstacles:
        hit |= segments_hit_obstacle(a, b, obstacle)
    return hit


def segment_intersects_obstacles(a: ArrayLike, b: ArrayLike, obstacles: List[Obstacle]) -> bool:
    """True iff the closed segment [a, b] meets any obstacle (tangency counts)."""
    return bool(segments_intersect_obstacles(np.asarray(a, dtype=float), np.asarray(b, dtype=float), obstacles)[0])
