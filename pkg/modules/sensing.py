"""
Sensing Module
Environment model, field-of-view point-cloud sensing, the polar waypoint grid
and the potential map built on top of it.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from sklearn.neighbors import KDTree

from modules.geometry import (
    CircleObstacle, Obstacle, PolygonObstacle, Pose,
    points_in_polygon, segments_intersect_obstacles,
)

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-9


@dataclass(frozen=True)
class FovParams:
    r_max: float = 5.0
    dr: float = 0.2
    theta_max: float = 60.0
    dtheta: float = 1.0
    proximity_radius: float = 1.8

    def __post_init__(self):
        if min(self.r_max, self.dr, self.theta_max, self.dtheta) <= 0.0:
            raise ValueError(f"FOV parameters must be positive: {self}")
        for label, ratio in (("r_max/dr", self.r_max / self.dr),
                             ("2*theta_max/dtheta", 2.0 * self.theta_max / self.dtheta)):
            if abs(ratio - round(ratio)) > INTEGRALITY_TOL * max(1.0, ratio):
                raise ValueError(f"{label} = {ratio} must be an integer")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "FovParams":
        return cls(**{k: float(config[k]) for k in
                      ("r_max", "dr", "theta_max", "dtheta", "proximity_radius") if k in config})

    @property
    def n_range(self) -> int:
        return int(round(self.r_max / self.dr))

    @property
    def n_bearing(self) -> int:
        return int(round(2.0 * self.theta_max / self.dtheta)) + 1

    @property
    def n_points(self) -> int:
        return self.n_range * self.n_bearing

    @property
    def theta_max_rad(self) -> float:
        return math.radians(self.theta_max)


# ── Environment ──────────────────────────────────────────────────────────────

def wall_obstacles(bounds: Tuple[float, float, float, float], thickness: float = 0.5) -> List[PolygonObstacle]:
    """The arena edge as four thin rectangles just outside the bounds."""
    xmin, ymin, xmax, ymax = bounds
    t = thickness

    def box(x0, y0, x1, y1):
        return PolygonObstacle(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    return [
        box(xmin - t, ymin - t, xmax + t, ymin),   # south
        box(xmin - t, ymax, xmax + t, ymax + t),   # north
        box(xmin - t, ymin, xmin, ymax),           # west
        box(xmax, ymin, xmax + t, ymax),           # east
    ]


@dataclass(frozen=True)
class Environment:
    bounds: Tuple[float, float, float, float]
    obstacles: Tuple[Obstacle, ...]
    start: Pose
    goal: Tuple[float, float]
    name: str = "custom"
    scenario_regions: Optional[Dict[str, Tuple[float, float, float, float]]] = None
    wall_thickness: float = 0.5
    _samples: Dict[float, Tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(float(b) for b in self.bounds))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"degenerate bounds {self.bounds}")

    @property
    def walls(self) -> List[PolygonObstacle]:
        return wall_obstacles(self.bounds, self.wall_thickness)

    @property
    def all_obstacles(self) -> List[Obstacle]:
        return list(self.obstacles) + self.walls

    def with_start_goal(self, start: Pose, goal: Tuple[float, float]) -> "Environment":
        return replace(self, start=start, goal=goal, _samples={})

    def contains(self, point: Iterable[float]) -> bool:
        x, y = point
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def boundary_samples(self, sample_step: float) -> Tuple[np.ndarray, np.ndarray]:
        """All obstacle boundary samples and the obstacle index of each (walls included)."""
        cached = self._samples.get(sample_step)
        if cached is None:
            chunks, sources = [], []
            for idx, obstacle in enumerate(self.all_obstacles):
                pts = sample_boundary(obstacle, sample_step)
                chunks.append(pts)
                sources.append(np.full(len(pts), idx, dtype=int))
            cached = (np.vstack(chunks), np.concatenate(sources))
            self._samples[sample_step] = cached
        return cached

    def validation_errors(self) -> List[str]:
        """Problems with start and goal; empty list means valid."""
        from modules.collision import footprint_hits, point_in_obstacles

        problems = []
        if not self.contains((self.start.x, self.start.y)):
            problems.append("start lies outside bounds")
        if footprint_hits(np.array([self.start.as_tuple()]), self.all_obstacles)[0]:
            problems.append("start footprint intersects an obstacle")
        if not self.contains(self.goal):
            problems.append("goal lies outside bounds")
        elif point_in_obstacles(np.asarray(self.goal), self.obstacles):
            problems.append("goal lies inside an obstacle")
        return problems


def sample_boundary(obstacle: Obstacle, step: float) -> np.ndarray:
    """Boundary points with spacing <= step; polygon vertices always included."""
    if isinstance(obstacle, CircleObstacle):
        n = max(8, int(math.ceil(2.0 * math.pi * obstacle.radius / step)))
        angles = 2.0 * math.pi * np.arange(n) / n
        cx, cy = obstacle.center
        return np.column_stack([cx + obstacle.radius * np.cos(angles),
                                cy + obstacle.radius * np.sin(angles)])
    v, w = obstacle.edges()
    pieces = []
    for a, b in zip(v, w):
        n = max(1, int(math.ceil(np.linalg.norm(b - a) / step)))
        s = np.arange(n)[:, None] / n
        pieces.append(a + s * (b - a))
    return np.vstack(pieces)


# ── Sensing ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    sources: np.ndarray

    @property
    def m(self) -> int:
        return int(len(self.points))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(points=np.zeros((0, 2)), sources=np.zeros(0, dtype=int))


def in_fov_sector(points: np.ndarray, pose: Pose, params: FovParams) -> np.ndarray:
    local = pose.to_local(points)
    ranges = np.hypot(local[:, 0], local[:, 1])
    bearings = np.arctan2(local[:, 1], local[:, 0])
    return (ranges > 0.0) & (ranges <= params.r_max + 1e-12) & (np.abs(bearings) <= params.theta_max_rad + 1e-12)


def sense(env: Environment, pose: Pose, params: FovParams, sample_step: float = 0.1) -> PointCloud:
    """Obstacle boundary samples in the FOV sector plus the all-around proximity ring."""
    samples, sources = env.boundary_samples(sample_step)
    keep = in_fov_sector(samples, pose, params)
    if params.proximity_radius > 0.0:
        near = np.hypot(samples[:, 0] - pose.x, samples[:, 1] - pose.y) <= params.proximity_radius
        keep |= near
    return PointCloud(points=samples[keep], sources=sources[keep])


def visible_obstacles(env: Environment, cloud: PointCloud) -> List[Obstacle]:
    obstacles = env.all_obstacles
    return [obstacles[i] for i in np.unique(cloud.sources)]


def goal_in_fov(pose: Pose, goal: Tuple[float, float], params: FovParams) -> bool:
    return bool(in_fov_sector(np.asarray(goal, dtype=float).reshape(1, 2), pose, params)[0])


# ── Waypoint grid / potential map ────────────────────────────────────────────

@dataclass(frozen=True)
class FovGrid:
    points: np.ndarray       # (N, 2) world frame
    local: np.ndarray        # (N, 2) robot frame
    polar_index: np.ndarray  # (N, 2) ints (i_r, i_theta)

    @property
    def n(self) -> int:
        return int(len(self.points))


def make_grid(pose: Pose, params: FovParams) -> FovGrid:
    """Range-major polar grid: index j = i_r * n_bearing + i_theta."""
    ranges = params.dr * np.arange(1, params.n_range + 1)
    bearings = np.deg2rad(-params.theta_max + params.dtheta * np.arange(params.n_bearing))
    rr, bb = np.meshgrid(ranges, bearings, indexing="ij")
    local = np.column_stack([(rr * np.cos(bb)).ravel(), (rr * np.sin(bb)).ravel()])
    ir, ib = np.meshgrid(np.arange(params.n_range), np.arange(params.n_bearing), indexing="ij")
    return FovGrid(points=pose.to_world(local), local=local,
                   polar_index=np.column_stack([ir.ravel(), ib.ravel()]))


@dataclass(frozen=True)
class PotentialMap:
    values: np.ndarray


def potential_map(grid: FovGrid, cloud: PointCloud, sigma: float = 0.5) -> PotentialMap:
    if cloud.m == 0:
        return PotentialMap(values=np.zeros(grid.n))
    tree = KDTree(cloud.points)
    dist, _ = tree.query(grid.points, k=1)
    return PotentialMap(values=np.exp(-dist[:, 0] ** 2 / (2.0 * sigma * sigma)))


def blocked_flags(grid: FovGrid, pose: Pose, env_visible: List[Obstacle]) -> np.ndarray:
    if not env_visible:
        return np.zeros(grid.n, dtype=bool)
    return segments_intersect_obstacles(pose.position, grid.points, env_visible)
