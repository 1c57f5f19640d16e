"""
Steering Module
Reeds-Shepp car: shortest forward/backward connection between two poses,
closed-form rollout of a path, and the ellipsoid-bounded execution time.

Paths are built in normalised units (turn radius 1) from the standard word
families CSC, CCC, CCCC, CCSC and CCSCC, each expanded with its timeflip,
reflect and backwards variants. Segment lengths are signed: negative means
the car drives backwards.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from modules.errors import ContainmentError
from modules.geometry import (
    Ellipsoid, Pose, footprint, footprint_corners_batch, footprint_inside,
    level_set_value, normalize_angle,
)

logger = logging.getLogger(__name__)

ZERO = 10.0 * np.finfo(float).eps
HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi
TIE_TOL = 1e-9
ENDPOINT_TOL = 1e-6


@dataclass(frozen=True)
class CarSpec:
    axle_length: float = 1.0
    min_turn_radius: float = 1.0
    speed: float = 1.0

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "CarSpec":
        return cls(axle_length=float(config.get("axle_length", 1.0)),
                   min_turn_radius=float(config.get("min_turn_radius", 1.0)),
                   speed=float(config.get("speed", 1.0)))


@dataclass(frozen=True)
class RsSegment:
    kind: str        # 'L', 'R' or 'S'
    direction: int   # +1 forward, -1 backward
    length: float    # meters, >= 0

    @property
    def signed_length(self) -> float:
        return self.direction * self.length

    @property
    def code(self) -> str:
        return f"{self.kind}{'+' if self.direction > 0 else '-'}"


@dataclass(frozen=True)
class RsPath:
    segments: Tuple[RsSegment, ...]
    total_length: float
    turn_radius: float = 1.0

    @property
    def word(self) -> str:
        return "".join(s.code for s in self.segments)

    def duration(self, speed: float = 1.0) -> float:
        return self.total_length / speed

    def to_dict(self) -> Dict[str, Any]:
        return {"turn_radius": self.turn_radius,
                "segments": [[s.kind, s.direction, s.length] for s in self.segments]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RsPath":
        segs = tuple(RsSegment(str(k), int(d), float(l)) for k, d, l in data["segments"])
        return cls(segments=segs, total_length=float(sum(s.length for s in segs)),
                   turn_radius=float(data.get("turn_radius", 1.0)))


# ── Word family formulas (normalised units) ──────────────────────────────────

def _mod2pi(x: float) -> float:
    v = math.fmod(x, TWO_PI)
    if v < -math.pi:
        v += TWO_PI
    elif v > math.pi:
        v -= TWO_PI
    return v


def _polar(x: float, y: float) -> Tuple[float, float]:
    return math.hypot(x, y), math.atan2(y, x)


def _tau_omega(u, v, xi, eta, phi):
    delta = _mod2pi(u - v)
    a = math.sin(u) - math.sin(delta)
    b = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * a - xi * b, xi * a + eta * b)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _mod2pi(t1 + math.pi) if t2 < 0 else _mod2pi(t1)
    omega = _mod2pi(tau - u + v - phi)
    return tau, omega


def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -ZERO:
        v = _mod2pi(phi - t)
        if v >= -ZERO:
            return t, u, v
    return None


def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    u1 = u1 * u1
    if u1 >= 4.0:
        u = math.sqrt(u1 - 4.0)
        t = _mod2pi(t1 + math.atan2(2.0, u))
        v = _mod2pi(t - phi)
        if t >= -ZERO and v >= -ZERO:
            return t, u, v
    return None


def _lp_rm_l(x, y, phi):
    xi, eta = x - math.sin(phi), y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = _mod2pi(theta + 0.5 * u + math.pi)
        v = _mod2pi(phi - t + u)
        if t >= -ZERO and u <= ZERO:
            return t, u, v
    return None


def _lp_rup_lum_rm(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.sqrt(xi * xi + eta * eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= -ZERO and v <= ZERO:
            return t, u, v
    return None


def _lp_rum_lum_rp(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -HALF_PI:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= -ZERO and v >= -ZERO:
                return t, u, v
    return None


def _lp_rm_sm_lm(x, y, phi):
    xi, eta = x - math.sin(phi), y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        r = math.sqrt(rho * rho - 4.0)
        u = 2.0 - r
        t = _mod2pi(theta + math.atan2(r, -2.0))
        v = _mod2pi(phi - HALF_PI - t)
        if t >= -ZERO and u <= ZERO and v <= ZERO:
            return t, u, v
    return None


def _lp_rm_sm_rm(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = _mod2pi(t + HALF_PI - phi)
        if t >= -ZERO and u <= ZERO and v <= ZERO:
            return t, u, v
    return None


def _lp_rm_s_lm_rp(x, y, phi):
    xi, eta = x + math.sin(phi), y - 1.0 - math.cos(phi)
    rho, _ = _polar(xi, eta)
    if rho >= 2.0:
        u = 4.0 - math.sqrt(rho * rho - 4.0)
        if u <= ZERO:
            t = _mod2pi(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
            v = _mod2pi(t - phi)
            if t >= -ZERO and v >= -ZERO:
                return t, u, v
    return None


Candidate = Tuple[str, Tuple[float, ...]]


def _flip(word: str) -> str:
    return word.translate(str.maketrans("LR", "RL"))


def _variants(fn, x, y, phi, word, build, out: List[Candidate], backwards: bool = False):
    """Plain, timeflip, reflect and timeflip+reflect expansions of one formula."""
    cases = ((x, y, phi, word, 1.0), (-x, y, -phi, word, -1.0),
             (x, -y, -phi, _flip(word), 1.0), (-x, -y, phi, _flip(word), -1.0))
    for cx, cy, cphi, w, sign in cases:
        sol = fn(cx, cy, cphi)
        if sol is None:
            continue
        lengths = tuple(sign * l for l in build(*sol))
        if backwards:
            lengths = tuple(reversed(lengths))
            w = w[::-1]
        out.append((w, lengths))


def _candidate_words(x: float, y: float, phi: float) -> List[Candidate]:
    out: List[Candidate] = []
    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)

    # CSC
    _variants(_lp_sp_lp, x, y, phi, "LSL", lambda t, u, v: (t, u, v), out)
    _variants(_lp_sp_rp, x, y, phi, "LSR", lambda t, u, v: (t, u, v), out)
    # CCC
    _variants(_lp_rm_l, x, y, phi, "LRL", lambda t, u, v: (t, u, v), out)
    _variants(_lp_rm_l, xb, yb, phi, "LRL", lambda t, u, v: (t, u, v), out, backwards=True)
    # CCCC
    _variants(_lp_rup_lum_rm, x, y, phi, "LRLR", lambda t, u, v: (t, u, -u, v), out)
    _variants(_lp_rum_lum_rp, x, y, phi, "LRLR", lambda t, u, v: (t, u, u, v), out)
    # CCSC and its backwards form CSCC
    _variants(_lp_rm_sm_lm, x, y, phi, "LRSL", lambda t, u, v: (t, -HALF_PI, u, v), out)
    _variants(_lp_rm_sm_rm, x, y, phi, "LRSR", lambda t, u, v: (t, -HALF_PI, u, v), out)
    _variants(_lp_rm_sm_lm, xb, yb, phi, "LRSL", lambda t, u, v: (t, -HALF_PI, u, v), out, backwards=True)
    _variants(_lp_rm_sm_rm, xb, yb, phi, "LRSR", lambda t, u, v: (t, -HALF_PI, u, v), out, backwards=True)
    # CCSCC
    _variants(_lp_rm_s_lm_rp, x, y, phi, "LRSLR", lambda t, u, v: (t, -HALF_PI, u, -HALF_PI, v), out)
    return out


# ── Integration ──────────────────────────────────────────────────────────────

def _advance(x, y, phi, kind, signed_len, radius):
    """Closed-form motion along one segment; arrays broadcast."""
    if kind == "S":
        return x + signed_len * np.cos(phi), y + signed_len * np.sin(phi), phi + 0.0 * signed_len
    turn = signed_len / radius if kind == "L" else -signed_len / radius
    phi_new = phi + turn
    if kind == "L":
        return (x + radius * (np.sin(phi_new) - np.sin(phi)),
                y - radius * (np.cos(phi_new) - np.cos(phi)), phi_new)
    return (x - radius * (np.sin(phi_new) - np.sin(phi)),
            y + radius * (np.cos(phi_new) - np.cos(phi)), phi_new)


def _endpoint(start: Pose, kinds: Sequence[str], signed: Sequence[float], radius: float) -> Tuple[float, float, float]:
    x, y, phi = start.x, start.y, start.theta
    for kind, ell in zip(kinds, signed):
        x, y, phi = _advance(x, y, phi, kind, ell, radius)
    return float(x), float(y), float(phi)


def connect(start: Pose, goal: Pose, spec: Optional[CarSpec] = None) -> RsPath:
    """Shortest Reeds-Shepp path; ties broken by the lexicographically smallest word."""
    spec = spec or CarSpec()
    rho = spec.min_turn_radius
    dx, dy = goal.x - start.x, goal.y - start.y
    c, s = math.cos(start.theta), math.sin(start.theta)
    x = (c * dx + s * dy) / rho
    y = (-s * dx + c * dy) / rho
    phi = normalize_angle(goal.theta - start.theta)

    ranked = []
    for word, lengths in _candidate_words(x, y, phi):
        segments = tuple(RsSegment(k, 1 if l >= 0.0 else -1, abs(l) * rho)
                         for k, l in zip(word, lengths) if abs(l) > ZERO)
        total = float(sum(seg.length for seg in segments))
        code = "".join(seg.code for seg in segments)
        ranked.append((total, code, segments))
    ranked.sort(key=lambda item: item[0])

    best = None
    for total, code, segments in ranked:
        if best is not None and total > best[0] + TIE_TOL:
            break
        end = _endpoint(start, [g.kind for g in segments], [g.signed_length for g in segments], rho)
        if (math.hypot(end[0] - goal.x, end[1] - goal.y) > ENDPOINT_TOL * max(1.0, rho)
                or abs(normalize_angle(end[2] - goal.theta)) > ENDPOINT_TOL):
            logger.debug(f"Discarding {code}: endpoint mismatch {end}")
            continue
        if best is None or (total < best[0] - TIE_TOL) or code < best[1]:
            best = (total, code, segments)

    if best is None:
        raise RuntimeError(f"no Reeds-Shepp word reached {goal} from {start}")
    return RsPath(segments=best[2], total_length=best[0], turn_radius=rho)


# ── Rollout ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray   # (K,)
    poses: np.ndarray   # (K, 3) x, y, theta
    dt: float

    def __len__(self) -> int:
        return int(len(self.times))

    @property
    def final_pose(self) -> Pose:
        x, y, th = self.poses[-1]
        return Pose(x, y, th)

    def pose_at(self, k: int) -> Pose:
        x, y, th = self.poses[k]
        return Pose(x, y, th)


def sample_times(horizon: float, dt: float) -> np.ndarray:
    """k*dt for k*dt < horizon, with the exact horizon as the last sample."""
    if horizon <= 0.0:
        return np.zeros(1)
    n = int(math.floor(horizon / dt))
    times = dt * np.arange(n + 1)
    times = times[times < horizon - 1e-12]
    return np.append(times, horizon)


def poses_along(start: Pose, path: RsPath, arc: np.ndarray) -> np.ndarray:
    """Poses at the given arc lengths from the path start, closed form."""
    arc = np.asarray(arc, dtype=float)
    segs = path.segments
    if not segs:
        return np.tile([start.x, start.y, start.theta], (len(arc), 1))
    lengths = np.array([g.length for g in segs])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    heads = [(start.x, start.y, start.theta)]
    for g in segs:
        heads.append(tuple(float(v) for v in _advance(*heads[-1], g.kind, g.signed_length, path.turn_radius)))

    idx = np.clip(np.searchsorted(cum, arc, side="right") - 1, 0, len(segs) - 1)
    offset = np.clip(arc - cum[idx], 0.0, lengths[idx])
    out = np.zeros((len(arc), 3))
    for i, g in enumerate(segs):
        mask = idx == i
        if not mask.any():
            continue
        x0, y0, p0 = heads[i]
        xs, ys, ps = _advance(np.full(mask.sum(), x0), np.full(mask.sum(), y0), np.full(mask.sum(), p0),
                              g.kind, g.direction * offset[mask], path.turn_radius)
        out[mask] = np.column_stack([xs, ys, ps])
    out[:, 2] = (out[:, 2] + math.pi) % TWO_PI - math.pi
    return out


def rollout(start: Pose, path: RsPath, horizon: float, dt: float, spec: Optional[CarSpec] = None) -> Trajectory:
    """Sample the path at dt up to the horizon (clamped to the path duration)."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    spec = spec or CarSpec()
    horizon = min(max(horizon, 0.0), path.duration(spec.speed))
    times = sample_times(horizon, dt)
    poses = poses_along(start, path, spec.speed * times)
    poses[0] = (start.x, start.y, start.theta)
    return Trajectory(times=times, poses=poses, dt=dt)


def max_safe_duration(start: Pose, path: RsPath, psi: Optional[Ellipsoid], waypoint: Sequence[float],
                      cap: float = 1.0, dt: float = 0.01, safety_factor: float = 0.9,
                      dr: float = 0.2, waypoint_is_goal: bool = False,
                      spec: Optional[CarSpec] = None) -> float:
    """
    Execution time that keeps the footprint inside psi's 0-level set and stops
    short of the waypoint. With psi=None only arrival and the cap bind.
    """
    spec = spec or CarSpec()
    if psi is not None and not footprint_inside(psi, footprint(start), 0.0):
        raise ContainmentError(f"start footprint at {start} is outside the 0-level set")

    duration = path.duration(spec.speed)
    horizon = min(cap, duration)
    traj = rollout(start, path, horizon, dt, spec)

    t_exit = math.inf
    if psi is not None:
        outside = _corners_outside(traj.poses, psi)
        if outside.any():
            t_exit = float(traj.times[np.argmax(outside)])

    t_waypoint = math.inf
    if not waypoint_is_goal:
        wp = np.asarray(waypoint, dtype=float)
        # arrival counts only once the car has moved; first-ring waypoints sit at dr
        near = np.hypot(traj.poses[1:, 0] - wp[0], traj.poses[1:, 1] - wp[1]) < dr
        if near.any():
            t_waypoint = float(traj.times[1 + np.argmax(near)])

    delta_t = safety_factor * min(t_exit, t_waypoint, cap, duration)
    if psi is not None:
        delta_t = _shrink_to_inside(start, path, psi, delta_t, dt, spec)
    return delta_t


def _corners_outside(poses: np.ndarray, psi: Ellipsoid) -> np.ndarray:
    corners = footprint_corners_batch(poses)
    values = level_set_value(psi, corners.reshape(-1, 2)).reshape(len(poses), 4)
    return (values > 0.0).any(axis=1)


def _shrink_to_inside(start, path, psi, delta_t, dt, spec) -> float:
    """Back off until every rollout sample up to delta_t is inside (the exact horizon sample included)."""
    for _ in range(64):
        if delta_t <= 0.0:
            return 0.0
        traj = rollout(start, path, delta_t, dt, spec)
        outside = _corners_outside(traj.poses, psi)
        if not outside.any():
            return delta_t
        first = int(np.argmax(outside))
        delta_t = 0.5 * delta_t if first == 0 else float(traj.times[first - 1]) * 0.999
    return 0.0
