"""
Separating-Ellipsoid Filter
Builds the max-det separating ellipsoid program in the robot frame, solves it
with a small barrier interior-point method, and classifies waypoint
candidates.

Decision vector x = (u11, u2, u22, b1, b2, r). For a point p the level value is
a(p) . x with a(p) = (p1^2, 2 p1 p2, p2^2, p1, p2, 1).

    minimise    nu - log det P + sum_j lambda_j
    subject to  a(corner) . x <= -1              (robot inside the -1 level set)
                a(z_i) . x    >= 1               (obstacles beyond the +1 level set)
                a(gamma_j) . x <= -1 + lambda_j,  lambda_j >= 0
                a(goal) . x    <= -1 + nu,        nu >= 0
                I <= P <= cap I,  r >= -scale_floor

The slacks are eliminated in closed form: for fixed barrier weight t the
minimum over lambda of t*lambda - log(lambda) - log(lambda - s) has an explicit
solution, which gives a smooth convex penalty of s = a . x + 1. The two matrix
inequalities use the 2x2 log-det barrier. A Phase-I problem with one extra
relaxation variable finds a strictly feasible start or proves infeasibility.

The backtracking line search accepts steps on the change of Φ_t summed term by
term, never on the difference of two totals.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from modules.errors import SolverFailureError, StartInfeasibleError
from modules.geometry import (
    FOOTPRINT_SIZE, Ellipsoid, Pose, _unit_corners, ellipsoid_to_world, quadratic_rows,
)

logger = logging.getLogger(__name__)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"

_K = np.array([[0.0, 0.0, 1.0], [0.0, -2.0, 0.0], [1.0, 0.0, 0.0]])
_SEL = np.hstack([np.eye(3), np.zeros((3, 3))])  # x -> (u11, u2, u22)
_MAX_OUTER = 40
_MIN_STEP = 1e-14
_STALL_DECREMENT = 1e-4
_SHIFT = np.array([1.0, 0.0, 1.0, 0.0, 0.0, 0.0])


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-6
    max_iterations: int = 200
    barrier_t0: float = 1.0
    barrier_mu: float = 10.0
    newton_tol: float = 1e-10
    line_search_alpha: float = 0.25
    line_search_beta: float = 0.5
    grid_stride: int = 1
    scale_floor: float = 1000.0
    curvature_cap: float = 200.0

    def __post_init__(self):
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations < 1 or self.grid_stride < 1:
            raise ValueError("max_iterations and grid_stride must be at least 1")
        if not self.barrier_mu > 1.0:
            raise ValueError(f"barrier_mu must exceed 1, got {self.barrier_mu}")
        if not self.curvature_cap > 1.0:
            raise ValueError(f"curvature_cap must exceed 1, got {self.curvature_cap}")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "SolverSettings":
        known = cls.__dataclass_fields__.keys()
        kwargs = {k: v for k, v in config.items() if k in known}
        for k in ("max_iterations", "grid_stride"):
            if k in kwargs:
                kwargs[k] = int(kwargs[k])
        return cls(**kwargs)


@dataclass(frozen=True)
class SdpProblem:
    corners: np.ndarray             # (4, 2) robot frame
    cloud: np.ndarray               # (m, 2)
    grid: np.ndarray                # (N, 2)
    goal: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return int(len(self.cloud))

    @property
    def n(self) -> int:
        return int(len(self.grid))


@dataclass(frozen=True)
class SdpSolution:
    ellipsoid: Ellipsoid            # robot frame
    lambdas: np.ndarray
    nu: float
    status: str
    kkt_residual: float
    iterations: int
    objective: float = math.nan
    phase1_iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == STATUS_OPTIMAL


# ── Problem construction ─────────────────────────────────────────────────────

def build_problem(pose: Pose, cloud: np.ndarray, grid: np.ndarray, goal: Optional[np.ndarray],
                  size: float = FOOTPRINT_SIZE) -> SdpProblem:
    """Move all data into the robot frame and reject clouds inside the footprint."""
    cloud_local = pose.to_local(np.asarray(cloud, dtype=float).reshape(-1, 2))
    half = 0.5 * size
    inside = (np.abs(cloud_local[:, 0]) < half) & (np.abs(cloud_local[:, 1]) < half)
    if inside.any():
        bad = np.asarray(cloud, dtype=float).reshape(-1, 2)[np.argmax(inside)]
        raise StartInfeasibleError(f"obstacle point {tuple(bad)} lies inside the footprint at {pose}")
    goal_local = None if goal is None else pose.to_local(np.asarray(goal, dtype=float))[0]
    return SdpProblem(corners=_unit_corners(size), cloud=cloud_local,
                      grid=pose.to_local(np.asarray(grid, dtype=float).reshape(-1, 2)),
                      goal=goal_local)


# ── Barrier pieces ───────────────────────────────────────────────────────────

def _w_plus(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """w + a with w = sqrt(a^2 + 4), without cancellation for negative a."""
    neg = a < 0.0
    out = np.empty_like(a)
    out[~neg] = w[~neg] + a[~neg]
    out[neg] = 4.0 / (w[neg] - a[neg])
    return out


def _f_plus(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(a + 2 + sqrt(a^2 + 4)) / 2."""
    return 1.0 + 0.5 * _w_plus(a, w)


def _soft_terms(s: np.ndarray, t: float):
    """First and second derivative in s of min_l t*l - log l - log(l - s)."""
    a = t * s
    w = np.sqrt(a * a + 4.0)
    fm = _f_plus(-a, w)
    d1 = t / fm
    d2 = t * t * _w_plus(-a, w) / (2.0 * w * fm * fm)
    return d1, d2


def _soft_change(s: np.ndarray, ds: np.ndarray, t: float) -> float:
    """Change of the summed soft penalty when s moves by ds, term by term."""
    a0 = t * s
    da = t * ds
    a1 = a0 + da
    w0 = np.sqrt(a0 * a0 + 4.0)
    w1 = np.sqrt(a1 * a1 + 4.0)
    span = w0 + w1
    dfp = 0.5 * da * (_w_plus(a0, w0) + _w_plus(a1, w1)) / span
    dfm = -0.5 * da * (_w_plus(-a0, w0) + _w_plus(-a1, w1)) / span
    fp0 = _f_plus(a0, w0)
    fm0 = _f_plus(-a0, w0)
    return float(np.sum(dfp - np.log1p(dfp / fp0) - np.log1p(dfm / fm0)))


def _logdet_barrier(c: np.ndarray, J: np.ndarray, y: np.ndarray):
    """Gradient and Hessian of -log det of the 2x2 matrix with entries c + J y."""
    m = c + J @ y
    det = m[0] * m[2] - m[1] * m[1]
    g = np.array([m[2], -2.0 * m[1], m[0]])
    grad = -(J.T @ g) / det
    hess = J.T @ (np.outer(g, g) / (det * det) - _K / det) @ J
    return grad, hess


def _logdet_change(c: np.ndarray, J: np.ndarray, y: np.ndarray, step: np.ndarray) -> Optional[float]:
    """-log det(M + D) + log det M; None when M + D leaves the cone."""
    m = c + J @ y
    d = J @ step
    det = m[0] * m[2] - m[1] * m[1]
    cross = m[0] * d[2] + m[2] * d[0] - 2.0 * m[1] * d[1] + d[0] * d[2] - d[1] * d[1]
    ratio = cross / det
    if m[0] + d[0] <= 0.0 or ratio <= -1.0:
        return None
    return -math.log1p(ratio)


@dataclass
class _Barrier:
    """Φ_t(y) = t * objective(y) + Σ soft penalties + Σ -log(G y + h) + Σ -logdet(LMI).

    The soft penalty of row k acts on s_k = soft[k] . y + soft_offset[k].
    """
    G: np.ndarray
    h: np.ndarray
    lmis: List[Tuple[np.ndarray, np.ndarray]]
    soft: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))
    soft_offset: np.ndarray = field(default_factory=lambda: np.zeros(0))
    linear_objective: Optional[np.ndarray] = None
    logdet_objective: Optional[Tuple[np.ndarray, np.ndarray]] = None

    @property
    def degree(self) -> int:
        return len(self.h) + 2 * len(self.lmis) + 2 * len(self.soft)

    def derivatives(self, y: np.ndarray, t: float):
        n = len(y)
        inv = 1.0 / (self.G @ y + self.h)
        grad = -(self.G.T @ inv)
        hess = (self.G * (inv * inv)[:, None]).T @ self.G
        for c, J in self.lmis:
            g, H = _logdet_barrier(c, J, y)
            grad += g
            hess += H
        if self.logdet_objective is not None:
            g, H = _logdet_barrier(*self.logdet_objective, y)
            grad += t * g
            hess += t * H
        if self.linear_objective is not None:
            grad += t * self.linear_objective
        if len(self.soft):
            A = self.soft[:, :n]
            d1, d2 = _soft_terms(A @ y + self.soft_offset, t)
            grad += A.T @ d1
            hess += (A * d2[:, None]).T @ A
        return grad, hess

    def change(self, y: np.ndarray, step: np.ndarray, t: float) -> Optional[float]:
        """Φ_t(y + step) - Φ_t(y) summed per term; None outside the domain."""
        slack = self.G @ y + self.h
        ratio = (self.G @ step) / slack
        if np.any(ratio <= -1.0):
            return None
        total = -float(np.sum(np.log1p(ratio)))
        for c, J in self.lmis:
            term = _logdet_change(c, J, y, step)
            if term is None:
                return None
            total += term
        if self.logdet_objective is not None:
            term = _logdet_change(*self.logdet_objective, y, step)
            if term is None:
                return None
            total += t * term
        if self.linear_objective is not None:
            total += t * float(self.linear_objective @ step)
        if len(self.soft):
            A = self.soft[:, :len(y)]
            total += _soft_change(A @ y + self.soft_offset, A @ step, t)
        return total


def _newton_solve(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.maximum(np.abs(np.diag(hess)), 1e-300))
    scaled = hess / np.outer(d, d)
    try:
        z = np.linalg.solve(scaled, -grad / d)
    except np.linalg.LinAlgError:
        z = np.linalg.lstsq(scaled, -grad / d, rcond=None)[0]
    return z / d


def _center(barrier: _Barrier, y: np.ndarray, t: float, settings: SolverSettings, stop=None):
    """Damped Newton on Φ_t.

    Returns (y, steps, converged, stopped_early, decrement) where decrement is
    the squared Newton decrement at the returned point.
    """
    steps = 0
    decrement = math.inf
    for _ in range(settings.max_iterations):
        grad, hess = barrier.derivatives(y, t)
        delta = _newton_solve(hess, grad)
        decrement = max(-float(grad @ delta), 0.0)
        if decrement / 2.0 <= settings.newton_tol:
            return y, steps, True, False, decrement
        alpha = 1.0
        while True:
            change = barrier.change(y, alpha * delta, t)
            if change is not None and change <= -settings.line_search_alpha * alpha * decrement:
                break
            alpha *= settings.line_search_beta
            if alpha < _MIN_STEP:
                # rounding floor: no representable decrease left along delta
                return y, steps, decrement <= _STALL_DECREMENT, False, decrement
        y = y + alpha * delta
        steps += 1
        if stop is not None and stop(y):
            return y, steps, True, True, decrement
    return y, steps, False, False, decrement


# ── Solve ────────────────────────────────────────────────────────────────────

def _hard_constraints(problem: SdpProblem, settings: SolverSettings) -> Tuple[np.ndarray, np.ndarray]:
    """G z + h > 0 in the shifted variables z = x - (1, 0, 1, 0, 0, 0)."""
    A_c = quadratic_rows(problem.corners)
    A_z = quadratic_rows(problem.cloud)
    floor = np.array([[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]])
    G = np.vstack([-A_c, A_z, floor])
    h = np.concatenate([-np.ones(len(A_c)), -np.ones(len(A_z)), [settings.scale_floor]])
    return G, h + G @ _SHIFT


def _phase_one(G, h, settings: SolverSettings):
    """Find z with G z + h > 0 and 0 < P - I < (cap - 1) I, or report infeasibility."""
    room = settings.curvature_cap - 1.0
    z0 = np.array([1.0, 0.0, 1.0, 0.0, 0.0, -2.0])
    worst = max(float(-(G @ z0 + h).min()), -1.0, 1.0 - room)
    y = np.append(z0, worst + 1.0)
    relax = np.array([1.0, 0.0, 1.0])[:, None]
    barrier = _Barrier(
        G=np.hstack([G, np.ones((len(G), 1))]), h=h,
        lmis=[(np.zeros(3), np.hstack([_SEL, relax])),
              (np.array([room, 0.0, room]), np.hstack([-_SEL, relax]))],
        linear_objective=np.append(np.zeros(6), 1.0),
    )
    t = settings.barrier_t0
    total = 0
    for _ in range(_MAX_OUTER):
        y, steps, _, found, _ = _center(barrier, y, t, settings, stop=lambda v: v[-1] < 0.0)
        total += steps
        if found or y[-1] < 0.0:
            return y[:6], total, STATUS_OPTIMAL
        gap = barrier.degree / t
        if y[-1] - gap > 0.0 or gap < settings.tolerance:
            return y[:6], total, STATUS_INFEASIBLE
        t *= settings.barrier_mu
    return y[:6], total, STATUS_MAX_ITER


def _strictly_feasible(z, G, h, cap) -> bool:
    if np.any(G @ z + h <= 0.0):
        return False
    eig = np.linalg.eigvalsh(np.array([[z[0], z[1]], [z[1], z[2]]]))
    return eig[0] > 0.0 and eig[1] < cap - 1.0


def _report(problem: SdpProblem, x: np.ndarray, status: str, residual: float, iterations: int,
            phase1: int) -> SdpSolution:
    ellipsoid = Ellipsoid.from_vector(x)
    lambdas = np.maximum(0.0, quadratic_rows(problem.grid) @ x + 1.0)
    nu = 0.0
    if problem.goal is not None:
        nu = max(0.0, float((quadratic_rows(problem.goal) @ x)[0]) + 1.0)
    sign, logdet = np.linalg.slogdet(ellipsoid.P)
    objective = nu - logdet + float(lambdas.sum()) if sign > 0 else math.nan
    if status != STATUS_OPTIMAL:
        lambdas = np.full(problem.n, math.inf)
    return SdpSolution(ellipsoid=ellipsoid, lambdas=lambdas, nu=nu, status=status,
                       kkt_residual=residual, iterations=iterations, objective=objective,
                       phase1_iterations=phase1)


def solve(problem: SdpProblem, settings: Optional[SolverSettings] = None) -> SdpSolution:
    """Barrier method on the shifted variables z = x - (1, 0, 1, 0, 0, 0).

    Working with P - I keeps the lower matrix bound at the origin, where the
    iterates settle once the hinge terms push both curvatures down to one.
    """
    settings = settings or SolverSettings()
    G, h = _hard_constraints(problem, settings)
    cap = settings.curvature_cap

    z = np.array([1.0, 0.0, 1.0, 0.0, 0.0, -2.5])
    phase1 = 0
    if not _strictly_feasible(z, G, h, cap):
        z, phase1, status = _phase_one(G, h, settings)
        if status != STATUS_OPTIMAL or not _strictly_feasible(z, G, h, cap):
            status = STATUS_INFEASIBLE if status == STATUS_INFEASIBLE else STATUS_MAX_ITER
            logger.debug(f"Phase I ended with status {status} after {phase1} steps")
            return _report(problem, z + _SHIFT, status, math.inf, phase1, phase1)

    soft_points = problem.grid[::settings.grid_stride]
    if problem.goal is not None:
        soft_points = np.vstack([soft_points, problem.goal.reshape(1, 2)])
    soft = quadratic_rows(soft_points)
    room = cap - 1.0
    barrier = _Barrier(
        G=G, h=h,
        lmis=[(np.zeros(3), _SEL), (np.array([room, 0.0, room]), -_SEL)],
        soft=soft,
        soft_offset=soft @ _SHIFT + 1.0,
        logdet_objective=(np.array([1.0, 0.0, 1.0]), _SEL),
    )

    t = settings.barrier_t0
    iterations = 0
    residual = math.inf
    for _ in range(_MAX_OUTER):
        z, steps, converged, _, decrement = _center(barrier, z, t, settings)
        iterations += steps
        if not converged:
            logger.debug(f"Centering stopped after {steps} Newton steps at t={t:g}")
            return _report(problem, z + _SHIFT, STATUS_MAX_ITER, residual, iterations + phase1, phase1)
        # stationarity in the local Hessian norm, and the complementarity level
        residual = max(math.sqrt(decrement), 1.0) / t
        if residual <= settings.tolerance:
            return _report(problem, z + _SHIFT, STATUS_OPTIMAL, residual, iterations + phase1, phase1)
        t *= settings.barrier_mu
    return _report(problem, z + _SHIFT, STATUS_MAX_ITER, residual, iterations + phase1, phase1)


# ── Classification / frames ──────────────────────────────────────────────────

def filter_grid(sol: SdpSolution, n: int) -> np.ndarray:
    """Feasible waypoint mask: lambda_j < 1. Anything but an optimal solve is all-infeasible."""
    if not sol.optimal:
        return np.zeros(n, dtype=bool)
    return sol.lambdas[:n] < 1.0


def to_world(sol: SdpSolution, pose: Pose) -> Ellipsoid:
    if not sol.optimal:
        raise SolverFailureError(f"cannot certify with a {sol.status} solution", status=sol.status)
    return ellipsoid_to_world(sol.ellipsoid, pose)


def objective_value(problem: SdpProblem, x: np.ndarray) -> float:
    """nu - log det P + sum lambda at the hinge-optimal slacks for a given x."""
    x = np.asarray(x, dtype=float)
    lambdas = np.maximum(0.0, quadratic_rows(problem.grid) @ x + 1.0)
    nu = 0.0 if problem.goal is None else max(0.0, float((quadratic_rows(problem.goal) @ x)[0]) + 1.0)
    sign, logdet = np.linalg.slogdet(np.array([[x[0], x[1]], [x[1], x[2]]]))
    if sign <= 0:
        return math.inf
    return nu - logdet + float(lambdas.sum())
