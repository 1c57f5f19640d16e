"""
Waypoint Agent - Linear-value waypoint selection over the filtered grid
Per-candidate features, the step reward, Q = <phi, w>, epsilon-greedy choice
restricted to feasible candidates, and the plain-text weights file
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np

from modules.errors import DimensionMismatchError, NoFeasibleWaypointError
from modules.geometry import Pose
from modules.sensing import FovGrid, PotentialMap

logger = logging.getLogger(__name__)

FEATURE_NAMES = ("potential", "goal_progress", "heading_alignment", "blocked", "bias")
N_FEATURES = len(FEATURE_NAMES)

# negative on danger and blocked, positive on progress and alignment
HAND_SET_WEIGHTS = (-2.0, 3.0, 0.5, -4.0, 0.0)

TIE_TOL = 1e-12


# ── Features ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Features:
    """Row j is phi_j = (V_j, g1_j, g2_j, zeta_j, 1)."""
    matrix: np.ndarray

    def __len__(self) -> int:
        return int(len(self.matrix))

    @property
    def potential(self) -> np.ndarray:
        return self.matrix[:, 0]

    @property
    def goal_progress(self) -> np.ndarray:
        return self.matrix[:, 1]

    @property
    def heading_alignment(self) -> np.ndarray:
        return self.matrix[:, 2]

    @property
    def blocked(self) -> np.ndarray:
        return self.matrix[:, 3]

    def row(self, j: int) -> np.ndarray:
        return self.matrix[j]


def features(grid: FovGrid, pose: Pose, goal: Sequence[float], V: PotentialMap, zeta: np.ndarray,
             r_max: float) -> Features:
    """
    Build the feature matrix for every candidate.

    g1 is the goal-distance reduction normalised by r_max and clamped to
    [-1, 1]; g2 is the cosine between the heading and the direction to the
    candidate.
    """
    points = np.asarray(grid.points, dtype=float)
    values = np.asarray(V.values, dtype=float)
    zeta = np.asarray(zeta)
    if not (len(points) == len(values) == len(zeta)):
        raise DimensionMismatchError(
            f"grid ({len(points)}), potential ({len(values)}) and blocked flags ({len(zeta)}) differ in length")
    g = np.asarray(goal, dtype=float)
    z = pose.position

    progress = (np.linalg.norm(z - g) - np.linalg.norm(points - g, axis=1)) / r_max
    g1 = np.clip(progress, -1.0, 1.0)

    d = points - z
    norm = np.hypot(d[:, 0], d[:, 1])
    heading = np.array([math.cos(pose.theta), math.sin(pose.theta)])
    with np.errstate(invalid="ignore", divide="ignore"):
        g2 = np.where(norm > 0.0, (d @ heading) / norm, 1.0)
    g2 = np.clip(g2, -1.0, 1.0)

    matrix = np.column_stack([values, g1, g2, zeta.astype(float), np.ones(len(points))])
    return Features(matrix=matrix)


# ── Reward ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class RewardParams:
    alpha1: float = 200.0
    goal_bonus: float = 500.0
    step_penalty: float = -5.0
    block_penalty: float = -1000.0

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "RewardParams":
        return cls(**{k: float(config[k]) for k in ("alpha1", "goal_bonus", "step_penalty", "block_penalty")
                      if k in config})

    @property
    def bounds(self):
        return (self.block_penalty - self.alpha1 + self.step_penalty, self.goal_bonus)


def reward(zeta_j: float, V_j: float, waypoint_at_goal: bool, p: Optional[RewardParams] = None) -> float:
    p = p or RewardParams()
    terminal_term = p.goal_bonus if waypoint_at_goal else p.step_penalty
    return float(p.block_penalty * float(zeta_j) - p.alpha1 * float(V_j) + terminal_term)


# ── Weights ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class PolicyWeights:
    w: np.ndarray
    seed: int = 0
    episodes: int = 0
    suite: str = "hand-set"
    extra: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)):
            raise ValueError(f"weights must be finite, got {w}")
        object.__setattr__(self, "w", w)

    @property
    def k(self) -> int:
        return int(len(self.w))

    @property
    def trained(self) -> bool:
        return self.episodes > 0

    @classmethod
    def hand_set(cls) -> "PolicyWeights":
        return cls(w=np.array(HAND_SET_WEIGHTS), seed=0, episodes=0, suite="hand-set")

    def to_dict(self) -> Dict[str, Any]:
        return {"w": [float(v) for v in self.w], "seed": self.seed, "episodes": self.episodes,
                "suite": self.suite}

    def save(self, path: Path) -> Path:
        """Line 1 = k, line 2 = weights, then `key value` metadata lines."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [str(self.k), " ".join(repr(float(v)) for v in self.w),
                 f"seed {self.seed}", f"episodes {self.episodes}", f"suite {self.suite}"]
        lines += [f"{k} {v}" for k, v in sorted(self.extra.items())]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info(f"Saved {self.k} weights to {path}")
        return path

    @classmethod
    def load(cls, path: Path) -> "PolicyWeights":
        path = Path(path)
        lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        if len(lines) < 2:
            raise ValueError(f"{path}: expected a dimension line and a weights line")
        try:
            k = int(lines[0])
            w = np.array([float(tok) for tok in lines[1].split()])
        except ValueError as e:
            raise ValueError(f"{path}: {e}") from e
        if len(w) != k:
            raise DimensionMismatchError(f"{path}: header says k={k} but line 2 has {len(w)} values")
        meta: Dict[str, str] = {}
        for ln in lines[2:]:
            key, _, value = ln.partition(" ")
            meta[key] = value.strip()
        return cls(w=w, seed=int(meta.pop("seed", 0)), episodes=int(meta.pop("episodes", 0)),
                   suite=meta.pop("suite", "unknown"), extra=meta)


# ── Inference ────────────────────────────────────────────────────────────────

def q_values(w: PolicyWeights, phi: Features) -> np.ndarray:
    if phi.matrix.shape[1] != w.k:
        raise DimensionMismatchError(f"weights have k={w.k} but features have {phi.matrix.shape[1]} columns")
    return phi.matrix @ w.w


def select_waypoint(q: np.ndarray, feasible: np.ndarray, explore_rate: float = 0.0,
                    rng: Optional[np.random.Generator] = None,
                    goal_distance: Optional[np.ndarray] = None) -> int:
    """
    Greedy over feasible candidates, uniform random feasible with probability explore_rate.

    Ties within TIE_TOL go to the candidate nearest the goal, then the lowest index.
    """
    q = np.asarray(q, dtype=float)
    feasible = np.asarray(feasible, dtype=bool)
    if len(q) != len(feasible):
        raise DimensionMismatchError(f"{len(q)} values for {len(feasible)} feasibility flags")
    idx = np.flatnonzero(feasible)
    if len(idx) == 0:
        raise NoFeasibleWaypointError(f"all {len(feasible)} waypoint candidates were filtered out")

    if explore_rate > 0.0:
        rng = rng if rng is not None else np.random.default_rng()
        if rng.random() < explore_rate:
            return int(rng.choice(idx))

    best = q[idx].max()
    ties = idx[q[idx] >= best - TIE_TOL * max(1.0, abs(best))]
    if len(ties) == 1 or goal_distance is None:
        return int(ties[0])
    dist = np.asarray(goal_distance, dtype=float)[ties]
    return int(ties[np.lexsort((ties, dist))[0]])


def td_update(w: np.ndarray, phi: np.ndarray, reward_value: float, next_max_q: float, alpha: float,
              gamma: float, terminal: bool) -> np.ndarray:
    """One-step Q-learning update for a linear value function."""
    w = np.asarray(w, dtype=float)
    phi = np.asarray(phi, dtype=float)
    target = reward_value if terminal else reward_value + gamma * next_max_q
    return w + alpha * (target - float(phi @ w)) * phi
