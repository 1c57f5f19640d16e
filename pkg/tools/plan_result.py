"""
Baseline Plan Results
Shared result type and path-sampling helpers for the fully-known-map planners
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from modules.geometry import Pose
from modules.steering import RsPath, poses_along


@dataclass
class PlanResult:
    """Outcome of a baseline planner. `length` is truncated at the first entry into the goal ball."""
    planner: str
    success: bool
    length: float = math.inf
    poses: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    iterations: int = 0
    seed: Optional[int] = None
    message: str = ""

    @property
    def waypoints(self) -> np.ndarray:
        return self.poses[:, :2]


def sample_edge(start: Pose, path: RsPath, length: float, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """Arc positions every `step` up to `length` (inclusive) and the poses there."""
    n = max(1, int(math.ceil(length / step)))
    arc = np.linspace(0.0, length, n + 1)
    return arc, poses_along(start, path, arc)


def first_goal_entry(poses: np.ndarray, goal: Sequence[float], epsilon: float) -> int:
    """Index of the first pose within epsilon of the goal, or -1."""
    near = np.hypot(poses[:, 0] - goal[0], poses[:, 1] - goal[1]) <= epsilon
    return int(np.argmax(near)) if near.any() else -1


def chain_poses(edges: List[np.ndarray]) -> np.ndarray:
    """Concatenate per-edge pose samples, dropping each duplicated joint."""
    if not edges:
        return np.zeros((0, 3))
    parts = [edges[0]] + [e[1:] for e in edges[1:]]
    return np.vstack(parts)
