"""
RRT Baseline - Reeds-Shepp steered RRT on the fully known map
Uniform sampling with goal bias, nearest-neighbour extension along the
shortest Reeds-Shepp path truncated to max_extend, and footprint sweeps
against the true obstacles
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from modules.collision import ObstacleSet
from modules.geometry import Pose
from modules.sensing import Environment
from modules.steering import CarSpec, connect
from tools.plan_result import PlanResult, chain_poses, first_goal_entry, sample_edge

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RrtParams:
    iterations: int = 10000
    goal_bias: float = 0.05
    max_extend: float = 2.0
    sweep_step: float = 0.05
    epsilon_goal: float = 0.5

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be at least 1, got {self.iterations}")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError(f"goal_bias must lie in [0, 1], got {self.goal_bias}")
        if not (self.max_extend > 0.0 and self.sweep_step > 0.0):
            raise ValueError("max_extend and sweep_step must be positive")

    @classmethod
    def from_config(cls, config: Dict[str, Any], epsilon_goal: float = 0.5) -> "RrtParams":
        return cls(iterations=int(config.get("iterations", 10000)),
                   goal_bias=float(config.get("goal_bias", 0.05)),
                   max_extend=float(config.get("max_extend", 2.0)),
                   sweep_step=float(config.get("sweep_step", 0.05)),
                   epsilon_goal=float(epsilon_goal))


class RRTPlanner:
    """Single-query RRT. Node i stores its pose, parent, cost-to-come and the swept edge from its parent."""

    def __init__(self, env: Environment, params: Optional[RrtParams] = None, spec: Optional[CarSpec] = None,
                 obstacles: Optional[ObstacleSet] = None):
        self.env = env
        self.params = params or RrtParams()
        self.spec = spec or CarSpec()
        self.obstacles = obstacles or ObstacleSet(env.all_obstacles)

    def _sample(self, rng: np.random.Generator, goal: np.ndarray) -> np.ndarray:
        if rng.random() < self.params.goal_bias:
            return np.array([goal[0], goal[1], math.nan])
        xmin, ymin, xmax, ymax = self.env.bounds
        return np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax), rng.uniform(-math.pi, math.pi)])

    def plan(self, start: Pose, goal: Sequence[float], seed: int = 0) -> PlanResult:
        p = self.params
        rng = np.random.default_rng(seed)
        goal = np.asarray(goal, dtype=float)

        if start.distance_to(goal) <= p.epsilon_goal:
            return PlanResult("rrt", True, 0.0, np.array([start.as_tuple()]), 0, seed)

        positions = np.zeros((p.iterations + 1, 2))
        poses: List[Pose] = [start]
        parents: List[int] = [-1]
        costs: List[float] = [0.0]
        edges: List[np.ndarray] = [np.array([start.as_tuple()])]
        positions[0] = start.position

        for it in range(1, p.iterations + 1):
            target = self._sample(rng, goal)
            count = len(poses)
            d = positions[:count] - target[:2]
            nearest = int(np.argmin(d[:, 0] ** 2 + d[:, 1] ** 2))
            base = poses[nearest]
            heading = target[2]
            if math.isnan(heading):
                heading = math.atan2(target[1] - base.y, target[0] - base.x)
            path = connect(base, Pose(target[0], target[1], heading), self.spec)
            length = min(path.total_length, p.max_extend)
            if length <= 1e-9:
                continue

            _, swept = sample_edge(base, path, length, p.sweep_step)
            if self.obstacles.hits(swept).any():
                continue

            entry = first_goal_entry(swept, goal, p.epsilon_goal)
            if entry >= 0:
                arc = length * entry / (len(swept) - 1)
                chain = self._chain(parents, edges, nearest) + [swept[:entry + 1]]
                total = costs[nearest] + arc
                logger.debug(f"RRT seed {seed}: goal after {it} iterations, length {total:.2f}")
                return PlanResult("rrt", True, total, chain_poses(chain), it, seed)

            x, y, th = swept[-1]
            poses.append(Pose(x, y, th))
            parents.append(nearest)
            costs.append(costs[nearest] + length)
            edges.append(swept)
            positions[count] = (x, y)

        logger.debug(f"RRT seed {seed}: no path after {p.iterations} iterations ({len(poses)} nodes)")
        return PlanResult("rrt", False, math.inf, np.zeros((0, 3)), p.iterations, seed,
                          message="iteration cap reached")

    @staticmethod
    def _chain(parents: List[int], edges: List[np.ndarray], node: int) -> List[np.ndarray]:
        chain = []
        while node >= 0:
            chain.append(edges[node])
            node = parents[node]
        return chain[::-1]


def rrt_plan(env: Environment, start: Pose, goal: Sequence[float], iterations: Optional[int] = None,
             seed: int = 0, params: Optional[RrtParams] = None, spec: Optional[CarSpec] = None) -> PlanResult:
    params = params or RrtParams()
    if iterations is not None:
        params = replace(params, iterations=int(iterations))
    return RRTPlanner(env, params, spec).plan(start, goal, seed)


def rrt_plan_seeds(env: Environment, start: Pose, goal: Sequence[float], seeds: Sequence[int],
                   params: Optional[RrtParams] = None, spec: Optional[CarSpec] = None) -> List[PlanResult]:
    planner = RRTPlanner(env, params, spec)
    return [planner.plan(start, goal, seed) for seed in seeds]
