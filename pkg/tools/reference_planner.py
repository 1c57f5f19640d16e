"""
Near-Optimal Reference - Hybrid-A* lattice search on the fully known map
Forward and reverse arc/straight primitives over an (x, y, yaw) lattice,
a straight-line admissible heuristic, and periodic analytic Reeds-Shepp
shots toward the goal. Goal nodes (primitive entries into the goal ball and
collision-free shots) are pushed onto the open list and returned when popped,
so the result is the cheapest one the lattice can express.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from modules.collision import ObstacleSet
from modules.geometry import Pose
from modules.sensing import Environment
from modules.steering import CarSpec, RsPath, RsSegment, connect
from tools.plan_result import PlanResult, chain_poses, first_goal_entry, sample_edge

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReferenceParams:
    xy_resolution: float = 0.25
    yaw_resolution_deg: float = 10.0
    primitive_length: float = 0.5
    analytic_shot_every: int = 5
    sweep_step: float = 0.05
    max_expansions: int = 400000
    epsilon_goal: float = 0.5

    def __post_init__(self):
        if min(self.xy_resolution, self.yaw_resolution_deg, self.primitive_length, self.sweep_step) <= 0.0:
            raise ValueError(f"lattice parameters must be positive: {self}")

    @classmethod
    def from_config(cls, config: Dict[str, Any], epsilon_goal: float = 0.5) -> "ReferenceParams":
        known = cls.__dataclass_fields__.keys()
        kwargs = {k: v for k, v in config.items() if k in known}
        for k in ("analytic_shot_every", "max_expansions"):
            if k in kwargs:
                kwargs[k] = int(kwargs[k])
        return cls(epsilon_goal=float(epsilon_goal), **kwargs)

    @property
    def n_yaw(self) -> int:
        return int(round(360.0 / self.yaw_resolution_deg))


class Node(NamedTuple):
    pose: Pose
    cost: float
    parent: int
    swept: np.ndarray     # poses from the parent to this node
    goal: bool


class HybridAStarPlanner:

    def __init__(self, env: Environment, params: Optional[ReferenceParams] = None,
                 spec: Optional[CarSpec] = None, obstacles: Optional[ObstacleSet] = None):
        self.env = env
        self.params = params or ReferenceParams()
        self.spec = spec or CarSpec()
        self.obstacles = obstacles or ObstacleSet(env.all_obstacles)
        length = self.params.primitive_length
        self.primitives = [RsPath((RsSegment(kind, direction, length),), length, self.spec.min_turn_radius)
                           for direction in (1, -1) for kind in ("L", "S", "R")]

    def _cell(self, pose: Pose) -> Tuple[int, int, int]:
        p = self.params
        k = int(round((pose.theta % (2.0 * math.pi)) / math.radians(p.yaw_resolution_deg))) % p.n_yaw
        return (int(round(pose.x / p.xy_resolution)), int(round(pose.y / p.xy_resolution)), k)

    def _heuristic(self, pose: Pose, goal: np.ndarray) -> float:
        """Longer of the straight line and the Reeds-Shepp connection facing the goal, less the goal ball."""
        heading = math.atan2(goal[1] - pose.y, goal[0] - pose.x)
        shot = connect(pose, Pose(goal[0], goal[1], heading), self.spec).total_length
        return max(max(pose.distance_to(goal), shot) - self.params.epsilon_goal, 0.0)

    def _analytic_shot(self, pose: Pose, goal: np.ndarray) -> Optional[Tuple[float, np.ndarray]]:
        """Reeds-Shepp path to the goal point, truncated at the goal ball, if it is collision-free."""
        heading = math.atan2(goal[1] - pose.y, goal[0] - pose.x)
        path = connect(pose, Pose(goal[0], goal[1], heading), self.spec)
        if path.total_length <= 0.0:
            return None
        arc, swept = sample_edge(pose, path, path.total_length, self.params.sweep_step)
        entry = first_goal_entry(swept, goal, self.params.epsilon_goal)
        if entry < 0:
            return None
        swept, arc = swept[:entry + 1], arc[:entry + 1]
        if self.obstacles.hits(swept).any():
            return None
        return float(arc[-1]), swept

    def plan(self, start: Pose, goal: Sequence[float]) -> PlanResult:
        p = self.params
        goal = np.asarray(goal, dtype=float)
        if start.distance_to(goal) <= p.epsilon_goal:
            return PlanResult("reference", True, 0.0, np.array([start.as_tuple()]), 0)

        nodes: List[Node] = [Node(start, 0.0, -1, np.array([start.as_tuple()]), False)]
        best_cost: Dict[Tuple[int, int, int], float] = {self._cell(start): 0.0}
        closed = set()
        heap = [(self._heuristic(start, goal), 0, 0)]
        counter = 1
        expansions = 0

        while heap and expansions < p.max_expansions:
            _, _, idx = heapq.heappop(heap)
            node = nodes[idx]
            if node.goal:
                return self._result(nodes, idx, expansions)
            cell = self._cell(node.pose)
            if cell in closed:
                continue
            closed.add(cell)
            expansions += 1

            if p.analytic_shot_every > 0 and expansions % p.analytic_shot_every == 1:
                shot = self._analytic_shot(node.pose, goal)
                if shot is not None:
                    nodes.append(Node(node.pose, node.cost + shot[0], idx, shot[1], True))
                    heapq.heappush(heap, (node.cost + shot[0], counter, len(nodes) - 1))
                    counter += 1

            for primitive in self.primitives:
                arc, swept = sample_edge(node.pose, primitive, primitive.total_length, p.sweep_step)
                if self.obstacles.hits(swept).any():
                    continue
                entry = first_goal_entry(swept, goal, p.epsilon_goal)
                if entry >= 0:
                    cost = node.cost + float(arc[entry])
                    nodes.append(Node(node.pose, cost, idx, swept[:entry + 1], True))
                    heapq.heappush(heap, (cost, counter, len(nodes) - 1))
                    counter += 1
                    continue
                x, y, th = swept[-1]
                child = Pose(x, y, th)
                child_cell = self._cell(child)
                cost = node.cost + primitive.total_length
                if child_cell in closed or cost >= best_cost.get(child_cell, math.inf):
                    continue
                best_cost[child_cell] = cost
                nodes.append(Node(child, cost, idx, swept, False))
                heapq.heappush(heap, (cost + self._heuristic(child, goal), counter, len(nodes) - 1))
                counter += 1

        reason = "expansion cap reached" if heap else "lattice exhausted"
        logger.warning(f"Reference search failed on '{self.env.name}' after {expansions} expansions ({reason})")
        return PlanResult("reference", False, math.inf, np.zeros((0, 3)), expansions, message=reason)

    @staticmethod
    def _result(nodes: List[Node], idx: int, expansions: int) -> PlanResult:
        chain = []
        k = idx
        while k >= 0:
            chain.append(nodes[k].swept)
            k = nodes[k].parent
        poses = chain_poses(chain[::-1])
        return PlanResult("reference", True, nodes[idx].cost, poses, expansions)


def reference_optimal(env: Environment, start: Pose, goal: Sequence[float],
                      params: Optional[ReferenceParams] = None, spec: Optional[CarSpec] = None) -> PlanResult:
    return HybridAStarPlanner(env, params, spec).plan(start, goal)
