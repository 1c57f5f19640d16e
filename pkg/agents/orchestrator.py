"""
RAW Orchestrator - The online planning loop
Coordinates sensing, the separating-ellipsoid filter, the waypoint agent and
the car for one step at a time, and runs the safety monitor on every step
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Optional, Tuple

import numpy as np

from agents.waypoint_agent import Features, PolicyWeights, features, q_values, select_waypoint
from metrics_tracker import MetricsTracker
from modules.collision import ObstacleSet
from modules.errors import (
    ContainmentError, NoFeasibleWaypointError, RawPlannerError, SafetyViolationError, SolverFailureError,
    StartInfeasibleError,
)
from modules.geometry import (
    Ellipsoid, Pose, canonical_radii, ellipsoid_to_local, footprint, footprint_corners_batch,
    footprint_inside, in_overlap, level_set_value,
)
from modules.sdp_filter import (
    STATUS_INFEASIBLE, SdpSolution, SolverSettings, build_problem, filter_grid, solve, to_world,
)
from modules.sensing import (
    Environment, FovGrid, FovParams, PointCloud, PotentialMap, blocked_flags, goal_in_fov,
    make_grid, potential_map, sense, visible_obstacles,
)
from modules.steering import CarSpec, RsPath, Trajectory, connect, max_safe_duration, rollout
from modules.trace_store import (
    OUTCOME_MAX_STEPS, OUTCOME_NO_FEASIBLE_WAYPOINT, OUTCOME_REACHED_GOAL,
    OUTCOME_SAFETY_VIOLATION, OUTCOME_SOLVER_FAILURE, RunTrace, SafetyChecks, StepRecord,
)

logger = logging.getLogger(__name__)

LOCAL_R_TOL = 1e-9


@dataclass(frozen=True)
class PlannerParams:
    fov: FovParams = field(default_factory=FovParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    car: CarSpec = field(default_factory=CarSpec)
    epsilon_goal: float = 0.5
    dt_cap: float = 1.0
    dt: float = 0.01
    safety_factor: float = 0.9
    max_steps: int = 5000
    sample_step: float = 0.1
    potential_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon_goal > 0.0:
            raise ValueError(f"epsilon_goal must be positive, got {self.epsilon_goal}")
        if not (self.dt > 0.0 and self.dt_cap > 0.0):
            raise ValueError("dt and dt_cap must be positive")
        if not 0.0 < self.safety_factor <= 1.0:
            raise ValueError(f"safety_factor must lie in (0, 1], got {self.safety_factor}")

    @classmethod
    def from_config(cls, fov_config: Dict[str, Any], solver_config: Dict[str, Any],
                    car_config: Dict[str, Any], steering_config: Dict[str, Any],
                    sensing_config: Dict[str, Any], planner_config: Dict[str, Any]) -> "PlannerParams":
        return cls(
            fov=FovParams.from_config(fov_config),
            solver=SolverSettings.from_config(solver_config),
            car=CarSpec.from_config(car_config),
            epsilon_goal=float(planner_config.get("epsilon_goal", 0.5)),
            dt_cap=float(steering_config.get("dt_cap", 1.0)),
            dt=float(steering_config.get("dt", 0.01)),
            safety_factor=float(steering_config.get("safety_factor", 0.9)),
            max_steps=int(planner_config.get("max_steps", 5000)),
            sample_step=float(sensing_config.get("sample_step", 0.1)),
            potential_sigma=float(sensing_config.get("potential_sigma", 0.5)),
            seed=int(planner_config.get("seed", 0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PlannerParams":
        data = dict(data)
        return cls(fov=FovParams(**data.pop("fov")), solver=SolverSettings(**data.pop("solver")),
                   car=CarSpec(**data.pop("car")), **data)


@dataclass(frozen=True)
class Observation:
    """Everything the agent sees at one pose, plus the certificate when filtering."""
    pose: Pose
    cloud: PointCloud
    candidates: FovGrid          # the N grid points, then the goal if it is in view
    n_grid: int
    goal_index: Optional[int]
    potential: PotentialMap
    blocked: np.ndarray
    phi: Features
    feasible: np.ndarray
    solution: Optional[SdpSolution]
    ellipsoid: Optional[Ellipsoid]   # world frame
    solve_time: float = 0.0

    @property
    def lambda_count_infeasible(self) -> int:
        return int(self.n_grid - np.count_nonzero(self.feasible[:self.n_grid]))


def with_goal_candidate(grid: FovGrid, pose: Pose, goal: Tuple[float, float],
                        fov: FovParams) -> Tuple[FovGrid, Optional[int]]:
    if not goal_in_fov(pose, goal, fov):
        return grid, None
    g = np.asarray(goal, dtype=float).reshape(1, 2)
    return FovGrid(points=np.vstack([grid.points, g]), local=np.vstack([grid.local, pose.to_local(g)]),
                   polar_index=np.vstack([grid.polar_index, [[-1, -1]]])), grid.n


def rollout_checks(traj: Trajectory, psi: Ellipsoid, psi_prev: Optional[Ellipsoid], pose: Pose,
                   delta_t: float) -> SafetyChecks:
    """Containment of every rollout sample, handoff overlap, and the level-set identity."""
    corners = footprint_corners_batch(traj.poses)
    inside_curr = bool(np.all(level_set_value(psi, corners.reshape(-1, 2)) <= 0.0))
    start = footprint(pose)
    inside_prev = True if psi_prev is None else footprint_inside(psi_prev, start, 0.0)
    overlap = True if psi_prev is None else in_overlap(psi_prev, psi, start)
    try:
        residual = canonical_radii(ellipsoid_to_local(psi, pose)).identity_residual
    except RawPlannerError:
        residual = math.inf
    return SafetyChecks(inside_prev=inside_prev, inside_curr=inside_curr, overlap=overlap,
                        radii_identity_residual=residual, delta_t_positive=delta_t > 0.0)


class RawNavigator:
    """
    One navigation agent bound to an environment and a weight vector.

    observe() runs sense -> grid -> potential/blocked/features -> SDP -> filter,
    execute() runs connect -> max_safe_duration -> rollout and the safety
    monitor. step() is the greedy composition of the two.
    """

    def __init__(self, env: Environment, weights: PolicyWeights, params: PlannerParams,
                 filtered: bool = True, tracker: Optional[MetricsTracker] = None):
        self.env = env
        self.weights = weights
        self.params = params
        self.filtered = filtered
        self.tracker = tracker or MetricsTracker()
        self.obstacles = ObstacleSet(env.all_obstacles)
        self.goal = np.asarray(env.goal, dtype=float)

    # ── perception and filtering ─────────────────────────────────────────────

    def observe(self, pose: Pose) -> Observation:
        p = self.params
        cloud = sense(self.env, pose, p.fov, p.sample_step)
        grid = make_grid(pose, p.fov)
        candidates, goal_index = with_goal_candidate(grid, pose, self.env.goal, p.fov)
        V = potential_map(candidates, cloud, p.potential_sigma)
        zeta = blocked_flags(candidates, pose, visible_obstacles(self.env, cloud))
        phi = features(candidates, pose, self.env.goal, V, zeta, p.fov.r_max)

        solution, ellipsoid, solve_time = None, None, 0.0
        if self.filtered:
            problem = build_problem(pose, cloud.points, grid.points, self.goal)
            started = time.perf_counter()
            solution = solve(problem, p.solver)
            solve_time = time.perf_counter() - started
            logger.debug(f"SDP at {pose}: {solution.status}, {solution.iterations} Newton steps, "
                         f"kkt {solution.kkt_residual:.2e}")
            if solution.status == STATUS_INFEASIBLE:
                # nothing separates the footprint from the cloud
                raise NoFeasibleWaypointError(f"SDP infeasible at {pose}")
            if not solution.optimal:
                raise SolverFailureError(f"SDP returned {solution.status} at {pose}", status=solution.status)
            if solution.ellipsoid.r > -1.0 + LOCAL_R_TOL:
                raise SafetyViolationError(f"local r = {solution.ellipsoid.r} > -1", check="local_r")
            feasible = filter_grid(solution, grid.n)
            if goal_index is not None:
                feasible = np.append(feasible, solution.nu < 1.0)
            ellipsoid = to_world(solution, pose)
        else:
            feasible = np.ones(candidates.n, dtype=bool)

        return Observation(pose=pose, cloud=cloud, candidates=candidates, n_grid=grid.n,
                           goal_index=goal_index, potential=V, blocked=zeta, phi=phi, feasible=feasible,
                           solution=solution, ellipsoid=ellipsoid, solve_time=solve_time)

    def goal_distances(self, obs: Observation) -> np.ndarray:
        return np.linalg.norm(obs.candidates.points - self.goal, axis=1)

    def choose(self, obs: Observation, explore_rate: float = 0.0,
               rng: Optional[np.random.Generator] = None) -> int:
        q = q_values(self.weights, obs.phi)
        return select_waypoint(q, obs.feasible, explore_rate, rng, self.goal_distances(obs))

    # ── execution and safety monitor ─────────────────────────────────────────

    def execute(self, pose: Pose, obs: Observation, index: int,
                prev_ellipsoid: Optional[Ellipsoid] = None) -> Tuple[StepRecord, Pose, Trajectory]:
        p = self.params
        if not obs.feasible[index]:
            raise SafetyViolationError(f"candidate {index} is not in the feasible set", check="feasible")
        waypoint = obs.candidates.points[index]
        at_goal = obs.goal_index is not None and index == obs.goal_index
        bearing = math.atan2(waypoint[1] - pose.y, waypoint[0] - pose.x)
        path: RsPath = connect(pose, Pose(waypoint[0], waypoint[1], bearing), p.car)

        delta_t = max_safe_duration(pose, path, obs.ellipsoid, waypoint, cap=p.dt_cap, dt=p.dt,
                                    safety_factor=p.safety_factor, dr=p.fov.dr,
                                    waypoint_is_goal=at_goal, spec=p.car)
        traj = rollout(pose, path, delta_t, p.dt, p.car)
        new_pose = traj.final_pose
        min_clearance = float(self.obstacles.clearance(traj.poses).min())

        checks = None
        if self.filtered:
            checks = rollout_checks(traj, obs.ellipsoid, prev_ellipsoid, pose, delta_t)
        record = StepRecord(
            pose_before=pose, pose_after=new_pose, ellipsoid=obs.ellipsoid, ellipsoid_prev=prev_ellipsoid,
            waypoint=(float(waypoint[0]), float(waypoint[1])), waypoint_index=int(index),
            delta_t=float(delta_t), path=path, lambda_count_infeasible=obs.lambda_count_infeasible,
            safety_checks=checks, min_clearance=min_clearance, solve_time=obs.solve_time,
        )

        if checks is not None and not checks.passed:
            raise SafetyViolationError(f"safety checks failed at {pose}: {checks.failed_checks()}",
                                       check=",".join(checks.failed_checks()), record=record)
        hit = self.obstacles.hits(traj.poses)
        if hit.any():
            k = int(np.argmax(hit))
            raise SafetyViolationError(f"footprint contact at t={traj.times[k]:.2f}s from {pose}",
                                       check="collision", record=record)
        if self.filtered and not delta_t > 0.0:
            raise SafetyViolationError(f"zero execution time at {pose}", check="delta_t", record=record)
        return record, new_pose, traj

    def step(self, pose: Pose, prev_ellipsoid: Optional[Ellipsoid] = None) -> Tuple[StepRecord, Pose, Trajectory]:
        step_id = self.tracker.start_step()
        try:
            obs = self.observe(pose)
            self.tracker.add_phase(step_id, "solve", obs.solve_time)
            index = self.choose(obs)
            record, new_pose, traj = self.execute(pose, obs, index, prev_ellipsoid)
        except RawPlannerError as e:
            self.tracker.end_step(step_id, success=False, error=str(e))
            raise
        elapsed = self.tracker.end_step(step_id)
        return replace(record, step_time=elapsed), new_pose, traj

    # ── full run ─────────────────────────────────────────────────────────────

    def run(self) -> RunTrace:
        p = self.params
        trace = RunTrace(filtered=self.filtered)
        pose = self.env.start
        prev: Optional[Ellipsoid] = None
        travelled = 0.0
        started = time.perf_counter()
        label = "RAW" if self.filtered else "unfiltered"
        logger.info(f"{label} run on '{self.env.name}' from {pose.as_tuple()} to {self.env.goal}")

        if pose.distance_to(self.goal) <= p.epsilon_goal:
            trace.comparison_length = 0.0
        for _ in range(p.max_steps):
            if pose.distance_to(self.goal) <= p.epsilon_goal:
                trace.outcome = OUTCOME_REACHED_GOAL
                break
            try:
                record, pose, traj = self.step(pose, prev)
            except NoFeasibleWaypointError as e:
                logger.warning(f"{label} run stopped, no feasible waypoint: {e}")
                trace.outcome, trace.message = OUTCOME_NO_FEASIBLE_WAYPOINT, str(e)
                break
            except SolverFailureError as e:
                logger.warning(f"{label} run stopped, solver failure: {e}")
                trace.outcome, trace.message = OUTCOME_SOLVER_FAILURE, str(e)
                break
            except (SafetyViolationError, StartInfeasibleError, ContainmentError) as e:
                logger.error(f"{label} run safety violation: {e}")
                if getattr(e, "record", None) is not None:
                    trace.records.append(e.record)
                    travelled += p.car.speed * e.record.delta_t
                trace.outcome, trace.message = OUTCOME_SAFETY_VIOLATION, str(e)
                break

            if trace.comparison_length is None:
                near = np.hypot(traj.poses[:, 0] - self.goal[0], traj.poses[:, 1] - self.goal[1]) <= p.epsilon_goal
                if near.any():
                    trace.comparison_length = travelled + p.car.speed * float(traj.times[int(np.argmax(near))])
            travelled += p.car.speed * record.delta_t
            trace.records.append(record)
            prev = record.ellipsoid
        else:
            trace.outcome = (OUTCOME_REACHED_GOAL if pose.distance_to(self.goal) <= p.epsilon_goal
                             else OUTCOME_MAX_STEPS)

        trace.path_length = travelled
        trace.wall_time = time.perf_counter() - started
        logger.info(f"{label} run on '{self.env.name}': {trace.outcome} after {len(trace.records)} steps, "
                    f"length {trace.path_length:.2f} m, {self.tracker.format_summary()}")
        return trace


# ── Functional entry points ──────────────────────────────────────────────────

def raw_step(env: Environment, pose: Pose, weights: PolicyWeights, params: PlannerParams,
             prev_ellipsoid: Optional[Ellipsoid] = None) -> Tuple[StepRecord, Pose]:
    record, new_pose, _ = RawNavigator(env, weights, params).step(pose, prev_ellipsoid)
    return record, new_pose


def raw_run(env: Environment, weights: PolicyWeights, params: PlannerParams) -> RunTrace:
    return RawNavigator(env, weights, params, filtered=True).run()


def raw_run_unfiltered(env: Environment, weights: PolicyWeights, params: PlannerParams) -> RunTrace:
    return RawNavigator(env, weights, params, filtered=False).run()
