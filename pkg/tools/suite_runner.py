"""
Suite Runner - Experiment protocol and trace verification
Runs RAW, the multi-seed RRT baseline and the lattice reference on every
scenario of a suite, and re-checks saved traces from their serialized data
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from agents.orchestrator import PlannerParams, RawNavigator
from agents.waypoint_agent import PolicyWeights
from data.data_loader import Scenario, environment_from_dict
from metrics_tracker import MetricsTracker
from modules.collision import ObstacleSet
from modules.errors import RawPlannerError
from modules.geometry import (
    Pose, canonical_radii, ellipsoid_to_local, footprint, footprint_corners_batch, level_set_value, normalize_angle,
)
from modules.steering import rollout
from modules.trace_store import OUTCOME_REACHED_GOAL, StepRecord, TraceStore
from tools.analytics import ScenarioOutcome, SuiteResult
from tools.reference_planner import ReferenceParams, reference_optimal
from tools.rrt_planner import RrtParams, RRTPlanner

logger = logging.getLogger(__name__)

VERIFY_TOL = 1e-9
RADII_TOL = 1e-6
POSE_TOL = 1e-6


def _pose_gap(a: Pose, b: Pose) -> float:
    return max(abs(a.x - b.x), abs(a.y - b.y), abs(normalize_angle(a.theta - b.theta)))


@dataclass(frozen=True)
class SuiteSettings:
    """Baseline settings shared by every scenario of a suite run."""
    rrt: RrtParams = field(default_factory=RrtParams)
    rrt_seeds: Sequence[int] = tuple(range(10))
    reference: ReferenceParams = field(default_factory=ReferenceParams)
    unfiltered: bool = False
    run_baselines: bool = True
    keep_traces: bool = False
    ratio_slack: float = 0.02


def _finite_or_nan(value: Optional[float]) -> float:
    if value is None or not math.isfinite(value):
        return math.nan
    return float(value)


def run_scenario(scenario: Scenario, weights: PolicyWeights, params: PlannerParams,
                 settings: SuiteSettings) -> ScenarioOutcome:
    """RAW (or its unfiltered ablation) plus both baselines on one scenario."""
    env = scenario.environment
    variant = "raw_unfiltered" if settings.unfiltered else "raw"
    tracker = MetricsTracker()
    trace = RawNavigator(env, weights, params, filtered=not settings.unfiltered, tracker=tracker).run()

    raw_length = trace.comparison_length if trace.reached_goal else None
    outcome = ScenarioOutcome(
        scenario_id=scenario.id, suite=scenario.suite, variant=variant, raw_outcome=trace.outcome,
        raw_steps=len(trace.records), raw_path_length=trace.path_length, raw_length=_finite_or_nan(raw_length),
        step_times=trace.step_times, solve_times=trace.solve_times, error=trace.message,
        trace=trace if settings.keep_traces else None,
    )
    if settings.run_baselines:
        rrt = RRTPlanner(env, settings.rrt, params.car)
        outcome.rrt_lengths = tuple(rrt.plan(env.start, env.goal, seed).length for seed in settings.rrt_seeds)
        ref = reference_optimal(env, env.start, env.goal, settings.reference, params.car)
        outcome.reference_length = _finite_or_nan(ref.length)
    return outcome


def run_suite(scenarios: Sequence[Scenario], weights: PolicyWeights, params: PlannerParams,
              parallelism: int = 1, settings: Optional[SuiteSettings] = None,
              show_progress: bool = True) -> SuiteResult:
    """
    Run every scenario and aggregate.

    Scenarios run on a thread pool of min(parallelism, len(scenarios))
    workers. Every random draw is seeded per scenario, so the result does not
    depend on the worker count. A scenario that raises is recorded as a
    failure row and the suite continues.
    """
    settings = settings or SuiteSettings()
    if not scenarios:
        return SuiteResult.from_outcomes([])
    workers = max(1, min(int(parallelism), len(scenarios)))
    logger.info(f"Running {len(scenarios)} scenarios on {workers} workers "
                f"({'unfiltered' if settings.unfiltered else 'RAW'}, baselines {settings.run_baselines})")

    outcomes: List[ScenarioOutcome] = []
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(run_scenario, s, weights, params, settings) for s in scenarios]
        for scenario, future in tqdm(zip(scenarios, futures), total=len(futures), desc="suite",
                                     disable=not show_progress):
            try:
                outcome = future.result()
            except (RawPlannerError, ValueError, FloatingPointError) as e:
                logger.warning(f"Scenario {scenario.id} failed: {e}")
                outcome = ScenarioOutcome(scenario_id=scenario.id, suite=scenario.suite,
                                          variant="raw_unfiltered" if settings.unfiltered else "raw",
                                          raw_outcome="error", error=str(e))
            else:
                logger.info(f"Scenario {scenario.id}: {outcome.raw_outcome}, length {outcome.raw_length:.2f}")
            outcomes.append(outcome)
    result = SuiteResult.from_outcomes(outcomes)
    beaten = result.ratio_violations(settings.ratio_slack)
    if len(beaten):
        logger.warning(f"RAW beat the lattice reference by more than {settings.ratio_slack:.0%} on "
                       f"{len(beaten)} scenarios: {', '.join(beaten['scenario_id'])}")
    return result


# ── Verification ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class VerifyFailure:
    step: int           # -1 for whole-trace checks
    check: str
    detail: str


@dataclass
class VerifyReport:
    path: Path
    steps: int = 0
    outcome: str = ""
    filtered: bool = True
    checks_run: Dict[str, int] = field(default_factory=dict)
    failures: List[VerifyFailure] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def _ran(self, check: str):
        self.checks_run[check] = self.checks_run.get(check, 0) + 1

    def _fail(self, step: int, check: str, detail: str):
        self.failures.append(VerifyFailure(step, check, detail))


def _check_step(k: int, record: StepRecord, prev: Optional[StepRecord], params: PlannerParams,
                obstacles: ObstacleSet, report: VerifyReport):
    if prev is not None:
        report._ran("continuity")
        gap = _pose_gap(record.pose_before, prev.pose_after)
        if gap > POSE_TOL:
            report._fail(k, "continuity", f"pose_before is {gap:.3e} away from the previous pose_after")

    report._ran("delta_t")
    if not record.delta_t > 0.0:
        report._fail(k, "delta_t", f"delta_t = {record.delta_t}")

    traj = rollout(record.pose_before, record.path, record.delta_t, params.dt, params.car)
    report._ran("pose_after")
    drift = _pose_gap(traj.final_pose, record.pose_after)
    if drift > POSE_TOL:
        report._fail(k, "pose_after", f"re-rolled pose differs from the recorded pose by {drift:.3e}")

    report._ran("collision")
    hit = obstacles.hits(traj.poses)
    if hit.any():
        report._fail(k, "collision", f"footprint contact at t = {traj.times[int(np.argmax(hit))]:.3f} s")

    psi = record.ellipsoid
    if psi is None:
        return

    report._ran("containment")
    corners = footprint_corners_batch(np.vstack([traj.poses, [record.pose_after.as_tuple()]]))
    worst = float(np.max(level_set_value(psi, corners.reshape(-1, 2))))
    if worst > VERIFY_TOL:
        report._fail(k, "containment", f"footprint leaves the ellipsoid (level {worst:.3e})")

    report._ran("radii_identity")
    try:
        residual = canonical_radii(ellipsoid_to_local(psi, record.pose_before)).identity_residual
    except RawPlannerError as e:
        report._fail(k, "radii_identity", str(e))
    else:
        if residual > RADII_TOL:
            report._fail(k, "radii_identity", f"r1^2 - r2^2 - 1 = {residual:.3e}")

    if prev is not None:
        report._ran("handoff")
        if record.ellipsoid_prev is None or prev.ellipsoid is None or not np.allclose(
                record.ellipsoid_prev.as_vector(), prev.ellipsoid.as_vector(), rtol=0.0, atol=VERIFY_TOL):
            report._fail(k, "handoff", "ellipsoid_prev is not the previous step's ellipsoid")
    if record.ellipsoid_prev is not None:
        report._ran("overlap")
        start = footprint(record.pose_before).corners
        level_prev = float(np.max(level_set_value(record.ellipsoid_prev, start)))
        level_curr = float(np.max(level_set_value(psi, start)))
        if max(level_prev, level_curr) > VERIFY_TOL:
            report._fail(k, "overlap", f"start footprint outside the overlap (levels {level_prev:.3e}, "
                                       f"{level_curr:.3e})")


def verify(path: Path) -> VerifyReport:
    """
    Re-check a saved run from its serialized data alone.

    Every step is re-rolled from pose_before along the recorded path for
    delta_t and checked for continuity, pose agreement and footprint contact
    with the true obstacles; filtered steps are also checked for containment,
    the level-set radii identity, certificate handoff and overlap. The footer
    path length and goal claim are checked last.

    Raises:
        TraceFormatError: the file is corrupt or truncated
    """
    trace = TraceStore(path).read()
    env = environment_from_dict(trace.header["environment"], str(path))
    params = PlannerParams.from_dict(trace.header["params"])
    obstacles = ObstacleSet(env.all_obstacles)
    report = VerifyReport(path=Path(path), steps=len(trace.records), outcome=trace.footer["outcome"],
                          filtered=bool(trace.footer.get("filtered", True)))

    if trace.records:
        report._ran("start")
        if _pose_gap(trace.records[0].pose_before, env.start) > POSE_TOL:
            report._fail(0, "start", "first pose_before is not the environment start")

    prev = None
    for k, record in enumerate(trace.records):
        _check_step(k, record, prev, params, obstacles, report)
        prev = record

    report._ran("path_length")
    total = params.car.speed * sum(r.delta_t for r in trace.records)
    if abs(total - float(trace.footer["path_length"])) > 1e-6 * max(1.0, total):
        report._fail(-1, "path_length", f"footer says {trace.footer['path_length']}, steps sum to {total}")
    if report.outcome == OUTCOME_REACHED_GOAL:
        report._ran("goal")
        final = trace.records[-1].pose_after if trace.records else env.start
        if final.distance_to(env.goal) > params.epsilon_goal + POSE_TOL:
            report._fail(-1, "goal", f"final pose is {final.distance_to(env.goal):.3f} m from the goal")

    level = logging.INFO if report.passed else logging.ERROR
    logger.log(level, f"Verified {path}: {report.steps} steps, {len(report.failures)} failures")
    return report

