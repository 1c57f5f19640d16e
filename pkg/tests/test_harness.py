"""
Harness Tests
Environment files, scenario placement, suite tables, traces, verification
and rendering
"""

import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from agents.orchestrator import PlannerParams, raw_run
from agents.waypoint_agent import PolicyWeights
from config.config import ENV_DIR, HARNESS_CONFIG
from data.data_loader import (
    build_suite, environment_from_dict, environment_to_dict, generate_scenarios, load_environment,
)
from modules.errors import EnvironmentFileError, TraceFormatError
from modules.geometry import Ellipsoid, ellipsoid_to_world
from modules.sensing import FovParams
from modules.trace_store import OUTCOME_MAX_STEPS, RunTrace, TraceStore
from tools.analytics import COLUMNS, ScenarioOutcome, SuiteResult
import tools.suite_runner as suite_runner
from tools.suite_runner import SuiteSettings, run_suite, verify
from tools.trace_renderer import render_svg


def minimal_env(**overrides):
    data = {"bounds": [0, 0, 10, 10], "start": {"x": 2, "y": 5}, "goal": {"x": 8, "y": 5}}
    data.update(overrides)
    return data


@pytest.fixture
def params():
    fov = FovParams(r_max=3.0, dr=0.5, theta_max=30.0, dtheta=10.0, proximity_radius=1.8)
    return PlannerParams(fov=fov, max_steps=3)


@pytest.fixture
def weights():
    return PolicyWeights.hand_set()


@pytest.fixture
def empty_env():
    return load_environment(ENV_DIR / "empty.json")


@pytest.fixture
def saved_trace(empty_env, weights, params, tmp_path):
    trace = raw_run(empty_env, weights, params)
    path = tmp_path / "run.jsonl"
    TraceStore(path).write(trace, environment_to_dict(empty_env), params.to_dict(), weights.to_dict())
    return path, trace


def rewrite_step(path: Path, step: int, change):
    lines = path.read_text(encoding="utf-8").splitlines()
    record = json.loads(lines[step + 1])
    change(record)
    lines[step + 1] = json.dumps(record, sort_keys=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestEnvironmentFiles:
    """Schema validation and error locations"""

    def test_minimal_file(self):
        env = environment_from_dict(minimal_env())
        assert env.obstacles == ()
        assert env.name == "custom"
        assert env.start.theta == 0.0

    def test_two_vertex_polygon(self):
        data = minimal_env(obstacles=[{"type": "polygon", "vertices": [[4, 4], [5, 5]]}])
        with pytest.raises(EnvironmentFileError) as info:
            environment_from_dict(data, "bad.json")
        assert info.value.location.startswith("obstacles.0")

    def test_start_inside_obstacle(self):
        data = minimal_env(obstacles=[{"type": "circle", "center": [2, 5], "radius": 1.0}])
        with pytest.raises(EnvironmentFileError) as info:
            environment_from_dict(data)
        assert info.value.location == "start"

    def test_goal_outside_bounds(self):
        with pytest.raises(EnvironmentFileError) as info:
            environment_from_dict(minimal_env(goal={"x": 12, "y": 5}))
        assert info.value.location == "goal"

    def test_unknown_field(self):
        with pytest.raises(EnvironmentFileError):
            environment_from_dict(minimal_env(colour="red"))

    def test_json_syntax_error(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"bounds": [0, 0, 10, 10],\n  "start": }', encoding="utf-8")
        with pytest.raises(EnvironmentFileError) as info:
            load_environment(path)
        assert info.value.location.startswith("line 2")

    def test_missing_file(self, tmp_path):
        with pytest.raises(EnvironmentFileError):
            load_environment(tmp_path / "nope.json")

    def test_shipped_environments_load(self):
        for name in ("empty", "convex", "arbitrary", "corridors", "circles"):
            env = load_environment(ENV_DIR / f"{name}.json")
            assert env.validation_errors() == []

    def test_dict_form(self, empty_env):
        again = environment_from_dict(environment_to_dict(empty_env))
        assert again.bounds == empty_env.bounds
        assert again.goal == empty_env.goal

    def test_wall_thickness_default(self):
        env = environment_from_dict(minimal_env(), wall_thickness=0.8)
        assert env.wall_thickness == 0.8
        south = env.walls[0]
        assert min(v[1] for v in south.vertices) == pytest.approx(-0.8)

    def test_file_wall_thickness_wins(self):
        env = environment_from_dict(minimal_env(wall_thickness=0.3), wall_thickness=0.8)
        assert env.wall_thickness == 0.3


class TestScenarios:
    """Seeded start/goal placement"""

    def test_deterministic(self, empty_env):
        a = generate_scenarios(empty_env, 5, seed=3)
        b = generate_scenarios(empty_env, 5, seed=3)
        assert [(s.start, s.goal) for s in a] == [(s.start, s.goal) for s in b]
        assert [s.id for s in a] == [f"custom-{k:03d}" for k in range(5)]

    def test_placement_rules(self, empty_env):
        for s in generate_scenarios(empty_env, 10, seed=11):
            assert s.start.distance_to(s.goal) >= 5.0
            assert s.environment.start == s.start
            heading = math.atan2(s.goal[1] - s.start.y, s.goal[0] - s.start.x)
            assert s.start.theta == pytest.approx(heading)
            x0, y0, x1, y1 = empty_env.scenario_regions["goal"]
            assert x0 <= s.goal[0] <= x1 and y0 <= s.goal[1] <= y1

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            build_suite("mazes", HARNESS_CONFIG, ENV_DIR)

    def test_named_suite(self):
        config = dict(HARNESS_CONFIG, suites={"convex": {"file": "convex.json", "count": 2}})
        scenarios = build_suite("convex", config, ENV_DIR)
        assert [s.suite for s in scenarios] == ["convex", "convex"]


class TestSuiteResult:
    """Comparison table and its CSV"""

    def outcome(self, sid: str, rrt=(10.5, math.inf), raw=12.0, ref=11.0) -> ScenarioOutcome:
        return ScenarioOutcome(scenario_id=sid, suite="convex", raw_outcome="reached_goal", raw_steps=14,
                               raw_path_length=12.4, raw_length=raw, rrt_lengths=rrt, reference_length=ref,
                               step_times=[0.1, 0.3], solve_times=[0.05, 0.07])

    def test_empty_suite_csv(self, tmp_path):
        path = SuiteResult.from_outcomes([]).write_csv(tmp_path / "empty.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines == [",".join(COLUMNS)]

    def test_single_scenario(self, tmp_path):
        result = SuiteResult.from_outcomes([self.outcome("convex-000")])
        row = result.table.iloc[0]
        assert row["rrt_success"] == 1
        assert row["rrt_mean"] == pytest.approx(10.5)
        assert row["ratio_raw_over_ref"] == pytest.approx(12.0 / 11.0)
        assert not row["raw_beats_rrt_mean"]
        path = result.write_csv(tmp_path / "one.csv")
        assert len(path.read_text(encoding="utf-8").splitlines()) == 2

    def test_csv_round_trip(self, tmp_path):
        result = SuiteResult.from_outcomes([self.outcome("convex-001", rrt=(14.0, 13.0), ref=math.nan),
                                            self.outcome("convex-000")])
        path = result.write_csv(tmp_path / "suite.csv")
        assert SuiteResult.read_csv(path).equals(result)
        assert SuiteResult.timing_path(path).exists()
        assert SuiteResult.summary_path(path).exists()

    def test_rows_sorted_by_rrt_mean(self):
        result = SuiteResult.from_outcomes([self.outcome("b", rrt=(20.0,)), self.outcome("a", rrt=()),
                                            self.outcome("c", rrt=(9.0,))])
        assert list(result.table["scenario_id"]) == ["c", "b", "a"]

    def test_summary(self):
        summary = SuiteResult.from_outcomes([self.outcome("x"), self.outcome("y", raw=10.0)]).summary()
        row = summary.iloc[0]
        assert row["scenarios"] == 2
        assert row["raw_success"] == 2
        assert row["rrt_success_rate"] == pytest.approx(0.5)
        assert row["raw_beats_rrt_share"] == pytest.approx(0.5)
        assert row["step_time_mean"] == pytest.approx(0.2)

    def test_ratio_violations(self):
        result = SuiteResult.from_outcomes([self.outcome("x", raw=10.0, ref=11.0)])
        assert len(result.ratio_violations(0.02)) == 1


class TestSuiteRunner:
    """Whole-suite protocol"""

    def test_worker_count_does_not_change_results(self, empty_env, weights, params):
        scenarios = generate_scenarios(empty_env, 2, seed=1)
        settings = SuiteSettings(run_baselines=False)
        serial = run_suite(scenarios, weights, params, 1, settings, show_progress=False)
        parallel = run_suite(scenarios, weights, params, 2, settings, show_progress=False)
        assert len(serial) == 2
        assert serial.equals(parallel)
        assert set(serial.table["raw_outcome"]) == {OUTCOME_MAX_STEPS}

    def test_empty_suite(self, weights, params):
        assert len(run_suite([], weights, params, show_progress=False)) == 0

    def test_short_raw_run_flags_the_reference(self, empty_env, weights, params, monkeypatch, caplog):
        def beats_reference(scenario, *_):
            return ScenarioOutcome(scenario_id=scenario.id, suite="custom", raw_outcome="reached_goal",
                                   raw_steps=3, raw_path_length=10.0, raw_length=10.0, rrt_lengths=(12.0,),
                                   reference_length=11.0)

        monkeypatch.setattr(suite_runner, "run_scenario", beats_reference)
        scenarios = generate_scenarios(empty_env, 2, seed=1)
        with caplog.at_level(logging.WARNING, logger="tools.suite_runner"):
            result = run_suite(scenarios, weights, params, 1, SuiteSettings(ratio_slack=0.02), show_progress=False)
        assert len(result.ratio_violations(0.02)) == 2
        assert "beat the lattice reference" in caplog.text
        caplog.clear()
        with caplog.at_level(logging.WARNING, logger="tools.suite_runner"):
            run_suite(scenarios, weights, params, 1, SuiteSettings(ratio_slack=0.2), show_progress=False)
        assert "beat the lattice reference" not in caplog.text


class TestTraceStore:
    """JSON Lines traces"""

    def test_read_back(self, saved_trace):
        path, trace = saved_trace
        stored = TraceStore(path).read()
        assert len(stored.records) == len(trace.records) == 3
        assert stored.footer["outcome"] == OUTCOME_MAX_STEPS
        assert stored.records[1].pose_before == trace.records[1].pose_before
        np.testing.assert_array_equal(stored.records[2].ellipsoid.as_vector(), trace.records[2].ellipsoid.as_vector())
        assert PlannerParams.from_dict(stored.header["params"]).fov.dtheta == 10.0

    def test_same_run_same_bytes(self, empty_env, weights, params, saved_trace, tmp_path):
        path, _ = saved_trace
        again = tmp_path / "again.jsonl"
        TraceStore(again).write(raw_run(empty_env, weights, params), environment_to_dict(empty_env),
                                params.to_dict(), weights.to_dict(), write_timing=False)
        assert again.read_bytes() == path.read_bytes()

    def test_truncated(self, saved_trace):
        path, _ = saved_trace
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
        with pytest.raises(TraceFormatError):
            TraceStore(path).read()

    def test_garbage_line(self, saved_trace):
        path, _ = saved_trace
        with open(path, "a", encoding="utf-8") as f:
            f.write("not json\n")
        with pytest.raises(TraceFormatError) as info:
            TraceStore(path).read()
        assert info.value.line_no == 6

    def test_timing_companion(self, saved_trace):
        path, _ = saved_trace
        timing = TraceStore(path).timing_path
        assert timing.name == "run_timing.csv"
        assert len(timing.read_text(encoding="utf-8").splitlines()) == 4


class TestVerify:
    """Re-checking saved runs"""

    def test_clean_run_passes(self, saved_trace):
        path, _ = saved_trace
        report = verify(path)
        assert report.passed
        assert report.steps == 3
        assert report.checks_run["containment"] == 3
        assert report.checks_run["handoff"] == 2

    def test_loose_ellipsoid_is_caught(self, saved_trace):
        path, trace = saved_trace
        loose = ellipsoid_to_world(Ellipsoid.from_matrices(np.eye(2), [0.0, 0.0], -0.5), trace.records[1].pose_before)
        rewrite_step(path, 1, lambda rec: rec.update(ellipsoid=[float(v) for v in loose.as_vector()]))
        report = verify(path)
        failed = {f.check for f in report.failures}
        assert not report.passed
        assert "radii_identity" in failed

    def test_teleport_is_caught(self, saved_trace):
        path, _ = saved_trace

        def teleport(rec):
            rec["pose_after"][0] += 1.0

        rewrite_step(path, 0, teleport)
        failed = {(f.step, f.check) for f in verify(path).failures}
        assert (0, "pose_after") in failed
        assert (1, "continuity") in failed

    def test_wrong_footer_length(self, saved_trace):
        path, _ = saved_trace
        lines = path.read_text(encoding="utf-8").splitlines()
        footer = json.loads(lines[-1])
        footer["path_length"] += 0.5
        lines[-1] = json.dumps(footer, sort_keys=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        assert "path_length" in {f.check for f in verify(path).failures}


class TestRenderer:
    """SVG output"""

    def test_deterministic(self, empty_env, saved_trace, params, tmp_path):
        _, trace = saved_trace
        a = render_svg(trace, empty_env, tmp_path / "a.svg", fov=params.fov, every=1)
        b = render_svg(trace, empty_env, tmp_path / "b.svg", fov=params.fov, every=1)
        assert a.read_bytes() == b.read_bytes()

    def test_empty_trace(self, empty_env, tmp_path):
        path = render_svg(RunTrace(), empty_env, tmp_path / "empty.svg")
        text = path.read_text(encoding="utf-8")
        assert text.lstrip().startswith("<?xml")
        assert "</svg>" in text

    def test_overlay(self, empty_env, saved_trace, tmp_path):
        _, trace = saved_trace
        other = replace(trace, records=trace.records[:1])
        path = render_svg([trace, other], empty_env, tmp_path / "suite.svg", labels=["full", "first"])
        assert path.stat().st_size > 0


def run_tests():
    """Run all tests"""
    pytest.main([__file__, '-v', '--tb=short'])


if __name__ == "__main__":
    run_tests()
