"""
Steering Tests
Reeds-Shepp connections, closed-form rollout and the safe execution time
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.errors import ContainmentError
from modules.geometry import Ellipsoid, Pose, footprint, footprint_inside
from modules.sensing import FovParams, make_grid
from modules.steering import (
    CarSpec, RsPath, RsSegment, connect, max_safe_duration, poses_along, rollout, sample_times,
)


def straight(length: float) -> RsPath:
    return RsPath((RsSegment("S", 1, length),), length)


def disc(r: float) -> Ellipsoid:
    return Ellipsoid.from_matrices(np.eye(2), [0.0, 0.0], r)


def end_pose(start: Pose, path: RsPath, spec: CarSpec = CarSpec()) -> Pose:
    return rollout(start, path, path.duration(spec.speed), 0.01, spec).final_pose


def assert_pose_close(a: Pose, b: Pose, tol: float):
    assert math.hypot(a.x - b.x, a.y - b.y) <= tol
    assert abs(math.remainder(a.theta - b.theta, 2 * math.pi)) <= tol


class TestConnect:
    """Shortest forward/backward connections"""

    def test_straight_ahead(self):
        path = connect(Pose(0, 0, 0), Pose(5, 0, 0))
        assert path.word == "S+"
        assert path.total_length == pytest.approx(5.0)

    def test_straight_behind_reverses(self):
        path = connect(Pose(0, 0, 0), Pose(-3, 0, 0))
        assert path.word == "S-"
        assert path.total_length == pytest.approx(3.0)

    def test_identity(self):
        path = connect(Pose(1, 2, 0.3), Pose(1, 2, 0.3))
        assert path.total_length == pytest.approx(0.0, abs=1e-9)

    def test_half_turn_in_place(self):
        start, goal = Pose(0, 0, 0), Pose(0, 0, math.pi)
        path = connect(start, goal)
        assert path.total_length > 0.0
        assert_pose_close(end_pose(start, path), goal, 1e-6)
        # L+ quarter, R- quarter, then 2 m straight is one feasible manoeuvre
        assert path.total_length <= math.pi + 2.0 + 1e-9

    def test_endpoints_on_random_pairs(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            a = Pose(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi))
            b = Pose(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi))
            path = connect(a, b)
            assert path.total_length >= math.hypot(b.x - a.x, b.y - a.y) - 1e-9
            assert_pose_close(end_pose(a, path), b, 1e-6)

    def test_rigid_invariance(self):
        a, b = Pose(0, 0, 0.4), Pose(3, -2, 2.0)
        shift = Pose(7, 1, 1.1)
        wa = shift.to_world(a.position)[0]
        wb = shift.to_world(b.position)[0]
        moved = connect(Pose(wa[0], wa[1], a.theta + shift.theta), Pose(wb[0], wb[1], b.theta + shift.theta))
        assert moved.total_length == pytest.approx(connect(a, b).total_length, abs=1e-9)

    def test_turn_radius_scales_length(self):
        spec = CarSpec(min_turn_radius=2.0)
        a, b = Pose(0, 0, 0), Pose(1, 1, math.pi / 2)
        scaled = connect(Pose(0, 0, 0), Pose(2, 2, math.pi / 2), spec)
        assert scaled.total_length == pytest.approx(2.0 * connect(a, b).total_length, abs=1e-9)

    @pytest.mark.parametrize("goal, length", [
        (Pose(1, 1, math.pi / 2), math.pi / 2),
        (Pose(1, -1, -math.pi / 2), math.pi / 2),
        (Pose(0, 2, math.pi), math.pi),
        (Pose(4, 2, 0), math.pi / 3 + 2.0 * math.sqrt(3.0)),   # L+ S+ R+ with 30 degree arcs
    ])
    def test_closed_form_arcs(self, goal, length):
        assert connect(Pose(0, 0, 0), goal).total_length == pytest.approx(length, abs=1e-9)

    @pytest.mark.slow
    def test_length_is_bracketed(self):
        spec = CarSpec()
        rng = np.random.default_rng(21)

        def draw():
            return Pose(*rng.uniform(-4, 4, 2), rng.uniform(-math.pi, math.pi))

        for _ in range(2000):
            a, b = draw(), draw()
            length = connect(a, b, spec).total_length
            turn = abs(math.remainder(b.theta - a.theta, 2 * math.pi))
            assert length >= max(math.hypot(b.x - a.x, b.y - a.y), spec.min_turn_radius * turn) - 1e-9
            assert length == pytest.approx(connect(b, a, spec).total_length, abs=1e-6)
            for c in (draw() for _ in range(3)):
                assert length <= connect(a, c, spec).total_length + connect(c, b, spec).total_length + 1e-6

    def test_dict_form(self):
        path = connect(Pose(0, 0, 0), Pose(2, 3, 1.0))
        again = RsPath.from_dict(path.to_dict())
        assert again.word == path.word
        assert again.total_length == pytest.approx(path.total_length)


class TestRollout:
    """Closed-form sampling along a path"""

    def test_straight_segment(self):
        traj = rollout(Pose(0, 0, 0), straight(5.0), 2.0, 0.01)
        assert traj.final_pose == Pose(2.0, 0.0, 0.0)
        assert traj.times[-1] == 2.0

    def test_quarter_left_arc(self):
        path = RsPath((RsSegment("L", 1, math.pi / 2),), math.pi / 2)
        end = rollout(Pose(0, 0, 0), path, math.pi / 2, 0.01).final_pose
        assert end.x == pytest.approx(1.0, abs=1e-12)
        assert end.y == pytest.approx(1.0, abs=1e-12)
        assert end.theta == pytest.approx(math.pi / 2, abs=1e-12)

    def test_zero_horizon(self):
        traj = rollout(Pose(1, 2, 0.5), straight(5.0), 0.0, 0.01)
        assert len(traj) == 1
        assert_pose_close(traj.final_pose, Pose(1, 2, 0.5), 1e-12)

    def test_horizon_clamped_to_duration(self):
        traj = rollout(Pose(0, 0, 0), straight(1.0), 3.0, 0.1)
        assert traj.times[-1] == pytest.approx(1.0)

    def test_reverse_segment(self):
        path = RsPath((RsSegment("S", -1, 2.0),), 2.0)
        end = rollout(Pose(0, 0, 0), path, 2.0, 0.01).final_pose
        assert end.x == pytest.approx(-2.0)
        assert end.theta == pytest.approx(0.0)

    def test_sample_times(self):
        times = sample_times(0.25, 0.1)
        np.testing.assert_allclose(times, [0.0, 0.1, 0.2, 0.25])

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            rollout(Pose(0, 0, 0), straight(1.0), 1.0, 0.0)

    def test_poses_along_matches_rollout(self):
        start = Pose(0, 0, 0)
        path = connect(start, Pose(3, 2, 2.0))
        traj = rollout(start, path, path.total_length, 0.05)
        np.testing.assert_allclose(poses_along(start, path, traj.times)[1:], traj.poses[1:], atol=1e-12)


class TestMaxSafeDuration:
    """Execution time bounded by the ellipsoid, the waypoint and the cap"""

    def test_cap_binds(self):
        delta_t = max_safe_duration(Pose(0, 0, 0), straight(5.0), disc(-1e4), (5.0, 0.0))
        assert delta_t == pytest.approx(0.9)

    def test_corner_exit_binds(self):
        # leading corners (t + 0.5, +-0.5) leave x^2 + y^2 <= 4 at t = sqrt(3.75) - 0.5
        t_exit = math.sqrt(3.75) - 0.5
        dt = 0.01
        delta_t = max_safe_duration(Pose(0, 0, 0), straight(5.0), disc(-4.0), (5.0, 0.0), cap=3.0, dt=dt)
        assert 0.9 * t_exit <= delta_t <= 0.9 * (t_exit + dt)

    def test_waypoint_arrival_binds(self):
        delta_t = max_safe_duration(Pose(0, 0, 0), straight(0.5), disc(-1e4), (0.5, 0.0), cap=3.0)
        assert delta_t == pytest.approx(0.9 * 0.3, abs=0.01)

    def test_goal_waypoint_runs_to_end(self):
        delta_t = max_safe_duration(Pose(0, 0, 0), straight(0.5), disc(-1e4), (0.5, 0.0), cap=3.0,
                                    waypoint_is_goal=True)
        assert delta_t == pytest.approx(0.45)

    def test_start_on_inner_level_set(self):
        psi = disc(-1.5)       # corners sit exactly on the -1 level set
        start = Pose(0, 0, 0)
        delta_t = max_safe_duration(start, straight(5.0), psi, (5.0, 0.0))
        assert delta_t > 0.0
        end = rollout(start, straight(5.0), delta_t, 0.01).final_pose
        assert footprint_inside(psi, footprint(end), 0.0)

    def test_every_sample_stays_inside(self):
        psi = Ellipsoid.from_matrices(np.diag([1.0, 3.0]), [0.0, 0.0], -3.0)
        start = Pose(0, 0, 0.3)
        path = connect(start, Pose(2.0, 1.0, 1.2))
        delta_t = max_safe_duration(start, path, psi, (2.0, 1.0), cap=5.0)
        traj = rollout(start, path, delta_t, 0.01)
        assert all(footprint_inside(psi, footprint(traj.pose_at(k)), 0.0) for k in range(len(traj)))

    def test_start_outside_is_error(self):
        with pytest.raises(ContainmentError):
            max_safe_duration(Pose(5, 0, 0), straight(1.0), disc(-4.0), (6.0, 0.0))

    def test_unfiltered_ignores_ellipsoid(self):
        assert max_safe_duration(Pose(0, 0, 0), straight(5.0), None, (5.0, 0.0)) == pytest.approx(0.9)

    def test_first_ring_waypoints_move_the_car(self):
        params = FovParams()
        rng = np.random.default_rng(11)
        for _ in range(20):
            start = Pose(*rng.uniform(-10.0, 10.0, 2), rng.uniform(-math.pi, math.pi))
            ring = make_grid(start, params).points[:params.n_bearing]
            for wx, wy in ring:
                path = connect(start, Pose(wx, wy, math.atan2(wy - start.y, wx - start.x)))
                delta_t = max_safe_duration(start, path, None, (wx, wy), dr=params.dr)
                assert delta_t > 0.0


def run_tests():
    """Run all tests"""
    pytest.main([__file__, '-v', '--tb=short'])


if __name__ == "__main__":
    run_tests()
