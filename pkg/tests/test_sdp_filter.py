"""
SDP Filter Tests
Problem construction, interior-point solve against a scipy reference,
lambda classification and frame handling
"""

import math
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from config.config import ENV_DIR
from data.data_loader import load_environment
from modules.errors import SolverFailureError, StartInfeasibleError
from modules.geometry import (
    Ellipsoid, Pose, ellipsoid_to_world, footprint, footprint_inside, level_set_value, quadratic_rows,
)
from modules.sdp_filter import (
    STATUS_INFEASIBLE, STATUS_MAX_ITER, STATUS_OPTIMAL, SdpSolution, SolverSettings,
    _soft_terms, build_problem, filter_grid, objective_value, solve, to_world,
)
from modules.sensing import FovParams, make_grid, sense

ORIGIN = Pose(0.0, 0.0, 0.0)


@pytest.fixture
def settings():
    return SolverSettings()


@pytest.fixture
def small_grid():
    params = FovParams(r_max=4.0, dr=1.0, theta_max=40.0, dtheta=20.0, proximity_radius=0.0)
    return make_grid(ORIGIN, params).points


def scipy_reference(problem, cap: float = 200.0, floor: float = 1000.0, starts=()) -> float:
    """Same program with explicit slacks, solved by SLSQP from each start; the best value wins."""
    from scipy.optimize import minimize

    A_c = quadratic_rows(problem.corners)
    A_z = quadratic_rows(problem.cloud)
    A_g = quadratic_rows(problem.grid)
    A_goal = quadratic_rows(problem.goal)
    n = len(A_g)

    def split(v):
        return v[:6], v[6:6 + n], v[6 + n]

    def objective(v):
        x, lam, nu = split(v)
        det = x[0] * x[2] - x[1] * x[1]
        if x[0] <= 0.0 or det <= 0.0:
            return 1e6
        return nu - math.log(det) + lam.sum()

    def constraints(v):
        x, lam, nu = split(v)
        return np.concatenate([
            -A_c @ x - 1.0,
            A_z @ x - 1.0,
            -A_g @ x - 1.0 + lam,
            -A_goal @ x - 1.0 + nu,
            [x[5] + floor,
             x[0] - 1.0, (x[0] - 1.0) * (x[2] - 1.0) - x[1] ** 2,
             cap - x[0], (cap - x[0]) * (cap - x[2]) - x[1] ** 2],
        ])

    def lifted(x0, pad):
        return np.concatenate([x0, np.maximum(0.0, A_g @ x0 + 1.0) + pad,
                               [max(0.0, float((A_goal @ x0)[0]) + 1.0) + pad]])

    bounds = [(None, None)] * 6 + [(0.0, None)] * (n + 1)
    best = math.inf
    for x0, pad in [(np.array([2.0, 0.0, 2.0, 0.0, 0.0, -2.5]), 0.1)] + [(np.asarray(s), 0.0) for s in starts]:
        res = minimize(objective, lifted(x0, pad), method="SLSQP", bounds=bounds,
                       constraints=[{"type": "ineq", "fun": constraints}],
                       options={"ftol": 1e-12, "maxiter": 2000})
        if constraints(res.x).min() >= -1e-8:
            best = min(best, float(objective(res.x)))
    return best


class TestBuildProblem:
    """Robot-frame data and the hard separation check"""

    def test_rigid_transform(self):
        problem = build_problem(Pose(2.0, 3.0, math.pi / 2), np.array([[2.0, 4.0]]), np.zeros((0, 2)), None)
        np.testing.assert_allclose(problem.cloud, [[1.0, 0.0]], atol=1e-12)

    def test_empty_cloud(self, small_grid):
        problem = build_problem(ORIGIN, np.zeros((0, 2)), small_grid, np.array([3.0, 0.0]))
        assert problem.m == 0
        assert problem.n == len(small_grid)

    def test_point_at_centroid(self):
        with pytest.raises(StartInfeasibleError):
            build_problem(Pose(1.0, 1.0, 0.4), np.array([[1.0, 1.0]]), np.zeros((0, 2)), None)

    def test_corners_are_unit_square(self):
        problem = build_problem(Pose(5.0, 5.0, 1.0), np.zeros((0, 2)), np.zeros((0, 2)), None)
        np.testing.assert_allclose(np.abs(problem.corners), 0.5)


class TestSolve:
    """Interior-point solve of the separating-ellipsoid program"""

    def test_no_obstacles(self, settings):
        grid = make_grid(ORIGIN, FovParams()).points
        sol = solve(build_problem(ORIGIN, np.zeros((0, 2)), grid, np.array([3.0, 0.0])), settings)
        assert sol.status == STATUS_OPTIMAL
        assert sol.lambdas.max() < 1e-4
        assert sol.nu < 1e-4
        assert filter_grid(sol, len(grid)).all()

    def test_symmetric_points_give_circle(self, settings):
        cloud = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0], [0.0, -3.0]])
        problem = build_problem(ORIGIN, cloud, np.zeros((1, 2)), np.zeros(2))
        sol = solve(problem, settings)
        e = sol.ellipsoid
        assert sol.optimal
        assert e.u11 == pytest.approx(e.u22, rel=1e-3)
        assert abs(e.u2) < 1e-3 * e.u11
        assert np.all(level_set_value(e, cloud) >= 1.0 - 1e-6)
        assert np.all(level_set_value(e, problem.corners) <= -1.0 + 1e-6)
        # P = cap * I is the largest determinant the box allows
        best = -2.0 * math.log(settings.curvature_cap)
        assert sol.objective == pytest.approx(best, abs=1e-4)

    def test_single_obstacle_is_separated(self, settings, small_grid):
        cloud = np.array([[3.0, 0.0]])
        sol = solve(build_problem(ORIGIN, cloud, small_grid, np.array([3.5, 1.0])), settings)
        assert sol.optimal
        assert level_set_value(sol.ellipsoid, cloud[0]) >= 1.0 - 1e-6
        assert footprint_inside(sol.ellipsoid, footprint(ORIGIN), -1.0)
        assert sol.ellipsoid.is_valid()
        assert sol.kkt_residual <= settings.tolerance

    def test_matches_scipy_reference(self, settings):
        cloud = np.array([[3.0, 0.0], [0.0, 2.5], [-2.0, -2.0]])
        grid = np.array([[1.0, 0.0], [2.0, 0.0], [3.5, 0.0], [0.0, 1.0]])
        problem = build_problem(ORIGIN, cloud, grid, np.array([1.5, 0.5]))
        sol = solve(problem, settings)
        assert sol.optimal
        assert sol.objective == pytest.approx(objective_value(problem, sol.ellipsoid.as_vector()))
        reference = scipy_reference(problem, settings.curvature_cap, settings.scale_floor)
        assert sol.objective <= reference + 1e-3 * max(1.0, abs(reference))

    def test_deterministic(self, settings, small_grid):
        cloud = np.array([[2.0, 1.0], [2.5, -1.5], [3.0, 0.2]])
        problem = build_problem(ORIGIN, cloud, small_grid, None)
        a, b = solve(problem, settings), solve(problem, settings)
        np.testing.assert_array_equal(a.lambdas, b.lambdas)
        np.testing.assert_array_equal(a.ellipsoid.as_vector(), b.ellipsoid.as_vector())

    def test_point_on_footprint_edge_is_infeasible(self, settings, small_grid):
        # convexity puts the edge midpoint at or below the corner values
        problem = build_problem(ORIGIN, np.array([[0.5, 0.0]]), small_grid, None)
        sol = solve(problem, settings)
        assert sol.status in (STATUS_INFEASIBLE, STATUS_MAX_ITER)
        assert not filter_grid(sol, len(small_grid)).any()
        with pytest.raises(SolverFailureError):
            to_world(sol, ORIGIN)

    def test_tight_ring_is_infeasible(self, settings, small_grid):
        side = np.linspace(-0.6, 0.6, 13)
        near = np.full_like(side, 0.502)
        cloud = np.vstack([np.column_stack([near, side]), np.column_stack([-near, side]),
                           np.column_stack([side, near]), np.column_stack([side, -near])])
        sol = solve(build_problem(ORIGIN, cloud, small_grid, None), settings)
        assert sol.status == STATUS_INFEASIBLE

    @pytest.mark.parametrize("pose", [None, Pose(12.0, 12.5, 0.7), Pose(20.0, 20.0, -2.5), Pose(4.0, 7.0, 1.2)])
    def test_full_fov_on_corridor_map(self, settings, pose):
        env = load_environment(ENV_DIR / "corridors.json")
        pose = pose or env.start
        cloud = sense(env, pose, FovParams()).points
        grid = make_grid(pose, FovParams()).points
        problem = build_problem(pose, cloud, grid, np.asarray(env.goal))
        assert problem.m >= 10 and problem.n == 3025
        sol = solve(problem, settings)
        assert sol.status == STATUS_OPTIMAL
        assert sol.kkt_residual <= settings.tolerance
        e = sol.ellipsoid
        assert np.linalg.eigvalsh(np.array([[e.u11, e.u2], [e.u2, e.u22]])).min() >= 1.0 - 1e-8
        assert np.all(level_set_value(e, problem.cloud) >= 1.0 - 1e-6)
        assert np.all(level_set_value(e, problem.corners) <= -1.0 + 1e-6)
        assert filter_grid(sol, problem.n).any()

    def test_extreme_soft_values_stay_finite(self):
        s = np.array([-1e4, -1.0, 0.0, 1.0, 1e4])
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            d1, d2 = _soft_terms(s, 1e6)
        assert np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))
        assert np.all(d1 >= 0.0) and np.all(d2 >= 0.0)

    def test_solve_raises_no_warnings(self, settings, small_grid):
        problem = build_problem(ORIGIN, np.array([[2.0, 1.0], [2.5, -1.5], [3.0, 0.2]]), small_grid,
                                np.array([3.0, 0.0]))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert solve(problem, settings).optimal


class TestOracle:
    """Random small instances against an independent SLSQP solve"""

    @staticmethod
    def instance(rng):
        def ring(count, lo, hi):
            radius = rng.uniform(lo, hi, count)
            bearing = rng.uniform(-math.pi, math.pi, count)
            return np.column_stack([radius * np.cos(bearing), radius * np.sin(bearing)])

        cloud = ring(int(rng.integers(1, 7)), 1.2, 4.0)
        grid = ring(int(rng.integers(1, 5)), 0.3, 4.5)
        return build_problem(ORIGIN, cloud, grid, ring(1, 0.5, 6.0)[0])

    @pytest.mark.slow
    def test_random_instances_agree(self, settings):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            problem = self.instance(rng)
            sol = solve(problem, settings)
            assert sol.optimal
            assert sol.kkt_residual <= settings.tolerance
            reference = scipy_reference(problem, settings.curvature_cap, settings.scale_floor,
                                        starts=[sol.ellipsoid.as_vector()])
            assert abs(sol.objective - reference) <= 1e-3 * max(1.0, abs(reference))

    def test_lambdas_are_hinge_values(self, settings):
        problem = self.instance(np.random.default_rng(5))
        sol = solve(problem, settings)
        values = level_set_value(sol.ellipsoid, problem.grid)
        np.testing.assert_allclose(sol.lambdas, np.maximum(0.0, values + 1.0), atol=1e-9)
        assert list(filter_grid(sol, problem.n)) == list(values < 0.0)


class TestFilterGrid:
    """lambda < 1 keeps a waypoint"""

    def test_grid_point_on_obstacle(self, settings):
        cloud = np.array([[2.0, 0.0], [2.0, 0.3], [2.0, -0.3]])
        grid = np.array([[2.0, 0.0], [0.8, 0.0]])
        sol = solve(build_problem(ORIGIN, cloud, grid, None), settings)
        assert sol.lambdas[0] >= 2.0 - 1e-6
        assert list(filter_grid(sol, 2)) == [False, True]

    def test_threshold(self):
        e = Ellipsoid(1.0, 0.0, 1.0, 0.0, 0.0, -2.0)
        sol = SdpSolution(ellipsoid=e, lambdas=np.array([1.0, 0.999, 0.0]), nu=0.0,
                          status=STATUS_OPTIMAL, kkt_residual=0.0, iterations=1)
        assert list(filter_grid(sol, 3)) == [False, True, True]

    def test_non_optimal_is_fail_safe(self):
        e = Ellipsoid(1.0, 0.0, 1.0, 0.0, 0.0, -2.0)
        sol = SdpSolution(ellipsoid=e, lambdas=np.zeros(3), nu=0.0, status=STATUS_MAX_ITER,
                          kkt_residual=math.inf, iterations=200)
        assert not filter_grid(sol, 3).any()


class TestFrames:
    """Robot-frame certificates mapped to the world"""

    def test_identity_pose(self):
        e = Ellipsoid(2.0, 0.3, 1.5, 0.2, -0.1, -3.0)
        sol = SdpSolution(ellipsoid=e, lambdas=np.zeros(0), nu=0.0, status=STATUS_OPTIMAL,
                          kkt_residual=0.0, iterations=1)
        np.testing.assert_allclose(to_world(sol, ORIGIN).as_vector(), e.as_vector(), atol=1e-12)

    def test_world_certificate_separates_world_points(self, settings):
        pose = Pose(4.0, -2.0, 0.8)
        cloud_world = pose.to_world(np.array([[2.5, 0.5], [3.0, -1.0]]))
        grid_world = pose.to_world(np.array([[1.0, 0.0], [2.0, 0.0]]))
        sol = solve(build_problem(pose, cloud_world, grid_world, None), settings)
        world = to_world(sol, pose)
        np.testing.assert_allclose(world.as_vector(), ellipsoid_to_world(sol.ellipsoid, pose).as_vector())
        assert np.all(level_set_value(world, cloud_world) >= 1.0 - 1e-6)
        assert footprint_inside(world, footprint(pose), -1.0 + 1e-9)


class TestSettings:
    """Solver settings validation"""

    def test_from_config(self):
        s = SolverSettings.from_config({"tolerance": 1e-5, "max_iterations": 50.0, "unknown": 1})
        assert s.tolerance == 1e-5
        assert s.max_iterations == 50

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SolverSettings(tolerance=0.0)
        with pytest.raises(ValueError):
            SolverSettings(barrier_mu=1.0)


def run_tests():
    """Run all tests"""
    pytest.main([__file__, '-v', '--tb=short'])


if __name__ == "__main__":
    run_tests()
