"""
Collision Tests
Ground-truth footprint checks against circles and polygons
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from modules.collision import (
    ObstacleSet, first_collision, footprint_clearance, footprint_hits, point_in_obstacles,
)
from modules.geometry import CircleObstacle, PolygonObstacle


def box(x0, y0, x1, y1):
    return PolygonObstacle(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


class TestCircles:
    """Square footprint against discs"""

    def test_touching_counts(self):
        assert footprint_hits(np.array([[0, 0, 0]]), [CircleObstacle((1.0, 0.0), 0.5)])[0]

    def test_clearance(self):
        poses = np.array([[0, 0, 0]])
        obstacles = [CircleObstacle((1.1, 0.0), 0.5)]
        assert not footprint_hits(poses, obstacles)[0]
        assert footprint_clearance(poses, obstacles)[0] == pytest.approx(0.1)

    def test_rotated_corner(self):
        # corner reaches sqrt(0.5) along +x after a 45 degree turn
        poses = np.array([[0, 0, math.pi / 4]])
        obstacles = [CircleObstacle((1.2, 0.0), 0.4)]
        assert footprint_clearance(poses, obstacles)[0] == pytest.approx(1.2 - 0.4 - math.sqrt(0.5))

    def test_circle_inside_footprint(self):
        assert footprint_hits(np.array([[0, 0, 0]]), [CircleObstacle((0.1, 0.1), 0.05)])[0]


class TestPolygons:
    """Square footprint against polygons"""

    def test_clearance_to_box(self):
        poses = np.array([[1.0, 0.0, 0.0]])
        obstacles = [box(2, -1, 3, 1)]
        assert not footprint_hits(poses, obstacles)[0]
        assert footprint_clearance(poses, obstacles)[0] == pytest.approx(0.5)

    def test_rotated_clearance(self):
        poses = np.array([[1.0, 0.0, math.pi / 4]])
        assert footprint_clearance(poses, [box(2, -1, 3, 1)])[0] == pytest.approx(1.0 - math.sqrt(0.5))

    def test_footprint_inside_polygon(self):
        assert footprint_hits(np.array([[0, 0, 0.3]]), [box(-5, -5, 5, 5)])[0]

    def test_polygon_inside_footprint(self):
        tiny = PolygonObstacle(((0.0, 0.0), (0.1, 0.0), (0.0, 0.1)))
        assert footprint_hits(np.array([[0, 0, 0]]), [tiny])[0]

    def test_edge_crossing_without_contained_vertices(self):
        # thin bar crossing the body, no vertex of either shape inside the other
        bar = box(-2, -0.05, 2, 0.05)
        assert footprint_hits(np.array([[0, 0, 0]]), [bar])[0]

    def test_non_convex(self):
        # U shape with the robot in the notch
        u_shape = PolygonObstacle(((0, 0), (6, 0), (6, 6), (4, 6), (4, 2), (2, 2), (2, 6), (0, 6)))
        assert not footprint_hits(np.array([[3, 4, 0]]), [u_shape])[0]
        assert footprint_clearance(np.array([[3, 4, 0]]), [u_shape])[0] == pytest.approx(0.5)
        assert footprint_hits(np.array([[3, 2.4, 0]]), [u_shape])[0]


class TestBatch:
    """Batched helpers"""

    def test_first_collision(self):
        poses = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
        obstacles = ObstacleSet([CircleObstacle((3.0, 0.0), 0.8)])
        assert first_collision(poses, obstacles) == 2
        assert first_collision(poses[:2], obstacles) == -1

    def test_obstacle_set_matches_list(self):
        rng = np.random.default_rng(0)
        obstacles = [CircleObstacle((2.0, 1.0), 0.7), box(-3, -3, -1, 0), box(0, 3, 4, 4)]
        poses = np.column_stack([rng.uniform(-4, 5, 200), rng.uniform(-4, 5, 200), rng.uniform(-3, 3, 200)])
        packed = ObstacleSet(obstacles)
        np.testing.assert_array_equal(packed.hits(poses), footprint_hits(poses, obstacles))
        clearance = packed.clearance(poses)
        assert np.all(clearance[packed.hits(poses)] == 0.0)
        assert np.all(clearance[~packed.hits(poses)] > 0.0)

    def test_no_obstacles(self):
        poses = np.zeros((3, 3))
        assert not footprint_hits(poses, []).any()
        assert np.all(np.isinf(footprint_clearance(poses, [])))

    def test_point_in_obstacles(self):
        obstacles = [CircleObstacle((0, 0), 1.0), box(5, 5, 6, 6)]
        assert point_in_obstacles(np.array([0.5, 0.5]), obstacles)
        assert point_in_obstacles(np.array([5.0, 5.5]), obstacles)
        assert not point_in_obstacles(np.array([3.0, 3.0]), obstacles)


def run_tests():
    """Run all tests"""
    pytest.main([__file__, '-v', '--tb=short'])


if __name__ == "__main__":
    run_tests()
