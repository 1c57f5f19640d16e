"""
Collision Ground Truth
Footprint-versus-obstacle tests on the true geometry, vectorised over batches
of poses. This is the independent check for every planner and for the trace
verifier; it never looks at ellipsoid certificates.
"""

import logging
from typing import List, Sequence, Union

import numpy as np

from modules.geometry import (
    FOOTPRINT_SIZE, CircleObstacle, Obstacle, PolygonObstacle,
    footprint_corners_batch, point_segment_distance, points_in_polygon, segments_cross,
)

logger = logging.getLogger(__name__)

TOUCH_TOL = 1e-12


class ObstacleSet:
    """Obstacles packed for batched checks: circles as arrays, polygons with bounding boxes."""

    def __init__(self, obstacles: Sequence[Obstacle], size: float = FOOTPRINT_SIZE):
        self.obstacles = list(obstacles)
        self.half = 0.5 * size
        self.reach = np.sqrt(2.0) * self.half
        circles = [o for o in self.obstacles if isinstance(o, CircleObstacle)]
        self.centers = np.array([c.center for c in circles]).reshape(-1, 2)
        self.radii = np.array([c.radius for c in circles])
        self.polygons = [o for o in self.obstacles if isinstance(o, PolygonObstacle)]
        self.boxes = np.array([np.r_[p.array.min(axis=0), p.array.max(axis=0)]
                               for p in self.polygons]).reshape(-1, 4)

    # ── circles ──────────────────────────────────────────────────────────────

    def _circle_distance(self, poses: np.ndarray) -> np.ndarray:
        """(K, C) distance from each footprint square to each circle centre."""
        if len(self.radii) == 0:
            return np.full((len(poses), 0), np.inf)
        c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
        dx = self.centers[None, :, 0] - poses[:, 0:1]
        dy = self.centers[None, :, 1] - poses[:, 1:2]
        lx = c[:, None] * dx + s[:, None] * dy
        ly = -s[:, None] * dx + c[:, None] * dy
        ox = np.abs(lx) - self.half
        oy = np.abs(ly) - self.half
        return np.hypot(np.maximum(ox, 0.0), np.maximum(oy, 0.0))

    # ── polygons ─────────────────────────────────────────────────────────────

    def _near_polygons(self, poses: np.ndarray, margin: float) -> List[int]:
        if len(self.polygons) == 0:
            return []
        lo = poses[:, :2].min(axis=0) - self.reach - margin
        hi = poses[:, :2].max(axis=0) + self.reach + margin
        keep = ((self.boxes[:, 0] <= hi[0]) & (self.boxes[:, 2] >= lo[0])
                & (self.boxes[:, 1] <= hi[1]) & (self.boxes[:, 3] >= lo[1]))
        return list(np.flatnonzero(keep))

    def _polygon_hits(self, poses: np.ndarray, corners: np.ndarray, polygon: PolygonObstacle) -> np.ndarray:
        v, w = polygon.edges()
        k = len(poses)
        corner_in = points_in_polygon(corners.reshape(-1, 2), v).reshape(k, 4).any(axis=1)
        local = self._body_frame(poses, v)
        vertex_in = (np.all(np.abs(local) <= self.half + TOUCH_TOL, axis=2)).any(axis=1)
        f_a = corners
        f_b = np.roll(corners, -1, axis=1)
        crossing = segments_cross(f_a[:, :, None, :], f_b[:, :, None, :],
                                  v[None, None, :, :], w[None, None, :, :]).any(axis=(1, 2))
        return corner_in | vertex_in | crossing

    def _body_frame(self, poses: np.ndarray, points: np.ndarray) -> np.ndarray:
        c, s = np.cos(poses[:, 2]), np.sin(poses[:, 2])
        dx = points[None, :, 0] - poses[:, 0:1]
        dy = points[None, :, 1] - poses[:, 1:2]
        return np.stack([c[:, None] * dx + s[:, None] * dy, -s[:, None] * dx + c[:, None] * dy], axis=2)

    def _polygon_distance(self, poses: np.ndarray, corners: np.ndarray, polygon: PolygonObstacle) -> np.ndarray:
        v, w = polygon.edges()
        k = len(poses)
        d_corner = point_segment_distance(corners.reshape(-1, 2), v, w).reshape(k, -1).min(axis=1)
        local = self._body_frame(poses, v)
        outside = np.maximum(np.abs(local) - self.half, 0.0)
        d_vertex = np.hypot(outside[..., 0], outside[..., 1]).min(axis=1)
        dist = np.minimum(d_corner, d_vertex)
        return np.where(self._polygon_hits(poses, corners, polygon), 0.0, dist)

    # ── public ───────────────────────────────────────────────────────────────

    def hits(self, poses: np.ndarray) -> np.ndarray:
        poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        hit = np.zeros(len(poses), dtype=bool)
        if len(self.radii):
            hit |= (self._circle_distance(poses) <= self.radii[None, :] + TOUCH_TOL).any(axis=1)
        idx = self._near_polygons(poses, 0.0)
        if idx:
            corners = footprint_corners_batch(poses, 2.0 * self.half)
            for i in idx:
                hit |= self._polygon_hits(poses, corners, self.polygons[i])
        return hit

    def clearance(self, poses: np.ndarray) -> np.ndarray:
        poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        best = np.full(len(poses), np.inf)
        if len(self.radii):
            gap = self._circle_distance(poses) - self.radii[None, :]
            best = np.minimum(best, np.maximum(gap, 0.0).min(axis=1))
        if self.polygons:
            corners = footprint_corners_batch(poses, 2.0 * self.half)
            for polygon in self.polygons:
                best = np.minimum(best, self._polygon_distance(poses, corners, polygon))
        return best


ObstacleLike = Union[ObstacleSet, Sequence[Obstacle]]


def _packed(obstacles: ObstacleLike) -> ObstacleSet:
    return obstacles if isinstance(obstacles, ObstacleSet) else ObstacleSet(obstacles)


def footprint_hits(poses: np.ndarray, obstacles: ObstacleLike) -> np.ndarray:
    """Per-pose flag: the 1 m square footprint touches or overlaps an obstacle."""
    return _packed(obstacles).hits(poses)


def footprint_clearance(poses: np.ndarray, obstacles: ObstacleLike) -> np.ndarray:
    """Per-pose distance between footprint and nearest obstacle (0 on contact)."""
    return _packed(obstacles).clearance(poses)


def first_collision(poses: np.ndarray, obstacles: ObstacleLike) -> int:
    """Index of the first colliding pose, or -1."""
    hit = footprint_hits(poses, obstacles)
    idx = np.flatnonzero(hit)
    return int(idx[0]) if len(idx) else -1


def point_in_obstacles(point: np.ndarray, obstacles: Sequence[Obstacle]) -> bool:
    p = np.asarray(point, dtype=float).reshape(1, 2)
    for o in obstacles:
        if isinstance(o, CircleObstacle):
            if np.hypot(p[0, 0] - o.center[0], p[0, 1] - o.center[1]) <= o.radius:
                return True
        elif points_in_polygon(p, o.array)[0]:
            return True
    return False
