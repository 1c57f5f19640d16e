"""
Trace Renderer - Static SVG figures of planner runs
Obstacles, executed trajectory, certificate outlines every k-th step, the FOV
sector at those poses, and start/goal markers. Output is byte-stable for
identical input.
"""

import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Circle, Polygon, Wedge

from modules.geometry import CircleObstacle, Ellipsoid
from modules.sensing import Environment, FovParams
from modules.trace_store import RunTrace

logger = logging.getLogger(__name__)

SVG_HASH_SALT = "raw-planner"
_COLORS = ["#2563eb", "#dc2626", "#16a34a", "#9333ea", "#ea580c", "#0891b2"]


def ellipse_outline(e: Ellipsoid, n: int = 120) -> Optional[np.ndarray]:
    """Points on the 0-level set, or None when the set is empty."""
    c = e.center()
    k = float(c @ e.P @ c - e.r)
    if not k > 0.0:
        return None
    w, V = np.linalg.eigh(e.P)
    t = np.linspace(0.0, 2.0 * math.pi, n)
    unit = np.column_stack([np.cos(t), np.sin(t)])
    return c + (unit * np.sqrt(k / w)) @ V.T


def _draw_environment(ax, env: Environment):
    for obstacle in env.obstacles:
        if isinstance(obstacle, CircleObstacle):
            ax.add_patch(Circle(obstacle.center, obstacle.radius, facecolor="#94a3b8", edgecolor="#334155",
                                linewidth=0.6))
        else:
            ax.add_patch(Polygon(obstacle.array, closed=True, facecolor="#94a3b8", edgecolor="#334155",
                                 linewidth=0.6))
    xmin, ymin, xmax, ymax = env.bounds
    ax.plot([xmin, xmax, xmax, xmin, xmin], [ymin, ymin, ymax, ymax, ymin], color="#0f172a", linewidth=1.2)
    ax.set_xlim(xmin - 1.0, xmax + 1.0)
    ax.set_ylim(ymin - 1.0, ymax + 1.0)


def _draw_run(ax, trace: RunTrace, fov: Optional[FovParams], every: int, color: str, label: str):
    if not trace.records:
        return
    xy = [trace.records[0].pose_before.position] + [r.pose_after.position for r in trace.records]
    xy = np.array(xy)
    ax.plot(xy[:, 0], xy[:, 1], color=color, linewidth=1.4, label=label)

    for k in range(0, len(trace.records), max(1, every)):
        record = trace.records[k]
        if record.ellipsoid is not None:
            outline = ellipse_outline(record.ellipsoid)
            if outline is not None:
                ax.plot(outline[:, 0], outline[:, 1], color=color, linewidth=0.5, alpha=0.6)
        if fov is not None:
            pose = record.pose_before
            heading = math.degrees(pose.theta)
            ax.add_patch(Wedge((pose.x, pose.y), fov.r_max, heading - fov.theta_max, heading + fov.theta_max,
                               facecolor=color, alpha=0.08, edgecolor="none"))


def render_svg(traces: Union[RunTrace, Sequence[RunTrace]], env: Environment, path: Path,
               fov: Optional[FovParams] = None, every: int = 5, labels: Optional[List[str]] = None,
               title: Optional[str] = None) -> Path:
    """
    Draw one run, or several runs overlaid on the same map (a suite), to SVG.

    Ellipse outlines and FOV sectors are drawn at every `every`-th step.
    Start and goal markers come from `env`, so an empty trace still shows
    the map and both markers.
    """
    runs = [traces] if isinstance(traces, RunTrace) else list(traces)
    labels = labels or [f"run {i}" for i in range(len(runs))]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with plt.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 7))
        try:
            _draw_environment(ax, env)
            for i, trace in enumerate(runs):
                _draw_run(ax, trace, fov, every, _COLORS[i % len(_COLORS)], labels[i])
            ax.plot(env.start.x, env.start.y, marker="o", color="#16a34a", markersize=7, linestyle="none",
                    label="start")
            ax.plot(env.goal[0], env.goal[1], marker="*", color="#dc2626", markersize=11, linestyle="none",
                    label="goal")
            ax.set_aspect("equal")
            ax.set_title(title or env.name, fontsize=10)
            ax.legend(loc="upper right", fontsize=7)
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    logger.info(f"Rendered {len(runs)} run(s) on '{env.name}' to {path}")
    return path
