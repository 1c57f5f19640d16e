"""
Step Metrics Tracker - Lightweight per-step timing for planner runs
Wall-clock numbers live here and in timing CSVs, never in traces
"""

import statistics
import time
import logging
from typing import Dict, Any, List, Optional
from collections import deque

logger = logging.getLogger(__name__)


class MetricsTracker:
    """Per-run tracker for planner step latency and its solve-time share"""

    def __init__(self, max_history: int = 10000):
        """
        Initialize metrics tracker

        Args:
            max_history: Maximum number of step metrics to keep in history
        """
        self.max_history = max_history
        self.metrics_history = deque(maxlen=max_history)
        self.active_steps = {}  # step_id -> start time and phases
        self._counter = 0

    def start_step(self, label: str = "raw_step") -> str:
        """
        Start timing a planner step

        Returns:
            step_id: identifier to pass to add_phase / end_step
        """
        step_id = f"{label}_{self._counter}"
        self._counter += 1
        self.active_steps[step_id] = {"label": label, "start_time": time.perf_counter(), "phases": {}}
        return step_id

    def add_phase(self, step_id: str, phase: str, seconds: float):
        """Attribute part of the step's wall time to a named phase (e.g. 'solve')"""
        if step_id in self.active_steps:
            phases = self.active_steps[step_id]["phases"]
            phases[phase] = phases.get(phase, 0.0) + seconds

    def end_step(self, step_id: str, success: bool = True, error: Optional[str] = None) -> float:
        """
        Mark step as complete and save its metrics

        Returns:
            Step wall time in seconds (0 for an unknown id)
        """
        if step_id not in self.active_steps:
            return 0.0

        step_data = self.active_steps.pop(step_id)
        elapsed = time.perf_counter() - step_data["start_time"]
        self.metrics_history.append({
            "step_id": step_id,
            "label": step_data["label"],
            "step_time": elapsed,
            "phases": dict(step_data["phases"]),
            "success": success,
            "error": error,
        })
        logger.debug(f"Step {step_id}: {elapsed * 1000:.1f}ms, success={success}")
        return elapsed

    def get_recent_metrics(self, limit: int = 10) -> List[Dict[str, Any]]:
        return list(self.metrics_history)[-limit:]

    def get_summary_stats(self) -> Dict[str, Any]:
        """
        Get summary statistics in milliseconds

        Returns:
            Dictionary with step count, mean/std/median step time and mean solve time
        """
        if not self.metrics_history:
            return {"steps": 0, "mean_ms": 0.0, "std_ms": 0.0, "median_ms": 0.0,
                    "solve_mean_ms": 0.0, "success_rate": 0.0}

        times = [m["step_time"] * 1000.0 for m in self.metrics_history]
        solves = [m["phases"].get("solve", 0.0) * 1000.0 for m in self.metrics_history]
        successful = sum(1 for m in self.metrics_history if m["success"])
        return {
            "steps": len(times),
            "mean_ms": statistics.fmean(times),
            "std_ms": statistics.pstdev(times) if len(times) > 1 else 0.0,
            "median_ms": statistics.median(times),
            "solve_mean_ms": statistics.fmean(solves),
            "success_rate": successful / len(times) * 100.0,
        }

    def clear_history(self):
        self.metrics_history.clear()
        self.active_steps.clear()

    def format_summary(self) -> str:
        stats = self.get_summary_stats()
        if not stats["steps"]:
            return "No planner steps recorded."
        return (f"{stats['steps']} steps: {stats['mean_ms']:.1f} ± {stats['std_ms']:.1f} ms per step "
                f"(median {stats['median_ms']:.1f} ms, solve {stats['solve_mean_ms']:.1f} ms)")
