"""
Metrics Tracker Tests
Per-step timing, phase attribution and summary statistics
"""

import sys
from pathlib import Path

import pytest

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from metrics_tracker import MetricsTracker


class TestMetricsTracker:
    """Step latency bookkeeping"""

    @pytest.fixture
    def tracker(self):
        return MetricsTracker(max_history=3)

    def test_start_end(self, tracker):
        step_id = tracker.start_step()
        assert step_id == "raw_step_0"
        elapsed = tracker.end_step(step_id)
        assert elapsed >= 0.0
        assert tracker.get_recent_metrics()[0]["step_time"] == elapsed

    def test_unknown_step(self, tracker):
        assert tracker.end_step("missing") == 0.0
        assert tracker.get_recent_metrics() == []

    def test_phases_accumulate(self, tracker):
        step_id = tracker.start_step("unfiltered")
        tracker.add_phase(step_id, "solve", 0.25)
        tracker.add_phase(step_id, "solve", 0.5)
        tracker.add_phase("missing", "solve", 1.0)
        tracker.end_step(step_id)
        metric = tracker.get_recent_metrics()[0]
        assert metric["label"] == "unfiltered"
        assert metric["phases"]["solve"] == pytest.approx(0.75)

    def test_history_is_bounded(self, tracker):
        for _ in range(5):
            tracker.end_step(tracker.start_step())
        assert len(tracker.get_recent_metrics(limit=10)) == 3

    def test_summary(self, tracker):
        ok = tracker.start_step()
        tracker.add_phase(ok, "solve", 0.01)
        tracker.end_step(ok)
        tracker.end_step(tracker.start_step(), success=False, error="solver failure")
        stats = tracker.get_summary_stats()
        assert stats["steps"] == 2
        assert stats["success_rate"] == pytest.approx(50.0)
        assert stats["solve_mean_ms"] == pytest.approx(5.0)
        assert "2 steps" in tracker.format_summary()

    def test_empty_summary(self, tracker):
        assert tracker.get_summary_stats()["steps"] == 0
        assert tracker.format_summary() == "No planner steps recorded."

    def test_clear(self, tracker):
        tracker.start_step()
        tracker.end_step(tracker.start_step())
        tracker.clear_history()
        assert tracker.get_recent_metrics() == []
        assert tracker.active_steps == {}


def run_tests():
    """Run all tests"""
    pytest.main([__file__, '-v', '--tb=short'])


if __name__ == "__main__":
    run_tests()
