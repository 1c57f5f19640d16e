"""
Report Formatter - Plain-text CLI reports
Formats run traces, suite aggregates, baseline results, training curves and
verification reports for the terminal
"""

import math
from typing import List, Sequence

import numpy as np
import pandas as pd

from modules.trace_store import RunTrace
from tools.plan_result import PlanResult
from tools.suite_runner import VerifyReport


def _num(value: float, fmt: str = ".2f") -> str:
    return "-" if value is None or (isinstance(value, float) and not math.isfinite(value)) else format(value, fmt)


class ReportFormatter:
    """Fixed-width text blocks; every method returns a string ready to print"""

    RULE = "─" * 64

    @staticmethod
    def _header(title: str) -> List[str]:
        return [ReportFormatter.RULE, title, ReportFormatter.RULE]

    @staticmethod
    def format_run(trace: RunTrace, env_name: str) -> str:
        lines = ReportFormatter._header(f"RAW run on {env_name} ({'filtered' if trace.filtered else 'unfiltered'})")
        lines.append(f"Outcome:            {trace.outcome}")
        lines.append(f"Steps:              {len(trace.records)}")
        lines.append(f"Path length:        {_num(trace.path_length)} m")
        lines.append(f"Comparison length:  {_num(trace.comparison_length)} m")
        lines.append(f"Min clearance:      {_num(trace.min_clearance, '.3f')} m")
        times = np.asarray(trace.step_times, dtype=float)
        if len(times):
            lines.append(f"Step time:          {1e3 * times.mean():.1f} ± {1e3 * times.std():.1f} ms "
                         f"(median {1e3 * np.median(times):.1f} ms)")
            solves = np.asarray(trace.solve_times, dtype=float)
            lines.append(f"Solve time:         {1e3 * solves.mean():.1f} ms mean")
        if trace.message:
            lines.append(f"Message:            {trace.message}")
        return "\n".join(lines)

    @staticmethod
    def format_suite_summary(summary: pd.DataFrame) -> str:
        lines = ReportFormatter._header("Suite summary")
        if summary.empty:
            lines.append("(no scenarios)")
            return "\n".join(lines)
        for row in summary.itertuples(index=False):
            lines.append(f"{row.suite} / {row.variant}")
            lines.append(f"  RAW success:        {row.raw_success}/{row.scenarios}")
            lines.append(f"  RRT success rate:   {_num(100.0 * row.rrt_success_rate, '.1f')}%")
            lines.append(f"  Reference success:  {row.reference_success}/{row.scenarios}")
            lines.append(f"  RAW/ref ratio:      median {_num(row.ratio_median, '.3f')}, "
                         f"max {_num(row.ratio_max, '.3f')}")
            lines.append(f"  RAW < mean RRT:     {_num(100.0 * row.raw_beats_rrt_share, '.1f')}% of scenarios")
            lines.append(f"  Step time:          {_num(1e3 * row.step_time_mean, '.1f')} ± "
                         f"{_num(1e3 * row.step_time_std, '.1f')} ms")
        return "\n".join(lines)

    @staticmethod
    def format_baseline(results: Sequence[PlanResult], env_name: str) -> str:
        planner = results[0].planner if results else "baseline"
        lines = ReportFormatter._header(f"{planner} on {env_name}")
        for r in results:
            seed = "" if r.seed is None else f"seed {r.seed:>3}  "
            status = "ok  " if r.success else "FAIL"
            lines.append(f"  {seed}{status}  length {_num(r.length):>8}  iterations {r.iterations}"
                         + (f"  ({r.message})" if r.message else ""))
        lengths = np.array([r.length for r in results if r.success])
        if len(lengths):
            lines.append(f"Mean {lengths.mean():.2f} m, min {lengths.min():.2f} m, "
                         f"{len(lengths)}/{len(results)} successful")
        return "\n".join(lines)

    @staticmethod
    def format_training(curve: pd.DataFrame, weights_path: str) -> str:
        lines = ReportFormatter._header(f"Training finished: {weights_path}")
        lines.append(f"Episodes:       {len(curve)}")
        if len(curve):
            tail = curve.tail(max(1, len(curve) // 10))
            lines.append(f"Success rate:   {100.0 * curve['reached_goal'].mean():.1f}% overall, "
                         f"{100.0 * tail['reached_goal'].mean():.1f}% in the last {len(tail)} episodes")
            lines.append(f"Mean reward:    {tail['total_reward'].mean():.1f} (last {len(tail)})")
        return "\n".join(lines)

    @staticmethod
    def format_verify(report: VerifyReport) -> str:
        verdict = "PASS" if report.passed else "FAIL"
        lines = ReportFormatter._header(f"verify {report.path}: {verdict}")
        lines.append(f"Steps: {report.steps}   outcome: {report.outcome}   "
                     f"{'filtered' if report.filtered else 'unfiltered'}")
        for check, count in sorted(report.checks_run.items()):
            failed = sum(1 for f in report.failures if f.check == check)
            lines.append(f"  {check:<16} {count - failed:>6}/{count:<6} passed")
        for f in report.failures[:20]:
            where = "trace" if f.step < 0 else f"step {f.step}"
            lines.append(f"  ✗ {where}: {f.check}: {f.detail}")
        if len(report.failures) > 20:
            lines.append(f"  ... {len(report.failures) - 20} more")
        return "\n".join(lines)
