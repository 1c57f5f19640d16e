"""
Suite Analytics Module
Per-scenario comparison table (RAW vs RRT vs lattice reference), per-suite
aggregates, and CSV persistence
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from modules.trace_store import RunTrace

logger = logging.getLogger(__name__)

# Main CSV, in documented order. Wall-clock values live in the timing CSV.
COLUMNS = [
    "scenario_id", "suite", "variant", "raw_outcome", "raw_steps", "raw_path_length", "raw_length",
    "rrt_lengths", "rrt_success", "rrt_mean", "rrt_min", "reference_length", "ratio_raw_over_ref",
    "raw_beats_rrt_mean", "error",
]
TIMING_COLUMNS = ["scenario_id", "steps", "per_step_time_mean", "per_step_time_std", "solve_time_mean"]
SUMMARY_COLUMNS = [
    "suite", "variant", "scenarios", "raw_success", "rrt_success_rate", "reference_success",
    "ratio_median", "ratio_max", "raw_beats_rrt_share", "step_time_mean", "step_time_std",
]

FLOAT_FORMAT = "%.17g"
_LIST_SEP = ";"


@dataclass
class ScenarioOutcome:
    """Raw measurements for one scenario, before aggregation."""
    scenario_id: str
    suite: str
    raw_outcome: str
    raw_steps: int = 0
    raw_path_length: float = 0.0
    raw_length: float = math.nan
    rrt_lengths: Tuple[float, ...] = ()
    reference_length: float = math.nan
    step_times: List[float] = field(default_factory=list)
    solve_times: List[float] = field(default_factory=list)
    variant: str = "raw"
    error: str = ""
    trace: Optional[RunTrace] = field(default=None, repr=False, compare=False)


def _finite(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr[np.isfinite(arr)]


def _row(outcome: ScenarioOutcome) -> Dict[str, Any]:
    rrt = _finite(outcome.rrt_lengths)
    rrt_mean = float(rrt.mean()) if len(rrt) else math.nan
    ref = outcome.reference_length
    raw = outcome.raw_length
    ratio = raw / ref if math.isfinite(raw) and math.isfinite(ref) and ref > 0 else math.nan
    beats = bool(math.isfinite(raw) and math.isfinite(rrt_mean) and raw < rrt_mean)
    return {
        "scenario_id": outcome.scenario_id,
        "suite": outcome.suite,
        "variant": outcome.variant,
        "raw_outcome": outcome.raw_outcome,
        "raw_steps": int(outcome.raw_steps),
        "raw_path_length": float(outcome.raw_path_length),
        "raw_length": float(raw),
        "rrt_lengths": tuple(float(v) for v in outcome.rrt_lengths),
        "rrt_success": int(len(rrt)),
        "rrt_mean": rrt_mean,
        "rrt_min": float(rrt.min()) if len(rrt) else math.nan,
        "reference_length": float(ref),
        "ratio_raw_over_ref": ratio,
        "raw_beats_rrt_mean": beats,
        "error": outcome.error,
    }


def _timing_row(outcome: ScenarioOutcome) -> Dict[str, Any]:
    steps = np.asarray(outcome.step_times, dtype=float)
    solves = np.asarray(outcome.solve_times, dtype=float)
    return {
        "scenario_id": outcome.scenario_id,
        "steps": int(len(steps)),
        "per_step_time_mean": float(steps.mean()) if len(steps) else math.nan,
        "per_step_time_std": float(steps.std()) if len(steps) else math.nan,
        "solve_time_mean": float(solves.mean()) if len(solves) else math.nan,
    }


def _encode_lengths(values: Tuple[float, ...]) -> str:
    return _LIST_SEP.join(FLOAT_FORMAT % v for v in values)


def _decode_lengths(text: Any) -> Tuple[float, ...]:
    if not isinstance(text, str) or not text:
        return ()
    return tuple(float(v) for v in text.split(_LIST_SEP))


class SuiteResult:
    """
    Comparison table for one suite run.

    `table` has one row per scenario in COLUMNS order, sorted by mean RRT
    length (scenarios without an RRT success last, ties by id). `timing`
    holds the per-step wall-clock statistics keyed by scenario id.
    """

    def __init__(self, table: pd.DataFrame, timing: Optional[pd.DataFrame] = None):
        self.table = table[COLUMNS].reset_index(drop=True)
        self.timing = timing if timing is not None else pd.DataFrame(columns=TIMING_COLUMNS)
        self.traces: Dict[str, RunTrace] = {}

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[ScenarioOutcome]) -> "SuiteResult":
        table = pd.DataFrame([_row(o) for o in outcomes], columns=COLUMNS)
        if len(table):
            table = table.sort_values(["rrt_mean", "scenario_id"], na_position="last", kind="mergesort")
        timing = pd.DataFrame([_timing_row(o) for o in outcomes], columns=TIMING_COLUMNS)
        result = cls(table, timing)
        result.traces = {o.scenario_id: o.trace for o in outcomes if o.trace is not None}
        return result

    def __len__(self) -> int:
        return len(self.table)

    def step_times(self) -> pd.Series:
        return self.timing.set_index("scenario_id")["per_step_time_mean"]

    # ── aggregates ───────────────────────────────────────────────────────────

    def summary(self) -> pd.DataFrame:
        rows = []
        if len(self.table) == 0:
            return pd.DataFrame(columns=SUMMARY_COLUMNS)
        merged = self.table.merge(self.timing, on="scenario_id", how="left")
        for (suite, variant), group in merged.groupby(["suite", "variant"], sort=True):
            ratio = group["ratio_raw_over_ref"].dropna()
            step = group["per_step_time_mean"].dropna()
            rows.append({
                "suite": suite,
                "variant": variant,
                "scenarios": int(len(group)),
                "raw_success": int((group["raw_outcome"] == "reached_goal").sum()),
                "rrt_success_rate": float(group["rrt_success"].sum() / max(1, group["rrt_lengths"].map(len).sum())),
                "reference_success": int(np.isfinite(group["reference_length"]).sum()),
                "ratio_median": float(ratio.median()) if len(ratio) else math.nan,
                "ratio_max": float(ratio.max()) if len(ratio) else math.nan,
                "raw_beats_rrt_share": float(group["raw_beats_rrt_mean"].sum() / len(group)),
                "step_time_mean": float(step.mean()) if len(step) else math.nan,
                "step_time_std": float(step.std(ddof=0)) if len(step) else math.nan,
            })
        return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    def ratio_violations(self, slack: float) -> pd.DataFrame:
        """Rows where RAW beats the reference by more than the lattice slack."""
        return self.table[self.table["ratio_raw_over_ref"] < 1.0 - slack]

    # ── persistence ──────────────────────────────────────────────────────────

    @staticmethod
    def timing_path(path: Path) -> Path:
        path = Path(path)
        return path.with_name(f"{path.stem}_timing.csv")

    @staticmethod
    def summary_path(path: Path) -> Path:
        path = Path(path)
        return path.with_name(f"{path.stem}_summary.csv")

    def write_csv(self, path: Path, companions: bool = True) -> Path:
        """Main table to `path`; timing and summary beside it unless `companions` is False."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        out = self.table.copy()
        out["rrt_lengths"] = out["rrt_lengths"].map(_encode_lengths)
        out.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
        if companions:
            self.timing.to_csv(self.timing_path(path), index=False, float_format=FLOAT_FORMAT,
                               encoding="utf-8", lineterminator="\n")
            self.summary().to_csv(self.summary_path(path), index=False, float_format=FLOAT_FORMAT,
                                  encoding="utf-8", lineterminator="\n")
        logger.info(f"Wrote {len(self.table)} scenario rows to {path}")
        return path

    @classmethod
    def read_csv(cls, path: Path) -> "SuiteResult":
        path = Path(path)
        table = pd.read_csv(path, dtype={"scenario_id": str, "suite": str, "variant": str, "raw_outcome": str,
                                         "rrt_lengths": str, "error": str}, keep_default_na=False,
                            na_values={c: ["nan", "NaN", ""] for c in COLUMNS
                                       if c not in ("scenario_id", "suite", "variant", "raw_outcome",
                                                    "rrt_lengths", "error")})
        table["rrt_lengths"] = table["rrt_lengths"].map(_decode_lengths)
        table["raw_beats_rrt_mean"] = table["raw_beats_rrt_mean"].astype(bool)
        for column in ("raw_steps", "rrt_success"):
            table[column] = table[column].astype(int)
        for column in ("raw_path_length", "raw_length", "rrt_mean", "rrt_min", "reference_length",
                       "ratio_raw_over_ref"):
            table[column] = table[column].astype(float)
        timing = None
        timing_file = cls.timing_path(path)
        if timing_file.exists():
            timing = pd.read_csv(timing_file, dtype={"scenario_id": str})
        return cls(table, timing)

    def equals(self, other: "SuiteResult") -> bool:
        """Field-by-field equality of the main tables (NaN equals NaN)."""
        if list(self.table.columns) != list(other.table.columns) or len(self) != len(other):
            return False
        for column in COLUMNS:
            a, b = self.table[column].tolist(), other.table[column].tolist()
            for x, y in zip(a, b):
                if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
                    continue
                if x != y:
                    return False
        return True
