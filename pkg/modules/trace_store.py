"""
Trace Store - Run Records and Their Persistence
Step records, run traces, and the JSON Lines trace format read back by verify
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple

from modules.errors import TraceFormatError
from modules.geometry import Ellipsoid, Pose
from modules.steering import RsPath

logger = logging.getLogger(__name__)

TRACE_VERSION = 1

OUTCOME_REACHED_GOAL = "reached_goal"
OUTCOME_NO_FEASIBLE_WAYPOINT = "no_feasible_waypoint"
OUTCOME_MAX_STEPS = "max_steps"
OUTCOME_SOLVER_FAILURE = "solver_failure"
OUTCOME_SAFETY_VIOLATION = "safety_violation"
OUTCOMES = (OUTCOME_REACHED_GOAL, OUTCOME_NO_FEASIBLE_WAYPOINT, OUTCOME_MAX_STEPS,
            OUTCOME_SOLVER_FAILURE, OUTCOME_SAFETY_VIOLATION)


# ── Records ──────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class SafetyChecks:
    inside_prev: bool
    inside_curr: bool
    overlap: bool
    radii_identity_residual: float
    delta_t_positive: bool = True

    @property
    def passed(self) -> bool:
        return (self.inside_prev and self.inside_curr and self.overlap and self.delta_t_positive
                and self.radii_identity_residual <= 1e-6)

    def failed_checks(self) -> List[str]:
        failed = [name for name in ("inside_prev", "inside_curr", "overlap", "delta_t_positive")
                  if not getattr(self, name)]
        if not self.radii_identity_residual <= 1e-6:
            failed.append("radii_identity")
        return failed

    def to_dict(self) -> Dict[str, Any]:
        return {"inside_prev": self.inside_prev, "inside_curr": self.inside_curr,
                "overlap": self.overlap, "radii_identity_residual": float(self.radii_identity_residual),
                "delta_t_positive": self.delta_t_positive}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SafetyChecks":
        return cls(inside_prev=bool(data["inside_prev"]), inside_curr=bool(data["inside_curr"]),
                   overlap=bool(data["overlap"]),
                   radii_identity_residual=float(data["radii_identity_residual"]),
                   delta_t_positive=bool(data.get("delta_t_positive", True)))


@dataclass(frozen=True)
class StepRecord:
    """One executed planner step. Ellipsoids are world frame; None in the unfiltered variant."""
    pose_before: Pose
    pose_after: Pose
    ellipsoid: Optional[Ellipsoid]
    ellipsoid_prev: Optional[Ellipsoid]
    waypoint: Tuple[float, float]
    waypoint_index: int
    delta_t: float
    path: RsPath
    lambda_count_infeasible: int
    safety_checks: Optional[SafetyChecks]
    min_clearance: float
    solve_time: float = 0.0
    step_time: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        """Serialisable form; wall-clock fields are left out."""
        return {
            "kind": "step",
            "pose_before": list(self.pose_before.as_tuple()),
            "pose_after": list(self.pose_after.as_tuple()),
            "ellipsoid": _ellipsoid_out(self.ellipsoid),
            "ellipsoid_prev": _ellipsoid_out(self.ellipsoid_prev),
            "waypoint": [float(self.waypoint[0]), float(self.waypoint[1])],
            "waypoint_index": int(self.waypoint_index),
            "delta_t": float(self.delta_t),
            "path": self.path.to_dict(),
            "lambda_count_infeasible": int(self.lambda_count_infeasible),
            "safety_checks": None if self.safety_checks is None else self.safety_checks.to_dict(),
            "min_clearance": _finite_or_none(self.min_clearance),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StepRecord":
        checks = data.get("safety_checks")
        clearance = data.get("min_clearance")
        return cls(
            pose_before=Pose(*data["pose_before"]),
            pose_after=Pose(*data["pose_after"]),
            ellipsoid=_ellipsoid_in(data.get("ellipsoid")),
            ellipsoid_prev=_ellipsoid_in(data.get("ellipsoid_prev")),
            waypoint=(float(data["waypoint"][0]), float(data["waypoint"][1])),
            waypoint_index=int(data["waypoint_index"]),
            delta_t=float(data["delta_t"]),
            path=RsPath.from_dict(data["path"]),
            lambda_count_infeasible=int(data["lambda_count_infeasible"]),
            safety_checks=None if checks is None else SafetyChecks.from_dict(checks),
            min_clearance=float("inf") if clearance is None else float(clearance),
        )


@dataclass
class RunTrace:
    records: List[StepRecord] = field(default_factory=list)
    outcome: str = OUTCOME_MAX_STEPS
    path_length: float = 0.0
    wall_time: float = 0.0
    comparison_length: Optional[float] = None
    message: str = ""
    filtered: bool = True

    @property
    def reached_goal(self) -> bool:
        return self.outcome == OUTCOME_REACHED_GOAL

    @property
    def step_times(self) -> List[float]:
        return [r.step_time for r in self.records]

    @property
    def solve_times(self) -> List[float]:
        return [r.solve_time for r in self.records]

    @property
    def min_clearance(self) -> float:
        return min((r.min_clearance for r in self.records), default=float("inf"))

    def footer(self) -> Dict[str, Any]:
        return {"kind": "footer", "outcome": self.outcome, "path_length": float(self.path_length),
                "comparison_length": self.comparison_length, "steps": len(self.records),
                "message": self.message, "filtered": self.filtered}


def _ellipsoid_out(e: Optional[Ellipsoid]) -> Optional[List[float]]:
    return None if e is None else [float(v) for v in e.as_vector()]


def _ellipsoid_in(values: Optional[List[float]]) -> Optional[Ellipsoid]:
    return None if values is None else Ellipsoid.from_vector(values)


def _finite_or_none(value: float) -> Optional[float]:
    value = float(value)
    return value if value != float("inf") else None


# ── Persistence ──────────────────────────────────────────────────────────────

@dataclass
class TraceFile:
    header: Dict[str, Any]
    records: List[StepRecord]
    footer: Dict[str, Any]


class TraceStore:
    """
    Writes and reads JSON Lines run traces.

    Line 1 is the header (environment, planner parameters, weights), then one
    line per step, then the footer. Keys are sorted so equal runs give equal
    bytes. Per-step wall times go to a companion ``<stem>_timing.csv``.
    """

    def __init__(self, path: Path):
        self.path = Path(path)

    @property
    def timing_path(self) -> Path:
        return self.path.with_name(f"{self.path.stem}_timing.csv")

    @staticmethod
    def _dump(obj: Dict[str, Any]) -> str:
        return json.dumps(obj, sort_keys=True, allow_nan=False)

    def write(self, trace: RunTrace, environment: Dict[str, Any], params: Dict[str, Any],
              weights: Optional[Dict[str, Any]] = None, write_timing: bool = True) -> Path:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        header = {"kind": "header", "version": TRACE_VERSION, "environment": environment,
                  "params": params, "weights": weights}
        with open(self.path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self._dump(header) + "\n")
            for record in trace.records:
                f.write(self._dump(record.to_dict()) + "\n")
            f.write(self._dump(trace.footer()) + "\n")
        if write_timing:
            self.write_timing(trace)
        logger.info(f"Wrote trace with {len(trace.records)} steps to {self.path}")
        return self.path

    def write_timing(self, trace: RunTrace) -> Path:
        with open(self.timing_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "solve_time", "step_time"])
            for k, record in enumerate(trace.records):
                writer.writerow([k, f"{record.solve_time:.6f}", f"{record.step_time:.6f}"])
        return self.timing_path

    def _lines(self) -> Iterator[Tuple[int, Dict[str, Any]]]:
        if not self.path.exists():
            raise TraceFormatError(str(self.path), 0, "file not found")
        with open(self.path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise TraceFormatError(str(self.path), line_no, f"invalid JSON: {e.msg}") from e
                if not isinstance(obj, dict) or "kind" not in obj:
                    raise TraceFormatError(str(self.path), line_no, "record without a kind")
                yield line_no, obj

    def read(self) -> TraceFile:
        header, footer = None, None
        records: List[StepRecord] = []
        for line_no, obj in self._lines():
            kind = obj["kind"]
            if footer is not None:
                raise TraceFormatError(str(self.path), line_no, "data after footer")
            if kind == "header":
                if header is not None or records:
                    raise TraceFormatError(str(self.path), line_no, "header must be the first line")
                if obj.get("version") != TRACE_VERSION:
                    raise TraceFormatError(str(self.path), line_no, f"unsupported version {obj.get('version')}")
                header = obj
            elif kind == "step":
                if header is None:
                    raise TraceFormatError(str(self.path), line_no, "step before header")
                try:
                    records.append(StepRecord.from_dict(obj))
                except (KeyError, TypeError, ValueError) as e:
                    raise TraceFormatError(str(self.path), line_no, f"bad step record: {e}") from e
            elif kind == "footer":
                footer = obj
            else:
                raise TraceFormatError(str(self.path), line_no, f"unknown kind {kind!r}")
        if header is None:
            raise TraceFormatError(str(self.path), 1, "missing header")
        if footer is None:
            raise TraceFormatError(str(self.path), len(records) + 2, "missing footer (truncated trace)")
        if footer.get("outcome") not in OUTCOMES:
            raise TraceFormatError(str(self.path), len(records) + 2, f"unknown outcome {footer.get('outcome')!r}")
        logger.debug(f"Read trace {self.path}: {len(records)} steps, outcome {footer['outcome']}")
        return TraceFile(header=header, records=records, footer=footer)
