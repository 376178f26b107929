"""Experiment reports and their CSV/JSON serialisation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

CSV_COLUMNS = ("method", "p", "lambda", "success_rate", "mean_rel_error", "trials")


class ReportIOError(OSError):
    pass


@dataclass
class TrialRecord:
    """One solve.  ``lam_grid`` is the grid value (None when lambda is chosen
    per instance or does not apply); ``lam`` is the value actually used."""

    method: str
    p: float
    lam: Optional[float]
    lam_grid: Optional[float]
    p_index: int
    trial: int
    error: float
    iterations: int
    converged: bool
    success: bool


@dataclass
class Aggregate:
    method: str
    p: float
    lam: Optional[float]
    success_rate: float
    mean_rel_error: float
    trials: int


@dataclass
class ExperimentReport:
    aggregates: List[Aggregate] = field(default_factory=list)
    records: List[TrialRecord] = field(default_factory=list)
    provenance: Dict = field(default_factory=dict)

    def select(self, method: str, lam: Optional[float] = None) -> List[Aggregate]:
        """Aggregates of one method, sorted by p; ``lam`` filters grid runs."""
        rows = [
            a for a in self.aggregates
            if a.method == method and (lam is None or (a.lam is not None and math.isclose(a.lam, lam)))
        ]
        return sorted(rows, key=lambda a: a.p)


def aggregate(records: List[TrialRecord], keys) -> List[Aggregate]:
    """One aggregate per (method, p_index, lam_grid) key, in the order given.

    Without a grid value the aggregate's lambda is the mean of the values
    used, or None when no lambda applies.
    """
    groups: Dict[tuple, List[TrialRecord]] = {k: [] for k in keys}
    for rec in records:
        groups[(rec.method, rec.p_index, rec.lam_grid)].append(rec)
    out = []
    for (method, _, lam), recs in groups.items():
        if not recs:
            continue
        if lam is None:
            used = [r.lam for r in recs if r.lam is not None]
            lam = float(sum(used) / len(used)) if used else None
        hits = sum(r.success for r in recs)
        out.append(
            Aggregate(
                method=method,
                p=recs[0].p,
                lam=lam,
                success_rate=hits / len(recs),
                mean_rel_error=float(sum(r.error for r in recs) / len(recs)),
                trials=len(recs),
            )
        )
    return out


def emit_report(report: ExperimentReport, fmt: str, path) -> Path:
    """Write aggregates as CSV or the full report as JSON."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(CSV_COLUMNS)
                for a in report.aggregates:
                    w.writerow([a.method, _num(a.p), "" if a.lam is None else _num(a.lam),
                                _num(a.success_rate), _num(a.mean_rel_error), int(a.trials)])
        elif fmt == "json":
            doc = {
                "aggregates": [asdict(a) for a in report.aggregates],
                "records": [asdict(r) for r in report.records],
                "provenance": report.provenance,
            }
            path.write_text(json.dumps(doc, indent=1, default=_json_default))
        else:
            raise ValueError(f"unknown report format {fmt!r}; use 'csv' or 'json'")
    except OSError as exc:
        raise ReportIOError(f"cannot write report to {path}: {exc}") from exc
    return path


def _num(x) -> str:
    # repr of a Python float round-trips exactly.
    return repr(float(x))


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def read_csv_aggregates(path) -> List[Aggregate]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected CSV header {rows[:1]}")
    return [
        Aggregate(m, float(p), None if lam == "" else float(lam), float(s), float(e), int(t))
        for m, p, lam, s, e, t in rows[1:]
    ]


def load_report(path) -> ExperimentReport:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ReportIOError(f"cannot read {path}: {exc}") from exc
    return ExperimentReport(
        aggregates=[Aggregate(**a) for a in doc["aggregates"]],
        records=[TrialRecord(**r) for r in doc["records"]],
        provenance=doc.get("provenance", {}),
    )
