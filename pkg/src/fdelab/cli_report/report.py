"""Report files: report.json, summary.csv and per-trajectory series."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

from fdelab.audit.records import AuditRecord
from fdelab.evolution import Trajectory
from fdelab.serialization import dumps, write_csv

SUMMARY_HEADER = ("check_id", "status", "constant", "margin", "drift")


def _constant_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (list, tuple)):
        return ";".join(format(float(v), ".17g") for v in value)
    return format(float(value), ".17g")


def report_json(records: Sequence[AuditRecord]) -> str:
    ordered = sorted(records, key=lambda r: r.check_id)
    return dumps([r.to_dict() for r in ordered])


def write_report(records: Sequence[AuditRecord], traj_summaries: Mapping[str, Trajectory],
                 path: str | Path) -> list[Path]:
    """Write the report directory and return the files written.

    Raises:
        ValueError: no records.
        OSError: the directory cannot be created or written.
    """
    if not records:
        raise ValueError("report needs at least one record")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    target = out / "report.json"
    target.write_text(report_json(records), encoding="utf-8")
    written.append(target)

    ordered = sorted(records, key=lambda r: r.check_id)
    rows = [(r.check_id, r.status, _constant_text(r.empirical_constant), r.worst_margin,
             "" if r.refinement_drift is None else r.refinement_drift) for r in ordered]
    target = out / "summary.csv"
    write_csv(target, SUMMARY_HEADER, rows)
    written.append(target)

    if traj_summaries:
        series = out / "series"
        series.mkdir(exist_ok=True)
        for name in sorted(traj_summaries):
            target = series / f"{name}.csv"
            traj_summaries[name].to_csv(target)
            written.append(target)
    return written
