"""Tabular emitters for sweep reports (plot-ready CSV files)."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from ..size_optimizer import SweepReport


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_sweep_tables(report: SweepReport, out_dir: str | Path) -> dict[str, Path]:
    """Write the per-size statistics table, the raw per-document records, and
    the full report JSON; returns the paths keyed by table name."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "table": out_dir / "sweep_table.csv",
        "raw": out_dir / "sweep_raw.csv",
        "report": out_dir / "sweep_report.json",
    }

    with open(paths["table"], "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fraction", "mean_pc", "std_pc", "n", "accuracy", "group"])
        for row in list(report.rows) + list(report.group_rows):
            writer.writerow([
                _fmt(row.fraction), _fmt(row.mean_pc), _fmt(row.std_pc),
                row.count, _fmt(row.accuracy), row.group or "",
            ])

    with open(paths["raw"], "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["fraction", "document_id", "field", "group", "pc", "answer", "correct"])
        for record in report.raw:
            writer.writerow([
                _fmt(record.fraction), record.document_id, record.field, record.group,
                _fmt(record.pc), record.answer if record.answer is not None else "",
                "" if record.correct is None else str(record.correct).lower(),
            ])

    with open(paths["report"], "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, ensure_ascii=False, indent=2)
        handle.write("\n")
    return paths
