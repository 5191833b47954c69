"""Per-patch confidence tables for external plotting (confidence heatmaps)."""

from __future__ import annotations

import csv
from pathlib import Path

from ..selection import SelectionResult

HEATMAP_COLUMNS = ("index", "x0", "y0", "w", "h", "pc", "filtered", "reason")


def heatmap_rows(trace_doc: dict | SelectionResult) -> list[dict]:
    """Flatten a run trace (either a SelectionResult or its serialized form)
    into one row per patch: rect, confidence, and filter status."""
    if isinstance(trace_doc, SelectionResult):
        trace_doc = trace_doc.to_dict()
    records = trace_doc.get("trace") or []
    if not records:
        raise ValueError("trace holds no patches")
    rows = []
    for record in records:
        rect = record["rect"]
        rows.append({
            "index": record["index"],
            "x0": rect["x0"],
            "y0": rect["y0"],
            "w": rect["w"],
            "h": rect["h"],
            "pc": record["pc"],
            "filtered": record["filtered"],
            "reason": record["reason"],
        })
    return rows


def write_heatmap_csv(trace_doc: dict | SelectionResult, path: str | Path) -> None:
    rows = heatmap_rows(trace_doc)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(HEATMAP_COLUMNS)
        for row in rows:
            pc = row["pc"]
            writer.writerow([
                row["index"], row["x0"], row["y0"], row["w"], row["h"],
                repr(pc) if pc is not None else "",
                str(row["filtered"]).lower(),
                row["reason"] or "",
            ])
