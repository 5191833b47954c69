"""Patch-size optimization over a development set.

Sweeps candidate area fractions, records the winner patch's confidence for
every (document, field) run, and picks the operating size from the
high-confidence low-variance plateau: among sizes whose mean confidence is
within ``plateau_delta`` nats of the best and whose spread is at most
``max_std``, the largest wins. Too-small patches miss the target text (low
confidence); too-large ones dilute it (high variance) — the plateau sits in
between.

Ground truth, when present in the dev set, feeds an optional per-size
accuracy column only; the size choice itself uses confidence alone.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field

from PIL import Image

from .backend import InferenceBackend
from .filters import answers_match
from .patch_grid import GridSpec
from .selection import ExtractionTask, run_patchfinder

DEFAULT_CANDIDATE_FRACTIONS = (0.02, 0.05, 0.10, 0.15, 0.167, 0.20, 0.23, 0.25, 0.30, 0.40, 0.50)
DEFAULT_PLATEAU_DELTA = 0.05
DEFAULT_MAX_STD = 0.5


class SweepError(ValueError):
    """Unusable sweep configuration or an empty development set."""


@dataclass(frozen=True)
class SweepConfig:
    candidate_fractions: tuple[float, ...] = DEFAULT_CANDIDATE_FRACTIONS
    plateau_delta: float = DEFAULT_PLATEAU_DELTA
    max_std: float = DEFAULT_MAX_STD

    def __post_init__(self) -> None:
        fractions = self.candidate_fractions
        if not fractions:
            raise SweepError("candidate_fractions must be nonempty")
        if any(not 0.0 < s <= 1.0 for s in fractions):
            raise SweepError(f"candidate fractions must lie in (0, 1]: {fractions}")
        if any(a >= b for a, b in zip(fractions, fractions[1:])):
            raise SweepError(f"candidate fractions must be strictly increasing: {fractions}")


@dataclass(frozen=True)
class DevItem:
    """One (document, field) unit of the development set."""

    document_id: str
    image: Image.Image
    task: ExtractionTask
    ground_truth: str | None = None
    group: str = "default"


@dataclass(frozen=True)
class RawSweepRecord:
    fraction: float
    document_id: str
    field: str
    group: str
    pc: float | None  # winner patch's confidence; None when every patch was filtered
    answer: str | None
    correct: bool | None

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "document_id": self.document_id,
            "field": self.field,
            "group": self.group,
            "pc": self.pc,
            "answer": self.answer,
            "correct": self.correct,
        }


@dataclass(frozen=True)
class SizeStats:
    """Winner-confidence statistics for one candidate size (pooled when
    ``group`` is None)."""

    fraction: float
    mean_pc: float | None
    std_pc: float | None
    count: int
    accuracy: float | None = None
    group: str | None = None

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "mean_pc": self.mean_pc,
            "std_pc": self.std_pc,
            "count": self.count,
            "accuracy": self.accuracy,
            "group": self.group,
        }


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[SizeStats, ...]
    chosen_fraction: float
    raw: tuple[RawSweepRecord, ...] = field(default_factory=tuple)
    group_rows: tuple[SizeStats, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "group_rows": [r.to_dict() for r in self.group_rows],
            "chosen_fraction": self.chosen_fraction,
            "raw": [r.to_dict() for r in self.raw],
        }


def _stats_for(fraction: float, records: list[RawSweepRecord], group: str | None = None) -> SizeStats:
    pcs = [r.pc for r in records if r.pc is not None]
    verdicts = [r.correct for r in records if r.correct is not None]
    return SizeStats(
        fraction=fraction,
        mean_pc=math.fsum(pcs) / len(pcs) if pcs else None,
        std_pc=statistics.pstdev(pcs) if pcs else None,
        count=len(pcs),
        accuracy=sum(verdicts) / len(verdicts) if verdicts else None,
        group=group,
    )


def sweep(items: list[DevItem], backend: InferenceBackend, config: SweepConfig | None = None, *,
          aspect_mode: str = "square", overlap: float = 0.5,
          include_stop_token: bool = False) -> SweepReport:
    """Run the full pipeline at every candidate size over the dev set.

    Sizes run sequentially; within a size, per-document scoring fans out under
    the backend's parallelism cap (inside run_patchfinder). The recorded
    statistic is the winner patch's confidence per (document, field) run.
    """
    config = config or SweepConfig()
    if not items:
        raise SweepError("development set is empty")
    raw: list[RawSweepRecord] = []
    for fraction in config.candidate_fractions:
        spec = GridSpec(area_fraction=fraction, aspect_mode=aspect_mode, overlap=overlap)
        for item in items:
            result = run_patchfinder(item.image, item.task, spec, backend,
                                     include_stop_token=include_stop_token)
            answer = result.answer
            correct: bool | None = None
            if item.ground_truth is not None:
                correct = answer is not None and answers_match(answer, item.ground_truth, item.task.kind)
            raw.append(RawSweepRecord(
                fraction=fraction,
                document_id=item.document_id,
                field=item.task.field_name,
                group=item.group,
                pc=result.winner.pc if result.winner is not None else None,
                answer=answer,
                correct=correct,
            ))

    rows = []
    group_rows = []
    groups = sorted({r.group for r in raw})
    for fraction in config.candidate_fractions:
        at_size = [r for r in raw if r.fraction == fraction]
        rows.append(_stats_for(fraction, at_size))
        if len(groups) > 1:
            for group in groups:
                group_rows.append(_stats_for(fraction, [r for r in at_size if r.group == group], group=group))

    chosen = choose_size(rows, plateau_delta=config.plateau_delta, max_std=config.max_std)
    return SweepReport(rows=tuple(rows), chosen_fraction=chosen, raw=tuple(raw),
                       group_rows=tuple(group_rows))


def sweep_report_from_dict(data: dict) -> SweepReport:
    return SweepReport(
        rows=tuple(SizeStats(**row) for row in data.get("rows", [])),
        group_rows=tuple(SizeStats(**row) for row in data.get("group_rows", [])),
        chosen_fraction=float(data["chosen_fraction"]),
        raw=tuple(RawSweepRecord(**row) for row in data.get("raw", [])),
    )


def choose_size(report, plateau_delta: float = DEFAULT_PLATEAU_DELTA,
                max_std: float = DEFAULT_MAX_STD) -> float:
    """Pick the operating size from sweep statistics.

    Qualifying sizes have mean confidence within ``plateau_delta`` of the best
    mean and std at most ``max_std``; the largest qualifying size wins. If
    nothing qualifies, fall back to the best mean (ties to the larger size).
    """
    rows = report.rows if isinstance(report, SweepReport) else tuple(report)
    usable = [r for r in rows if r.count > 0 and r.mean_pc is not None]
    if not usable:
        raise SweepError("no candidate size produced a scored prediction")
    best_mean = max(r.mean_pc for r in usable)
    qualifying = [r for r in usable
                  if r.mean_pc >= best_mean - plateau_delta and r.std_pc <= max_std]
    if qualifying:
        return max(r.fraction for r in qualifying)
    return max(usable, key=lambda r: (r.mean_pc, r.fraction)).fraction
