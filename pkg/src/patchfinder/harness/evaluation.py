"""Batch extraction and accuracy evaluation.

Accuracy is the field-level micro-average: correct (document, field) pairs
over all pairs that carry ground truth, with per-field and per-group
breakdowns. A document that fails entirely (unreadable image, no valid patch)
is recorded as incorrect and never aborts the batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from PIL import Image

from ..backend import InferenceBackend
from ..filters import FieldKind, answers_match
from ..patch_grid import GridSpec
from ..selection import ExtractionTask, SelectionResult, run_patchfinder
from ..size_optimizer import DevItem
from .config import RunConfig, make_task
from .manifest import DatasetManifest, ManifestError, validate_templates


@dataclass(frozen=True)
class LoadedDocument:
    """A document ready to run: decoded image plus its extraction tasks."""

    document_id: str
    image: Image.Image
    tasks: tuple[tuple[ExtractionTask, str | None], ...]  # (task, ground_truth)
    group: str = "default"


@dataclass(frozen=True)
class PredictionRecord:
    document_id: str
    field: str
    kind: FieldKind
    group: str
    answer: str | None
    pc: float | None
    patch_index: int | None
    aborted_reason: str | None
    verdict: str | None  # "correct" | "incorrect" | None when no ground truth

    def to_dict(self) -> dict:
        return {
            "document_id": self.document_id,
            "field": self.field,
            "kind": self.kind.value,
            "group": self.group,
            "answer": self.answer,
            "pc": self.pc,
            "patch_index": self.patch_index,
            "aborted_reason": self.aborted_reason,
            "verdict": self.verdict,
        }


@dataclass(frozen=True)
class EvalReport:
    overall_accuracy: float
    correct_fields: int
    scored_fields: int
    per_field: dict[str, float]
    per_group: dict[str, float]
    verdicts: tuple[dict, ...]

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": self.overall_accuracy,
            "correct_fields": self.correct_fields,
            "scored_fields": self.scored_fields,
            "per_field": self.per_field,
            "per_group": self.per_group,
            "verdicts": list(self.verdicts),
        }


@dataclass(frozen=True)
class BatchResult:
    predictions: tuple[PredictionRecord, ...]
    report: EvalReport | None
    traces: dict[tuple[str, str], SelectionResult]


def _accuracy(records: list[PredictionRecord]) -> float:
    return sum(r.verdict == "correct" for r in records) / len(records)


def evaluate_predictions(predictions: tuple[PredictionRecord, ...]) -> EvalReport | None:
    """Aggregate verdicts into a report; None when nothing had ground truth."""
    scored = [r for r in predictions if r.verdict is not None]
    if not scored:
        return None
    per_field = {name: _accuracy([r for r in scored if r.field == name])
                 for name in sorted({r.field for r in scored})}
    per_group = {group: _accuracy([r for r in scored if r.group == group])
                 for group in sorted({r.group for r in scored})}
    return EvalReport(
        overall_accuracy=_accuracy(scored),
        correct_fields=sum(r.verdict == "correct" for r in scored),
        scored_fields=len(scored),
        per_field=per_field,
        per_group=per_group,
        verdicts=tuple(
            {"document_id": r.document_id, "field": r.field, "verdict": r.verdict, "pc": r.pc}
            for r in scored
        ),
    )


def run_batch_documents(documents: list[LoadedDocument], backend: InferenceBackend,
                        grid: GridSpec, *, include_stop_token: bool = False) -> BatchResult:
    predictions: list[PredictionRecord] = []
    traces: dict[tuple[str, str], SelectionResult] = {}
    for doc in documents:
        for task, truth in doc.tasks:
            result = run_patchfinder(doc.image, task, grid, backend,
                                     include_stop_token=include_stop_token)
            traces[(doc.document_id, task.field_name)] = result
            answer = result.answer
            verdict = None
            if truth is not None:
                correct = answer is not None and answers_match(answer, truth, task.kind)
                verdict = "correct" if correct else "incorrect"
            predictions.append(PredictionRecord(
                document_id=doc.document_id,
                field=task.field_name,
                kind=task.kind,
                group=doc.group,
                answer=answer,
                pc=result.winner.pc if result.winner is not None else None,
                patch_index=result.winner.patch_index if result.winner is not None else None,
                aborted_reason=result.aborted_reason,
                verdict=verdict,
            ))
    records = tuple(predictions)
    return BatchResult(predictions=records, report=evaluate_predictions(records), traces=traces)


def load_documents(manifest: DatasetManifest, config: RunConfig) -> tuple[list[LoadedDocument], list[PredictionRecord]]:
    """Materialize manifest documents; unreadable images become failure
    records (counted incorrect when ground truth exists) instead of aborting."""
    validate_templates(manifest, config.template_registry())
    documents: list[LoadedDocument] = []
    failures: list[PredictionRecord] = []
    for doc in manifest.documents:
        try:
            with Image.open(doc.image_path) as handle:
                image = handle.copy()
        except Exception as exc:
            for spec in doc.fields:
                failures.append(PredictionRecord(
                    document_id=doc.document_id,
                    field=spec.name,
                    kind=spec.kind,
                    group=doc.group,
                    answer=None,
                    pc=None,
                    patch_index=None,
                    aborted_reason=f"document_error: {exc}",
                    verdict="incorrect" if spec.ground_truth is not None else None,
                ))
            continue
        tasks = tuple(
            (make_task(spec.name, spec.kind, config, template=spec.template,
                       extra_templates=manifest.templates), spec.ground_truth)
            for spec in doc.fields
        )
        documents.append(LoadedDocument(document_id=doc.document_id, image=image,
                                        tasks=tasks, group=doc.group))
    return documents, failures


def dev_items(manifest: DatasetManifest, config: RunConfig) -> list[DevItem]:
    """Flatten a manifest into per-(document, field) sweep inputs. Unlike a
    batch run, a development set must be fully readable."""
    documents, failures = load_documents(manifest, config)
    if failures:
        raise ManifestError(f"unreadable development documents: "
                            f"{sorted({f.document_id for f in failures})}")
    return [
        DevItem(document_id=doc.document_id, image=doc.image, task=task,
                ground_truth=truth, group=doc.group)
        for doc in documents
        for task, truth in doc.tasks
    ]


def run_batch(manifest: DatasetManifest, backend: InferenceBackend, config: RunConfig) -> BatchResult:
    """Extract every (document, field) in the manifest and evaluate when
    ground truth is present."""
    documents, failures = load_documents(manifest, config)
    result = run_batch_documents(documents, backend, config.grid,
                                 include_stop_token=config.include_stop_token)
    if failures:
        records = tuple(list(result.predictions) + failures)
        return BatchResult(predictions=records, report=evaluate_predictions(records),
                           traces=result.traces)
    return result


def write_predictions(predictions: tuple[PredictionRecord, ...], path: str | Path) -> None:
    """One JSON record per line, stable key order, byte-deterministic."""
    with open(path, "w", encoding="utf-8") as handle:
        for record in predictions:
            handle.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def write_eval_report(report: EvalReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, ensure_ascii=False, indent=2)
        handle.write("\n")
