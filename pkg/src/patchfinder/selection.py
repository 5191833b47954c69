"""End-to-end confidence-based prediction for one document and one field.

Builds the patch grid, scores every patch through the backend, filters
implausible answers, and selects the unfiltered patch with the highest
confidence (ties broken by lowest patch index, i.e. reading order). The full
per-patch trace is always kept for audit, reports, and heatmaps.
"""

from __future__ import annotations

import dataclasses
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from PIL import Image

from .backend import BackendError, InferenceBackend, InferenceRequest
from .confidence import (
    EmptySequenceError,
    PatchPrediction,
    decode_answer,
    patch_confidence,
)
from .filters import FieldKind, FilterChain, apply_filters, default_chain
from .patch_grid import GridSpec, ImageDims, PatchGrid, PatchRect, build_grid, crop

NO_VALID_PATCH = "no_valid_patch"


@dataclass(frozen=True)
class ExtractionTask:
    """One field to extract: the prompt sent with every patch and the filter
    chain its answers must pass."""

    field_name: str
    kind: FieldKind
    prompt: str
    chain: FilterChain | None = None
    max_tokens: int = 64

    def effective_chain(self) -> FilterChain:
        return self.chain if self.chain is not None else default_chain(self.kind)


@dataclass(frozen=True)
class SelectionResult:
    """Outcome for one (document, field) run. ``winner`` is None only when
    every patch was filtered, in which case ``aborted_reason`` says why."""

    grid: PatchGrid
    trace: tuple[PatchPrediction, ...]
    winner: PatchPrediction | None = None
    aborted_reason: str | None = None

    @property
    def answer(self) -> str | None:
        return self.winner.answer_text if self.winner is not None else None

    def to_dict(self) -> dict:
        records = []
        for prediction, rect in zip(self.trace, self.grid.patches):
            record = prediction.to_dict()
            record["rect"] = rect.to_dict()
            records.append(record)
        return {
            "grid": self.grid.to_dict(),
            "winner": self.winner.to_dict() if self.winner is not None else None,
            "aborted_reason": self.aborted_reason,
            "trace": records,
        }


def encode_patch(image: Image.Image) -> bytes:
    """Losslessly encode a crop for transmission."""
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def _score_one(image: Image.Image, rect: PatchRect, task: ExtractionTask,
               backend: InferenceBackend, include_stop_token: bool) -> PatchPrediction:
    request = InferenceRequest(
        image_bytes=encode_patch(crop(image, rect)),
        prompt=task.prompt,
        max_tokens=task.max_tokens,
    )
    try:
        sequence = backend.score_patch(request)
    except BackendError:
        return PatchPrediction(patch_index=rect.index, answer_text="", pc=None,
                               filtered=True, filter_reason="backend_error")
    answer = decode_answer(sequence)
    try:
        pc = patch_confidence(sequence, include_stop_token=include_stop_token)
    except EmptySequenceError:
        return PatchPrediction(patch_index=rect.index, answer_text=answer, pc=None,
                               filtered=True, filter_reason="empty_output")
    verdict = apply_filters(answer, task.effective_chain())
    return PatchPrediction(patch_index=rect.index, answer_text=answer, pc=pc,
                           filtered=not verdict.passed, filter_reason=verdict.reason)


def _select_winner(trace: tuple[PatchPrediction, ...]) -> PatchPrediction | None:
    winner: PatchPrediction | None = None
    for prediction in trace:  # trace is in patch-index order
        if prediction.filtered or prediction.pc is None:
            continue
        if winner is None or prediction.pc > winner.pc:
            winner = prediction
    return winner


def run_patchfinder(image: Image.Image, task: ExtractionTask, spec: GridSpec,
                    backend: InferenceBackend, *, include_stop_token: bool = False) -> SelectionResult:
    """Score every patch of the grid and return the most confident unfiltered
    answer plus the full trace.

    Patch scoring fans out over threads up to the backend's parallelism cap;
    results are keyed by patch index, so completion order never affects the
    outcome. A patch whose backend call fails is marked filtered
    ("backend_error") rather than aborting the document.
    """
    dims = ImageDims(width=image.width, height=image.height)
    grid = build_grid(dims, spec)
    workers = max(1, backend.parallelism)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        trace = tuple(pool.map(
            lambda rect: _score_one(image, rect, task, backend, include_stop_token),
            grid.patches,
        ))
    winner = _select_winner(trace)
    return SelectionResult(
        grid=grid,
        trace=trace,
        winner=winner,
        aborted_reason=None if winner is not None else NO_VALID_PATCH,
    )


def vanilla_run(image: Image.Image, task: ExtractionTask, backend: InferenceBackend, *,
                base_spec: GridSpec | None = None, include_stop_token: bool = False) -> SelectionResult:
    """Single-pass baseline: the whole image as one patch (area fraction 1)."""
    spec = dataclasses.replace(base_spec or GridSpec(), area_fraction=1.0)
    return run_patchfinder(image, task, spec, backend, include_stop_token=include_stop_token)
