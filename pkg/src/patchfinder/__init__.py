"""Confidence-guided patch-based information extraction from noisy scans."""

from .backend import (
    InferenceBackend,
    InferenceRequest,
    MockBackend,
    MockScript,
    RemoteBackend,
)
from .confidence import (
    EmptySequenceError,
    PatchPrediction,
    ScoredSequence,
    TokenScore,
    decode_answer,
    patch_confidence,
)
from .filters import (
    FieldKind,
    FilterChain,
    answers_match,
    apply_filters,
    default_chain,
    format_dms,
    normalize,
    parse_dms,
)
from .patch_grid import GridSpec, ImageDims, PatchGrid, PatchRect, build_grid, crop, patch_dims
from .selection import ExtractionTask, SelectionResult, run_patchfinder, vanilla_run
from .size_optimizer import DevItem, SweepConfig, SweepReport, choose_size, sweep

__version__ = "0.1.0"

__all__ = [
    "DevItem",
    "EmptySequenceError",
    "ExtractionTask",
    "FieldKind",
    "FilterChain",
    "GridSpec",
    "ImageDims",
    "InferenceBackend",
    "InferenceRequest",
    "MockBackend",
    "MockScript",
    "PatchGrid",
    "PatchPrediction",
    "PatchRect",
    "RemoteBackend",
    "ScoredSequence",
    "SelectionResult",
    "SweepConfig",
    "SweepReport",
    "TokenScore",
    "answers_match",
    "apply_filters",
    "build_grid",
    "choose_size",
    "crop",
    "decode_answer",
    "default_chain",
    "format_dms",
    "normalize",
    "parse_dms",
    "patch_confidence",
    "patch_dims",
    "run_patchfinder",
    "sweep",
    "vanilla_run",
]
