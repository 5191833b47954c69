"""Experiment surface: manifests, run configuration, batch evaluation, noise
injection, and report emitters."""

from .config import BackendConfig, ConfigError, RunConfig, build_backend, load_config, make_task
from .evaluation import (
    BatchResult,
    EvalReport,
    LoadedDocument,
    PredictionRecord,
    dev_items,
    evaluate_predictions,
    load_documents,
    run_batch,
    run_batch_documents,
    write_eval_report,
    write_predictions,
)
from .heatmap import heatmap_rows, write_heatmap_csv
from .manifest import (
    DEFAULT_TEMPLATES,
    DatasetManifest,
    DocumentRecord,
    FieldSpec,
    ManifestError,
    PromptTemplate,
    load_manifest,
    manifest_from_dict,
    resolve_template,
    validate_templates,
)
from .noise import inject_noise
from .tables import write_sweep_tables

__all__ = [
    "BackendConfig",
    "BatchResult",
    "ConfigError",
    "DEFAULT_TEMPLATES",
    "DatasetManifest",
    "DocumentRecord",
    "EvalReport",
    "FieldSpec",
    "LoadedDocument",
    "ManifestError",
    "PredictionRecord",
    "PromptTemplate",
    "RunConfig",
    "build_backend",
    "dev_items",
    "evaluate_predictions",
    "heatmap_rows",
    "inject_noise",
    "load_config",
    "load_documents",
    "load_manifest",
    "make_task",
    "manifest_from_dict",
    "resolve_template",
    "run_batch",
    "run_batch_documents",
    "validate_templates",
    "write_eval_report",
    "write_heatmap_csv",
    "write_predictions",
    "write_sweep_tables",
]
