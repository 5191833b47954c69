"""HTTP service exposing the extraction engine.

The service owns the backend connection and the template/filter registries
(from its run config); clients send images inline (base64) with per-request
grid and prompt parameters, so the server holds no per-client state.
"""

from __future__ import annotations

import base64
import binascii
import dataclasses
import io

from fastapi import FastAPI, HTTPException
from PIL import Image

from ..backend import InferenceBackend
from ..filters import FieldKind
from ..harness.config import RunConfig, make_task
from ..harness.evaluation import LoadedDocument, run_batch_documents
from ..harness.manifest import ManifestError
from ..harness.noise import inject_noise
from ..patch_grid import GridSpec
from ..selection import run_patchfinder
from ..size_optimizer import DevItem, SweepConfig, SweepError, sweep
from .schemas import (
    BatchDocumentModel,
    BatchRequest,
    BatchResponse,
    ExtractRequest,
    ExtractResponse,
    GridSpecModel,
    HealthResponse,
    NoiseRequest,
    NoiseResponse,
    SweepRequest,
    SweepResponse,
)


def _decode_image(image_b64: str, image_format: str) -> Image.Image:
    try:
        raw = base64.b64decode(image_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise HTTPException(status_code=400, detail=f"image is not valid base64: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as handle:
            image = handle.copy()
    except Exception as exc:
        raise HTTPException(status_code=400, detail=f"image does not decode as {image_format}: {exc}") from exc
    return image


def _encode_image(image: Image.Image, image_format: str = "png") -> str:
    buffer = io.BytesIO()
    image.save(buffer, format=image_format.upper())
    return base64.b64encode(buffer.getvalue()).decode("ascii")


def _grid_from_model(model: GridSpecModel | None, default: GridSpec) -> GridSpec:
    if model is None:
        return default
    return GridSpec(area_fraction=model.area_fraction, aspect_mode=model.aspect_mode,
                    overlap=model.overlap)


def create_app(backend: InferenceBackend, config: RunConfig | None = None) -> FastAPI:
    config = config or RunConfig()
    app = FastAPI(title="patchfinder", version="0.1.0")

    def build_task(name: str, kind: str, prompt: str | None, template: str | None,
                   max_tokens: int | None = None):
        try:
            task = make_task(name, FieldKind(kind), config, prompt=prompt, template=template)
        except ManifestError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if max_tokens is not None:
            task = dataclasses.replace(task, max_tokens=max_tokens)
        return task

    def load_request_documents(models: list[BatchDocumentModel]) -> list[LoadedDocument]:
        documents = []
        for model in models:
            image = _decode_image(model.image_b64, model.image_format)
            tasks = tuple(
                (build_task(f.name, f.kind, f.prompt, f.template), f.ground_truth)
                for f in model.fields
            )
            documents.append(LoadedDocument(document_id=model.document_id, image=image,
                                            tasks=tasks, group=model.group))
        return documents

    @app.get("/healthz", response_model=HealthResponse)
    def healthz() -> HealthResponse:
        status = backend.healthcheck()
        return HealthResponse(status="ok", backend_ok=status.ok, backend_detail=status.detail)

    @app.post("/v1/extract", response_model=ExtractResponse)
    def extract(request: ExtractRequest) -> ExtractResponse:
        image = _decode_image(request.image_b64, request.image_format)
        task = build_task(request.field_name, request.field_kind, request.prompt,
                          request.template, request.max_tokens)
        include_stop = (request.include_stop_token if request.include_stop_token is not None
                        else config.include_stop_token)
        result = run_patchfinder(image, task, _grid_from_model(request.grid, config.grid),
                                 backend, include_stop_token=include_stop)
        doc = result.to_dict()
        return ExtractResponse(
            answer=result.answer,
            pc=result.winner.pc if result.winner is not None else None,
            patch_index=result.winner.patch_index if result.winner is not None else None,
            aborted_reason=result.aborted_reason,
            grid=doc["grid"],
            trace=doc["trace"],
        )

    @app.post("/v1/batch", response_model=BatchResponse)
    def batch(request: BatchRequest) -> BatchResponse:
        documents = load_request_documents(request.documents)
        include_stop = (request.include_stop_token if request.include_stop_token is not None
                        else config.include_stop_token)
        result = run_batch_documents(documents, backend,
                                     _grid_from_model(request.grid, config.grid),
                                     include_stop_token=include_stop)
        return BatchResponse(
            predictions=[r.to_dict() for r in result.predictions],
            report=result.report.to_dict() if result.report is not None else None,
        )

    @app.post("/v1/sweep", response_model=SweepResponse)
    def run_sweep(request: SweepRequest) -> SweepResponse:
        documents = load_request_documents(request.documents)
        items = [
            DevItem(document_id=doc.document_id, image=doc.image, task=task,
                    ground_truth=truth, group=doc.group)
            for doc in documents
            for task, truth in doc.tasks
        ]
        base = config.sweep
        try:
            sweep_config = SweepConfig(
                candidate_fractions=tuple(request.candidate_fractions)
                if request.candidate_fractions else base.candidate_fractions,
                plateau_delta=request.plateau_delta if request.plateau_delta is not None
                else base.plateau_delta,
                max_std=request.max_std if request.max_std is not None else base.max_std,
            )
            include_stop = (request.include_stop_token if request.include_stop_token is not None
                            else config.include_stop_token)
            report = sweep(
                items, backend, sweep_config,
                aspect_mode=request.aspect_mode or config.grid.aspect_mode,
                overlap=request.overlap if request.overlap is not None else config.grid.overlap,
                include_stop_token=include_stop,
            )
        except SweepError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        doc = report.to_dict()
        return SweepResponse(rows=doc["rows"], group_rows=doc["group_rows"],
                             chosen_fraction=doc["chosen_fraction"], raw=doc["raw"])

    @app.post("/v1/noise", response_model=NoiseResponse)
    def noise(request: NoiseRequest) -> NoiseResponse:
        image = _decode_image(request.image_b64, request.image_format)
        noisy = inject_noise(image, request.sigma, request.seed)
        return NoiseResponse(image_b64=_encode_image(noisy, request.image_format))

    return app
