"""Pydantic request/response models for the extraction service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

FieldKindName = Literal["numeric", "latitude", "longitude", "depth", "free-text"]
AspectModeName = Literal["square", "image-proportional", "full-width-strip"]


class GridSpecModel(BaseModel):
    area_fraction: float = Field(default=0.25, gt=0.0, le=1.0)
    aspect_mode: AspectModeName = "square"
    overlap: float = Field(default=0.5, ge=0.0, lt=1.0)


class RectModel(BaseModel):
    x0: int
    y0: int
    w: int
    h: int


class PatchRecordModel(BaseModel):
    index: int
    rect: RectModel
    pc: Optional[float]
    answer: str
    filtered: bool
    reason: Optional[str]


class ExtractRequest(BaseModel):
    image_b64: str
    image_format: str = "png"
    field_name: str
    field_kind: FieldKindName = "free-text"
    prompt: Optional[str] = None      # explicit prompt wins over template
    template: Optional[str] = None    # template name from the service registry
    grid: Optional[GridSpecModel] = None
    max_tokens: Optional[int] = Field(default=None, ge=1)
    include_stop_token: Optional[bool] = None


class ExtractResponse(BaseModel):
    answer: Optional[str]
    pc: Optional[float]
    patch_index: Optional[int]
    aborted_reason: Optional[str]
    grid: dict
    trace: list[PatchRecordModel]


class BatchFieldModel(BaseModel):
    name: str
    kind: FieldKindName = "free-text"
    prompt: Optional[str] = None
    template: Optional[str] = None
    ground_truth: Optional[str] = None


class BatchDocumentModel(BaseModel):
    document_id: str
    image_b64: str
    image_format: str = "png"
    group: str = "default"
    fields: list[BatchFieldModel]


class PredictionModel(BaseModel):
    document_id: str
    field: str
    kind: FieldKindName
    group: str
    answer: Optional[str]
    pc: Optional[float]
    patch_index: Optional[int]
    aborted_reason: Optional[str]
    verdict: Optional[str]


class EvalReportModel(BaseModel):
    overall_accuracy: float
    correct_fields: int
    scored_fields: int
    per_field: dict[str, float]
    per_group: dict[str, float]
    verdicts: list[dict]


class BatchRequest(BaseModel):
    documents: list[BatchDocumentModel]
    grid: Optional[GridSpecModel] = None
    include_stop_token: Optional[bool] = None


class BatchResponse(BaseModel):
    predictions: list[PredictionModel]
    report: Optional[EvalReportModel]


class SweepRequest(BaseModel):
    documents: list[BatchDocumentModel]
    candidate_fractions: Optional[list[float]] = None
    plateau_delta: Optional[float] = Field(default=None, gt=0.0)
    max_std: Optional[float] = Field(default=None, gt=0.0)
    aspect_mode: Optional[AspectModeName] = None
    overlap: Optional[float] = Field(default=None, ge=0.0, lt=1.0)
    include_stop_token: Optional[bool] = None


class SizeStatsModel(BaseModel):
    fraction: float
    mean_pc: Optional[float]
    std_pc: Optional[float]
    count: int
    accuracy: Optional[float]
    group: Optional[str]


class RawSweepRecordModel(BaseModel):
    fraction: float
    document_id: str
    field: str
    group: str
    pc: Optional[float]
    answer: Optional[str]
    correct: Optional[bool]


class SweepResponse(BaseModel):
    rows: list[SizeStatsModel]
    group_rows: list[SizeStatsModel]
    chosen_fraction: float
    raw: list[RawSweepRecordModel]


class NoiseRequest(BaseModel):
    image_b64: str
    image_format: str = "png"
    sigma: float = Field(ge=0.0)
    seed: int


class NoiseResponse(BaseModel):
    image_b64: str


class HealthResponse(BaseModel):
    status: str
    backend_ok: bool
    backend_detail: Optional[str] = None
