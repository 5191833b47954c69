"""Minimal server side of the scoring wire protocol.

Puts any InferenceBackend behind the same HTTP surface a real model server
would expose, which lets the wire client be exercised end to end against the
scripted mock (and lets a scripted mock stand in for a model server during
integration work).
"""

from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from ..backend import (
    BackendError,
    InferenceBackend,
    InferenceRequest,
    ProtocolError,
    response_payload,
)


class ScoreRequestModel(BaseModel):
    image: str
    image_format: str = "png"
    prompt: str
    max_tokens: int = 64
    temperature: float = 0
    logprobs: bool = True


def create_scoring_app(backend: InferenceBackend) -> FastAPI:
    app = FastAPI(title="patchfinder-scoring", version="0.1.0")

    @app.get("/healthz")
    def healthz() -> dict:
        status = backend.healthcheck()
        return {"status": "ok" if status.ok else "unavailable", "detail": status.detail}

    @app.post("/v1/score")
    def score(request: ScoreRequestModel) -> dict:
        try:
            image_bytes = base64.b64decode(request.image, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise HTTPException(status_code=400, detail=f"bad base64 image: {exc}") from exc
        try:
            sequence = backend.score_patch(InferenceRequest(
                image_bytes=image_bytes,
                prompt=request.prompt,
                image_format=request.image_format,
                max_tokens=request.max_tokens,
            ))
        except (ProtocolError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except BackendError as exc:
            raise HTTPException(status_code=502, detail=str(exc)) from exc
        return response_payload(sequence)

    return app
