"""Scoring backends: the model seen as an autoregressive greedy scorer.

A backend takes an encoded image patch plus a prompt and returns the greedy
decode as a ScoredSequence (token text + chosen-token log-probability). Two
implementations: an HTTP client speaking a small logprob-capable completion
protocol, and a scripted mock keyed on patch content fingerprints for fully
deterministic tests. Engine code never sees which one it is talking to.
"""

from __future__ import annotations

import base64
import hashlib
import io
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import httpx
from PIL import Image

from .confidence import ScoredSequence, TokenScore

ENV_BACKEND_URL = "PATCHFINDER_BACKEND_URL"
ENV_BACKEND_TOKEN = "PATCHFINDER_BACKEND_TOKEN"

DEFAULT_SCORE_PATH = "/v1/score"
DEFAULT_TIMEOUT_SECONDS = 120.0
DEFAULT_RETRIES = 2
DEFAULT_BACKOFF_SECONDS = (1.0, 4.0)
DEFAULT_PARALLELISM = 4
DEFAULT_MAX_TOKENS = 64

FINISH_REASONS = ("stop", "length", "error")


class BackendError(Exception):
    """Base for all scoring-backend failures."""


class TransportFailure(BackendError):
    """Connection, timeout, or server-side (5xx) failure; retryable."""


class ProtocolError(BackendError):
    """Response violates the wire contract; not retryable."""


class BackendRefusal(BackendError):
    """Backend rejected the request (4xx); not retryable."""


@dataclass(frozen=True)
class InferenceRequest:
    """One scoring call: an encoded patch and the prompt. Decoding is always
    greedy (the wire request pins temperature 0)."""

    image_bytes: bytes
    prompt: str
    image_format: str = "png"
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class HealthStatus:
    ok: bool
    detail: str | None = None


class InferenceBackend(ABC):
    """Abstract scorer. Implementations must be safe for concurrent use."""

    parallelism: int = DEFAULT_PARALLELISM

    @abstractmethod
    def score_patch(self, request: InferenceRequest) -> ScoredSequence:
        """Greedy-decode an answer for the patch; per-token logprob is the
        chosen token's log-probability."""

    @abstractmethod
    def healthcheck(self) -> HealthStatus:
        """Lightweight probe; never blocks longer than the configured timeout."""


# --- wire protocol ---------------------------------------------------------


def request_payload(request: InferenceRequest) -> dict:
    return {
        "image": base64.b64encode(request.image_bytes).decode("ascii"),
        "image_format": request.image_format,
        "prompt": request.prompt,
        "max_tokens": request.max_tokens,
        "temperature": 0,
        "logprobs": True,
    }


def _parse_wire_token(entry: object) -> TokenScore:
    if not isinstance(entry, dict) or "text" not in entry or "logprob" not in entry:
        raise ProtocolError(f"malformed token entry: {entry!r}")
    try:
        return TokenScore(token_id=int(entry.get("id", 0)), text=str(entry["text"]), logprob=float(entry["logprob"]))
    except (TypeError, ValueError) as exc:
        raise ProtocolError(f"invalid token entry {entry!r}: {exc}") from exc


def parse_response_payload(payload: object) -> ScoredSequence:
    """Validate a wire response document and convert it to a ScoredSequence.

    Raises ProtocolError for anything off-contract, including a logprob > 0.
    """
    if not isinstance(payload, dict) or not isinstance(payload.get("tokens"), list):
        raise ProtocolError(f"malformed response document: {payload!r}")
    finish_reason = payload.get("finish_reason", "stop")
    if finish_reason not in FINISH_REASONS:
        raise ProtocolError(f"unknown finish_reason: {finish_reason!r}")
    tokens = tuple(_parse_wire_token(entry) for entry in payload["tokens"])
    stop_entry = payload.get("stop_token")
    stop_token = _parse_wire_token(stop_entry) if stop_entry is not None else None
    return ScoredSequence(tokens=tokens, finish_reason=finish_reason, stop_token=stop_token)


def response_payload(sequence: ScoredSequence) -> dict:
    payload = {
        "tokens": [{"id": t.token_id, "text": t.text, "logprob": t.logprob} for t in sequence.tokens],
        "finish_reason": sequence.finish_reason,
        "stop_token": None,
    }
    if sequence.stop_token is not None:
        st = sequence.stop_token
        payload["stop_token"] = {"id": st.token_id, "text": st.text, "logprob": st.logprob}
    return payload


class RemoteBackend(InferenceBackend):
    """HTTP client for a logprob-capable scoring server.

    POSTs the request document to ``base_url + path`` and expects
    ``{tokens: [{id, text, logprob}], finish_reason, stop_token?}`` back.
    Transport failures and 5xx responses are retried with exponential backoff;
    protocol violations and 4xx refusals are not. Thread-safe; in-flight
    requests are capped at ``parallelism``.
    """

    def __init__(
        self,
        base_url: str = "",
        *,
        token: str | None = None,
        path: str = DEFAULT_SCORE_PATH,
        timeout: float = DEFAULT_TIMEOUT_SECONDS,
        retries: int = DEFAULT_RETRIES,
        backoff: tuple[float, ...] = DEFAULT_BACKOFF_SECONDS,
        parallelism: int = DEFAULT_PARALLELISM,
        client: httpx.Client | None = None,
    ) -> None:
        if client is None:
            if not base_url:
                raise ValueError("base_url required when no client is injected")
            headers = {"Authorization": f"Bearer {token}"} if token else {}
            client = httpx.Client(base_url=base_url, timeout=timeout, headers=headers)
        self._client = client
        self._path = path
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.parallelism = parallelism
        self._inflight = threading.Semaphore(parallelism)

    def score_patch(self, request: InferenceRequest) -> ScoredSequence:
        payload = request_payload(request)
        last_failure: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                delay = self.backoff[min(attempt - 1, len(self.backoff) - 1)] if self.backoff else 0.0
                time.sleep(delay)
            try:
                with self._inflight:
                    response = self._client.post(self._path, json=payload)
            except httpx.HTTPError as exc:
                last_failure = exc
                continue
            if response.status_code >= 500:
                last_failure = TransportFailure(f"HTTP {response.status_code}: {response.text[:200]}")
                continue
            if response.status_code >= 400:
                raise BackendRefusal(f"HTTP {response.status_code}: {response.text[:200]}")
            try:
                document = response.json()
            except ValueError as exc:
                raise ProtocolError(f"response is not JSON: {exc}") from exc
            return parse_response_payload(document)
        raise TransportFailure(f"no response after {self.retries + 1} attempts: {last_failure}")

    def healthcheck(self) -> HealthStatus:
        try:
            response = self._client.get("/healthz", timeout=min(self.timeout, 5.0))
        except httpx.HTTPError as exc:
            return HealthStatus(ok=False, detail=str(exc))
        if response.status_code != 200:
            return HealthStatus(ok=False, detail=f"protocol: HTTP {response.status_code}")
        return HealthStatus(ok=True)

    def close(self) -> None:
        self._client.close()


# --- content fingerprinting and the scripted mock --------------------------


def fingerprint_image(image: Image.Image) -> str:
    """Fingerprint of decoded pixel content (mode, size, raw bytes), so the
    value is stable across lossless re-encodings of the same pixels."""
    digest = hashlib.sha256()
    digest.update(f"{image.mode}:{image.width}x{image.height}:".encode("ascii"))
    digest.update(image.tobytes())
    return digest.hexdigest()


def fingerprint_image_bytes(data: bytes) -> str:
    try:
        with Image.open(io.BytesIO(data)) as image:
            image.load()
            return fingerprint_image(image)
    except Exception as exc:
        raise ProtocolError(f"image does not decode: {exc}") from exc


def prompt_fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


ANY_PROMPT = "*"

# Fallback for unscripted patches: an implausible low-confidence answer.
DEFAULT_MOCK_RESPONSE = ScoredSequence(tokens=(TokenScore(token_id=0, text="garbage", logprob=-3.0),))


@dataclass(frozen=True)
class MockScript:
    """Mapping from (patch content fingerprint, prompt fingerprint) to a
    scripted response; a default makes it total. Immutable once built."""

    rules: dict[tuple[str, str], ScoredSequence] = field(default_factory=dict)
    default: ScoredSequence = DEFAULT_MOCK_RESPONSE

    def lookup(self, content_fp: str, prompt: str) -> ScoredSequence:
        exact = self.rules.get((content_fp, prompt_fingerprint(prompt)))
        if exact is not None:
            return exact
        return self.rules.get((content_fp, ANY_PROMPT), self.default)


def script_for_patches(
    image: Image.Image,
    grid,
    responses: dict[int, ScoredSequence],
    *,
    prompt: str | None = None,
    default: ScoredSequence = DEFAULT_MOCK_RESPONSE,
    extra_rules: dict[tuple[str, str], ScoredSequence] | None = None,
) -> MockScript:
    """Build a script keyed by patch index: crops each indexed patch of the
    grid and registers its content fingerprint."""
    from .patch_grid import crop  # local import, avoids a cycle at module load

    prompt_key = prompt_fingerprint(prompt) if prompt is not None else ANY_PROMPT
    rules = dict(extra_rules or {})
    for index, sequence in responses.items():
        fp = fingerprint_image(crop(image, grid.patches[index]))
        rules[(fp, prompt_key)] = sequence
    return MockScript(rules=rules, default=default)


class MockBackend(InferenceBackend):
    """Deterministic scripted backend.

    ``jitter_ms > 0`` adds a per-patch deterministic delay derived from the
    content fingerprint, which scrambles completion order under concurrency
    without touching the scripted results.
    """

    def __init__(self, script: MockScript | None = None, *, parallelism: int = DEFAULT_PARALLELISM,
                 jitter_ms: float = 0.0) -> None:
        self.script = script or MockScript()
        self.parallelism = parallelism
        self.jitter_ms = jitter_ms

    def score_patch(self, request: InferenceRequest) -> ScoredSequence:
        fp = fingerprint_image_bytes(request.image_bytes)
        if self.jitter_ms > 0.0:
            time.sleep((int(fp[:8], 16) % 100) / 100.0 * self.jitter_ms / 1000.0)
        sequence = self.script.lookup(fp, request.prompt)
        if len(sequence.tokens) > request.max_tokens:
            sequence = ScoredSequence(tokens=sequence.tokens[: request.max_tokens], finish_reason="length")
        return sequence

    def healthcheck(self) -> HealthStatus:
        return HealthStatus(ok=True)


# --- declarative mock fixtures ---------------------------------------------


def _sequence_from_dict(data: dict) -> ScoredSequence:
    return parse_response_payload({
        "tokens": data.get("tokens", []),
        "finish_reason": data.get("finish_reason", "stop"),
        "stop_token": data.get("stop_token"),
    })


def mock_script_from_dict(data: dict) -> MockScript:
    """Build a script from a fixture document::

        default: {tokens: [{text: garbage, logprob: -3.0}]}
        rules:
          - fingerprint: <hex of patch content>
            prompt: <verbatim prompt, omit to match any>
            response: {tokens: [{id: 0, text: "45", logprob: -0.01}]}
    """
    default = _sequence_from_dict(data["default"]) if data.get("default") else DEFAULT_MOCK_RESPONSE
    rules: dict[tuple[str, str], ScoredSequence] = {}
    for rule in data.get("rules", []):
        prompt = rule.get("prompt")
        prompt_key = prompt_fingerprint(prompt) if prompt is not None else ANY_PROMPT
        rules[(str(rule["fingerprint"]), prompt_key)] = _sequence_from_dict(rule["response"])
    return MockScript(rules=rules, default=default)


def load_mock_script(path) -> MockScript:
    import yaml

    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    if not isinstance(data, dict):
        raise ValueError(f"mock script file {path} must hold a mapping")
    return mock_script_from_dict(data)
