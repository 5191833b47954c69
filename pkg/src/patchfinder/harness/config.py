"""Run configuration: one YAML/JSON file shared by the CLI and the service.

Sections: ``grid`` (area_fraction, aspect_mode, overlap), ``backend``
(base_url, token, path, timeout, retries, parallelism, max_tokens,
mock_script), ``templates`` (name -> text), ``filters`` (field name or kind
-> rule list), ``sweep`` (candidate_fractions, plateau_delta, max_std), and
``include_stop_token``. Precedence everywhere: CLI flags beat environment
variables beat file values beat defaults; the environment supplies only the
backend URL and bearer token.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..backend import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_PARALLELISM,
    DEFAULT_RETRIES,
    DEFAULT_SCORE_PATH,
    DEFAULT_TIMEOUT_SECONDS,
    ENV_BACKEND_TOKEN,
    ENV_BACKEND_URL,
    InferenceBackend,
    MockBackend,
    RemoteBackend,
    load_mock_script,
)
from ..filters import FieldKind, FilterChain, default_chain
from ..patch_grid import GridGeometryError, GridSpec
from ..selection import ExtractionTask
from ..size_optimizer import SweepConfig, SweepError
from .manifest import DEFAULT_TEMPLATES, ManifestError, resolve_template


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass(frozen=True)
class BackendConfig:
    base_url: str | None = None
    token: str | None = None
    path: str = DEFAULT_SCORE_PATH
    timeout: float = DEFAULT_TIMEOUT_SECONDS
    retries: int = DEFAULT_RETRIES
    parallelism: int = DEFAULT_PARALLELISM
    max_tokens: int = DEFAULT_MAX_TOKENS
    mock_script: Path | None = None  # a scripted mock wins over a remote URL


@dataclass(frozen=True)
class RunConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    backend: BackendConfig = field(default_factory=BackendConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    include_stop_token: bool = False
    templates: dict[str, str] = field(default_factory=dict)
    filter_rules: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def template_registry(self, extra: dict[str, str] | None = None) -> dict[str, str]:
        return {**DEFAULT_TEMPLATES, **self.templates, **(extra or {})}

    def chain_for(self, field_name: str, kind: FieldKind) -> FilterChain:
        rules = self.filter_rules.get(field_name, self.filter_rules.get(kind.value))
        return default_chain(kind, rules)

    def with_grid(self, *, area_fraction: float | None = None, aspect_mode: str | None = None,
                  overlap: float | None = None) -> RunConfig:
        grid = GridSpec(
            area_fraction=area_fraction if area_fraction is not None else self.grid.area_fraction,
            aspect_mode=aspect_mode if aspect_mode is not None else self.grid.aspect_mode,
            overlap=overlap if overlap is not None else self.grid.overlap,
        )
        return replace(self, grid=grid)


def _section(data: dict, key: str) -> dict:
    value = data.get(key) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"config section {key!r} must be a mapping")
    return value


def config_from_dict(data: dict, base_dir: Path) -> RunConfig:
    try:
        grid_data = _section(data, "grid")
        grid = GridSpec(
            area_fraction=float(grid_data.get("area_fraction", 0.25)),
            aspect_mode=str(grid_data.get("aspect_mode", "square")),
            overlap=float(grid_data.get("overlap", 0.5)),
        )
        backend_data = _section(data, "backend")
        mock_script = backend_data.get("mock_script")
        backend = BackendConfig(
            base_url=backend_data.get("base_url"),
            token=backend_data.get("token"),
            path=str(backend_data.get("path", DEFAULT_SCORE_PATH)),
            timeout=float(backend_data.get("timeout", DEFAULT_TIMEOUT_SECONDS)),
            retries=int(backend_data.get("retries", DEFAULT_RETRIES)),
            parallelism=int(backend_data.get("parallelism", DEFAULT_PARALLELISM)),
            max_tokens=int(backend_data.get("max_tokens", DEFAULT_MAX_TOKENS)),
            mock_script=(base_dir / str(mock_script)).resolve() if mock_script else None,
        )
        sweep_data = _section(data, "sweep")
        sweep = SweepConfig(
            candidate_fractions=tuple(float(s) for s in sweep_data["candidate_fractions"])
            if "candidate_fractions" in sweep_data else SweepConfig().candidate_fractions,
            plateau_delta=float(sweep_data.get("plateau_delta", SweepConfig().plateau_delta)),
            max_std=float(sweep_data.get("max_std", SweepConfig().max_std)),
        )
        filter_rules = {
            str(name): tuple(str(r) for r in rules)
            for name, rules in _section(data, "filters").items()
        }
        templates = {str(k): str(v) for k, v in _section(data, "templates").items()}
    except (GridGeometryError, SweepError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc
    return RunConfig(
        grid=grid,
        backend=backend,
        sweep=sweep,
        include_stop_token=bool(data.get("include_stop_token", False)),
        templates=templates,
        filter_rules=filter_rules,
    )


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"run config {path} must hold a mapping")
    return config_from_dict(data, base_dir=path.parent)


def build_backend(config: RunConfig) -> InferenceBackend:
    """Make the configured backend: a scripted mock when ``mock_script`` is
    set, otherwise a wire client for the configured (or env-supplied) URL."""
    cfg = config.backend
    if cfg.mock_script is not None:
        return MockBackend(load_mock_script(cfg.mock_script), parallelism=cfg.parallelism)
    base_url = cfg.base_url or os.environ.get(ENV_BACKEND_URL)
    if not base_url:
        raise ConfigError(
            "no backend configured: set backend.mock_script or backend.base_url "
            f"in the run config, or export {ENV_BACKEND_URL}"
        )
    token = cfg.token or os.environ.get(ENV_BACKEND_TOKEN)
    return RemoteBackend(
        base_url,
        token=token,
        path=cfg.path,
        timeout=cfg.timeout,
        retries=cfg.retries,
        parallelism=cfg.parallelism,
    )


def make_task(field_name: str, kind: FieldKind, config: RunConfig, *,
              prompt: str | None = None, template: str | None = None,
              extra_templates: dict[str, str] | None = None) -> ExtractionTask:
    """Build the extraction task for one field: explicit prompt text wins,
    otherwise the resolved template is rendered."""
    if prompt is None:
        registry = config.template_registry(extra_templates)
        prompt = resolve_template(registry, field_name, kind, template).render(field_name, kind)
    if not prompt.strip():
        raise ManifestError(f"prompt for field {field_name!r} is empty")
    return ExtractionTask(
        field_name=field_name,
        kind=kind,
        prompt=prompt,
        chain=config.chain_for(field_name, kind),
        max_tokens=config.backend.max_tokens,
    )
