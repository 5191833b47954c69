"""Command-line client.

The CLI talks to the extraction service over HTTP. With ``--server`` it
targets a running instance; without it, it spins the service up in-process
(same wire format, same request path) using the backend from the run config.
``noise`` and ``heatmap`` are pure file transforms and run locally.

Exit codes: 0 success, 1 usage/config error, 2 runtime error (backend or
server unreachable), 3 no valid patch survived filtering (extract only).
"""

from __future__ import annotations

import argparse
import base64
import dataclasses
import json
import sys
from pathlib import Path

import httpx
from PIL import Image

from .harness.config import BackendConfig, ConfigError, RunConfig, build_backend, load_config
from .harness.heatmap import write_heatmap_csv
from .harness.manifest import (
    DatasetManifest,
    ManifestError,
    load_manifest,
    resolve_template,
    validate_templates,
)
from .harness.noise import inject_noise
from .harness.tables import write_sweep_tables
from .patch_grid import GridGeometryError
from .size_optimizer import SweepError, sweep_report_from_dict

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_NO_VALID_PATCH = 3


class _UsageError(Exception):
    pass


class _RuntimeFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="run config file (YAML/JSON)")
    parser.add_argument("--server", default=None, help="extraction service URL; omit to run in-process")
    parser.add_argument("--backend-url", default=None, help="scoring backend base URL (in-process mode)")
    parser.add_argument("--backend-token", default=None, help="scoring backend bearer token")
    parser.add_argument("--mock-script", type=Path, default=None, help="scripted mock fixture (in-process mode)")
    parser.add_argument("--timeout", type=float, default=None)
    parser.add_argument("--retries", type=int, default=None)
    parser.add_argument("--parallelism", type=int, default=None)
    parser.add_argument("--max-tokens", type=int, default=None)


def _add_grid_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--area-fraction", type=float, default=None)
    parser.add_argument("--aspect-mode", default=None,
                        choices=["square", "image-proportional", "full-width-strip"])
    parser.add_argument("--overlap", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patchfinder", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract one field from one document image")
    p.add_argument("image", type=Path)
    p.add_argument("--field-name", required=True)
    p.add_argument("--field-kind", default="free-text",
                   choices=["numeric", "latitude", "longitude", "depth", "free-text"])
    p.add_argument("--prompt", default=None, help="explicit prompt (wins over --template)")
    p.add_argument("--template", default=None, help="prompt template name")
    p.add_argument("--trace-out", type=Path, default=None,
                   help="per-patch trace path (default: <image stem>.trace.json)")
    p.add_argument("--vanilla", action="store_true", help="single whole-image pass (area fraction 1.0)")
    _add_grid_flags(p)
    _add_common_flags(p)

    p = sub.add_parser("batch", help="run a manifest and write predictions + eval report")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--ids", default=None, help="comma-separated document ids (manifest split)")
    _add_grid_flags(p)
    _add_common_flags(p)

    p = sub.add_parser("sweep", help="patch-size sweep over a development manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--ids", default=None, help="comma-separated document ids (manifest split)")
    p.add_argument("--candidate-fractions", default=None, help="comma-separated fractions")
    p.add_argument("--plateau-delta", type=float, default=None)
    p.add_argument("--max-std", type=float, default=None)
    _add_grid_flags(p)
    _add_common_flags(p)

    p = sub.add_parser("noise", help="add seeded brightening Gaussian noise to an image")
    p.add_argument("image", type=Path)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, default=None, help="default: <image stem>.noisy.png")

    p = sub.add_parser("heatmap", help="flatten a trace file into a per-patch confidence table")
    p.add_argument("trace", type=Path)
    p.add_argument("--out", type=Path, default=None, help="default: <trace stem>.heatmap.csv")

    p = sub.add_parser("serve", help="run the extraction service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    _add_common_flags(p)

    return parser


def _load_effective_config(args: argparse.Namespace) -> RunConfig:
    try:
        config = load_config(args.config)
    except FileNotFoundError as exc:
        raise _UsageError(f"config file not found: {exc.filename}") from exc
    if any(getattr(args, name, None) is not None for name in ("area_fraction", "aspect_mode", "overlap")):
        config = config.with_grid(
            area_fraction=getattr(args, "area_fraction", None),
            aspect_mode=getattr(args, "aspect_mode", None),
            overlap=getattr(args, "overlap", None),
        )
    backend_overrides = {
        "base_url": args.backend_url,
        "token": args.backend_token,
        "mock_script": args.mock_script.resolve() if args.mock_script else None,
        "timeout": args.timeout,
        "retries": args.retries,
        "parallelism": args.parallelism,
        "max_tokens": args.max_tokens,
    }
    updates = {k: v for k, v in backend_overrides.items() if v is not None}
    if updates:
        config = dataclasses.replace(config, backend=dataclasses.replace(config.backend, **updates))
    return config


def _make_client(args: argparse.Namespace, config: RunConfig) -> httpx.Client:
    if args.server:
        return httpx.Client(base_url=args.server, timeout=config.backend.timeout)
    import warnings

    with warnings.catch_warnings():
        # starlette's in-process client warns about its httpx dependency pin
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(build_backend(config), config))


def _post(client: httpx.Client, path: str, payload: dict) -> dict:
    try:
        response = client.post(path, json=payload)
    except httpx.HTTPError as exc:
        raise _RuntimeFailure(f"service unreachable: {exc}") from exc
    if response.status_code == 400 or response.status_code == 422:
        raise _UsageError(f"request rejected: {response.text}")
    if response.status_code != 200:
        raise _RuntimeFailure(f"service error HTTP {response.status_code}: {response.text[:300]}")
    return response.json()


def _check_backend(client: httpx.Client) -> None:
    try:
        response = client.get("/healthz")
    except httpx.HTTPError as exc:
        raise _RuntimeFailure(f"service unreachable: {exc}") from exc
    if response.status_code != 200:
        raise _RuntimeFailure(f"service error HTTP {response.status_code}")
    health = response.json()
    if not health.get("backend_ok", False):
        raise _RuntimeFailure(f"scoring backend unavailable: {health.get('backend_detail')}")


def _image_payload(path: Path) -> tuple[str, str]:
    if not path.is_file():
        raise _UsageError(f"image not found: {path}")
    fmt = path.suffix.lstrip(".").lower() or "png"
    return base64.b64encode(path.read_bytes()).decode("ascii"), fmt


def _grid_payload(config: RunConfig) -> dict:
    return config.grid.to_dict()


def _load_manifest_arg(args: argparse.Namespace, config: RunConfig) -> DatasetManifest:
    if not args.manifest.is_file():
        raise _UsageError(f"manifest not found: {args.manifest}")
    manifest = load_manifest(args.manifest)
    if args.ids:
        manifest = manifest.select([i.strip() for i in args.ids.split(",") if i.strip()])
    validate_templates(manifest, config.template_registry())
    return manifest


def _manifest_documents_payload(manifest: DatasetManifest, config: RunConfig) -> list[dict]:
    """Inline manifest documents for the wire: image bytes plus prompts
    rendered client-side, so server and client agree on templates."""
    registry = config.template_registry(manifest.templates)
    documents = []
    for doc in manifest.documents:
        image_b64, fmt = _image_payload(doc.image_path)
        fields = []
        for spec in doc.fields:
            prompt = resolve_template(registry, spec.name, spec.kind, spec.template).render(
                spec.name, spec.kind)
            fields.append({
                "name": spec.name,
                "kind": spec.kind.value,
                "prompt": prompt,
                "ground_truth": spec.ground_truth,
            })
        documents.append({
            "document_id": doc.document_id,
            "image_b64": image_b64,
            "image_format": fmt,
            "group": doc.group,
            "fields": fields,
        })
    return documents


def _cmd_extract(args: argparse.Namespace) -> int:
    config = _load_effective_config(args)
    if args.vanilla:
        config = config.with_grid(area_fraction=1.0)
    image_b64, fmt = _image_payload(args.image)
    payload = {
        "image_b64": image_b64,
        "image_format": fmt,
        "field_name": args.field_name,
        "field_kind": args.field_kind,
        "prompt": args.prompt,
        "template": args.template,
        "grid": _grid_payload(config),
        "include_stop_token": config.include_stop_token,
    }
    with _make_client(args, config) as client:
        _check_backend(client)
        result = _post(client, "/v1/extract", payload)
    trace_path = args.trace_out or Path(f"{args.image.stem}.trace.json")
    trace_doc = {"grid": result["grid"], "winner": None, "aborted_reason": result["aborted_reason"],
                 "trace": result["trace"]}
    if result["patch_index"] is not None:
        trace_doc["winner"] = {"index": result["patch_index"], "answer": result["answer"],
                               "pc": result["pc"], "filtered": False, "reason": None}
    trace_path.write_text(json.dumps(trace_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    if result["aborted_reason"] is not None:
        print(f"no prediction: {result['aborted_reason']} (trace: {trace_path})", file=sys.stderr)
        return EXIT_NO_VALID_PATCH
    print(result["answer"])
    print(f"pc={result['pc']} patch={result['patch_index']} trace={trace_path}", file=sys.stderr)
    return EXIT_OK


def _cmd_batch(args: argparse.Namespace) -> int:
    config = _load_effective_config(args)
    manifest = _load_manifest_arg(args, config)
    payload = {
        "documents": _manifest_documents_payload(manifest, config),
        "grid": _grid_payload(config),
        "include_stop_token": config.include_stop_token,
    }
    with _make_client(args, config) as client:
        _check_backend(client)
        result = _post(client, "/v1/batch", payload)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    predictions_path = args.out_dir / "predictions.jsonl"
    with open(predictions_path, "w", encoding="utf-8") as handle:
        for record in result["predictions"]:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"predictions: {predictions_path}")
    if result["report"] is not None:
        report_path = args.out_dir / "eval_report.json"
        report_path.write_text(json.dumps(result["report"], ensure_ascii=False, indent=2) + "\n",
                               encoding="utf-8")
        report = result["report"]
        print(f"eval report: {report_path}")
        print(f"accuracy: {report['overall_accuracy']:.4f} "
              f"({report['correct_fields']}/{report['scored_fields']})")
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_effective_config(args)
    manifest = _load_manifest_arg(args, config)
    payload = {
        "documents": _manifest_documents_payload(manifest, config),
        "aspect_mode": config.grid.aspect_mode,
        "overlap": config.grid.overlap,
        "include_stop_token": config.include_stop_token,
        "plateau_delta": args.plateau_delta if args.plateau_delta is not None else config.sweep.plateau_delta,
        "max_std": args.max_std if args.max_std is not None else config.sweep.max_std,
    }
    if args.candidate_fractions:
        payload["candidate_fractions"] = [float(s) for s in args.candidate_fractions.split(",")]
    else:
        payload["candidate_fractions"] = list(config.sweep.candidate_fractions)
    with _make_client(args, config) as client:
        _check_backend(client)
        result = _post(client, "/v1/sweep", payload)
    report = sweep_report_from_dict(result)
    paths = write_sweep_tables(report, args.out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")
    print(f"chosen area fraction: {report.chosen_fraction}")
    return EXIT_OK


def _cmd_noise(args: argparse.Namespace) -> int:
    if not args.image.is_file():
        raise _UsageError(f"image not found: {args.image}")
    try:
        with Image.open(args.image) as handle:
            image = handle.copy()
    except Exception as exc:
        raise _UsageError(f"image does not decode: {exc}") from exc
    noisy = inject_noise(image, args.sigma, args.seed)
    out = args.out or Path(f"{args.image.stem}.noisy.png")
    noisy.save(out, format="PNG")
    print(out)
    return EXIT_OK


def _cmd_heatmap(args: argparse.Namespace) -> int:
    if not args.trace.is_file():
        raise _UsageError(f"trace not found: {args.trace}")
    try:
        trace_doc = json.loads(args.trace.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise _UsageError(f"trace is not valid JSON: {exc}") from exc
    out = args.out or Path(f"{args.trace.stem}.heatmap.csv")
    try:
        write_heatmap_csv(trace_doc, out)
    except (KeyError, ValueError) as exc:
        raise _UsageError(f"bad trace document: {exc}") from exc
    print(out)
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    config = _load_effective_config(args)
    app = create_app(build_backend(config), config)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


_COMMANDS = {
    "extract": _cmd_extract,
    "batch": _cmd_batch,
    "sweep": _cmd_sweep,
    "noise": _cmd_noise,
    "heatmap": _cmd_heatmap,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (_UsageError, ConfigError, ManifestError, GridGeometryError, SweepError) as exc:
        print(f"patchfinder: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _RuntimeFailure as exc:
        print(f"patchfinder: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
