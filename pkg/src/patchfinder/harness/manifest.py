"""Dataset manifests and prompt templates.

A manifest is a human-diffable YAML/JSON document listing images and the
fields to extract from each, with optional ground truth. Image paths are
resolved relative to the manifest file. Prompt templates are plain strings
with optional ``{field_name}`` / ``{kind}`` placeholders; a field picks its
template by explicit reference, then by its own name, then by its kind, then
the generic default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from ..filters import FieldKind


class ManifestError(ValueError):
    """Structurally invalid manifest or unresolvable template reference."""


# The latitude template teaches the model both coordinate notations up front;
# small models otherwise mistake DMS strings for arithmetic. Deliberately
# mirrored for longitude.
_COORD_FORMS = (
    "You understand that latitude can come in a form of decimals, for example "
    "52.25967 or in the form of degrees, for example 60°12'59.32\". or 60°12'59\"."
)

DEFAULT_TEMPLATES: dict[str, str] = {
    "default": "Extract the {field_name} from this document. Respond with only the value.",
    "numeric": "Extract the {field_name} from this document. Respond with only the number.",
    "latitude": (
        _COORD_FORMS + " Extract the drilled latitude of the well described in this "
        "well completion report. Do not extract the longitude."
    ),
    "longitude": (
        _COORD_FORMS.replace("latitude", "longitude")
        + " Extract the drilled longitude of the well described in this "
        "well completion report. Do not extract the latitude."
    ),
    "depth": (
        "Extract the true vertical depth (TVD) of the well described in this report. "
        "Respond with only the depth value."
    ),
    "free-text": "Extract the {field_name} from this document. Respond with only the value.",
}


class _SafeDict(dict):
    def __missing__(self, key: str) -> str:  # leave unknown placeholders intact
        return "{" + key + "}"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    text: str

    def render(self, field_name: str, kind: FieldKind) -> str:
        rendered = self.text.format_map(_SafeDict(field_name=field_name, kind=kind.value))
        if not rendered.strip():
            raise ManifestError(f"template {self.name!r} rendered empty")
        return rendered


def resolve_template(registry: dict[str, str], field_name: str, kind: FieldKind,
                     template: str | None = None) -> PromptTemplate:
    """Pick the template for a field; an explicit reference must exist."""
    if template is not None:
        if template not in registry:
            raise ManifestError(f"field {field_name!r} names unknown template {template!r}")
        return PromptTemplate(name=template, text=registry[template])
    for candidate in (field_name, kind.value, "default"):
        if candidate in registry:
            return PromptTemplate(name=candidate, text=registry[candidate])
    raise ManifestError(f"no template found for field {field_name!r}")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: FieldKind
    template: str | None = None
    ground_truth: str | None = None


@dataclass(frozen=True)
class DocumentRecord:
    document_id: str
    image_path: Path
    fields: tuple[FieldSpec, ...]
    group: str = "default"


@dataclass(frozen=True)
class DatasetManifest:
    documents: tuple[DocumentRecord, ...]
    templates: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc in self.documents:
            if doc.document_id in seen:
                raise ManifestError(f"duplicate document_id {doc.document_id!r}")
            seen.add(doc.document_id)

    def select(self, document_ids: list[str]) -> DatasetManifest:
        """Split utility: keep exactly the listed ids, in the listed order."""
        by_id = {doc.document_id: doc for doc in self.documents}
        missing = [i for i in document_ids if i not in by_id]
        if missing:
            raise ManifestError(f"unknown document ids: {missing}")
        return replace(self, documents=tuple(by_id[i] for i in document_ids))

    def has_ground_truth(self) -> bool:
        return any(f.ground_truth is not None for doc in self.documents for f in doc.fields)


def _parse_field(data: dict, document_id: str) -> FieldSpec:
    try:
        kind = FieldKind(data.get("kind", "free-text"))
    except ValueError as exc:
        raise ManifestError(f"document {document_id!r}: {exc}") from exc
    if not data.get("name"):
        raise ManifestError(f"document {document_id!r} has a field without a name")
    truth = data.get("ground_truth")
    return FieldSpec(
        name=str(data["name"]),
        kind=kind,
        template=data.get("template"),
        ground_truth=str(truth) if truth is not None else None,
    )


def manifest_from_dict(data: dict, base_dir: Path) -> DatasetManifest:
    if not isinstance(data, dict) or not isinstance(data.get("documents"), list):
        raise ManifestError("manifest must be a mapping with a 'documents' list")
    default_group = str(data.get("group", "default"))
    templates = {str(k): str(v) for k, v in (data.get("templates") or {}).items()}
    documents = []
    for entry in data["documents"]:
        doc_id = entry.get("document_id")
        if not doc_id:
            raise ManifestError("every document needs a document_id")
        if not entry.get("image"):
            raise ManifestError(f"document {doc_id!r} has no image path")
        fields = tuple(_parse_field(f, doc_id) for f in entry.get("fields", []))
        if not fields:
            raise ManifestError(f"document {doc_id!r} lists no fields")
        documents.append(DocumentRecord(
            document_id=str(doc_id),
            image_path=(base_dir / str(entry["image"])).resolve(),
            fields=fields,
            group=str(entry.get("group", default_group)),
        ))
    return DatasetManifest(documents=tuple(documents), templates=templates)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as handle:
        data = yaml.safe_load(handle)
    manifest = manifest_from_dict(data, base_dir=path.parent)
    return manifest


def validate_templates(manifest: DatasetManifest, registry: dict[str, str]) -> None:
    """Check that every field's template reference resolves."""
    merged = {**registry, **manifest.templates}
    for doc in manifest.documents:
        for spec in doc.fields:
            resolve_template(merged, spec.name, spec.kind, spec.template)
