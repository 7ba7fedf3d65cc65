"""Description models: per-document-type metadata contracts defined in YAML.

A description model names the fields the pipeline must produce for one
document type (a newspaper edition, a photograph, ...). Field keys are
namespaced vocabulary terms such as ``dcterms:title``. The grammar is
deliberately strict: unknown keys are hard errors so that a typo in a
model file fails loudly instead of silently dropping a field.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping
from urllib.parse import urlparse

import yaml

from .errors import DuplicateModelName, ParseError, SchemaError, UnknownPrefix

DATATYPES = frozenset(
    {"text", "long_text", "date", "integer", "uri", "enum", "list_of_text"}
)

#: Prefixes every model may use without declaring them.
DEFAULT_NAMESPACES: Mapping[str, str] = {
    "dcterms": "http://purl.org/dc/terms/",
    "bibo": "http://purl.org/ontology/bibo/",
}

_TERM_RE = re.compile(r"^([A-Za-z][A-Za-z0-9_.-]*):([A-Za-z][A-Za-z0-9_.-]*)$")
_PLACEHOLDER_RE = re.compile(r"\{([^{}]+)\}")

_MODEL_KEYS = {"name", "document_type", "version", "namespaces", "fields", "collection"}
_FIELD_KEYS = {"key", "label", "datatype", "required", "vocabulary", "hint", "max_length"}
_COLLECTION_KEYS = {"title_template", "parent"}


@dataclass(frozen=True)
class FieldSpec:
    """One metadata field the model expects the AI to fill."""

    key: str
    label: str
    datatype: str
    required: bool = False
    vocabulary: tuple[str, ...] | None = None
    hint: str | None = None
    max_length: int | None = None


@dataclass(frozen=True)
class CollectionRule:
    """How exported items of this type group into repository collections.

    ``title_template`` may contain ``{field_key}`` placeholders that are
    substituted with the record's value for that field.
    """

    title_template: str
    parent_collection: str | None = None

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.title_template)

    def render(self, values: Mapping[str, Any], missing: str = "unknown") -> str:
        def sub(match: re.Match) -> str:
            value = values.get(match.group(1))
            if value is None:
                return missing
            if isinstance(value, list):
                return ", ".join(str(v) for v in value)
            return str(value)

        return _PLACEHOLDER_RE.sub(sub, self.title_template)


@dataclass(frozen=True)
class DescriptionModel:
    name: str
    document_type: str
    version: str
    fields: tuple[FieldSpec, ...]
    collection_rule: CollectionRule | None = None
    namespaces: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_NAMESPACES))

    def field_keys(self) -> list[str]:
        return [f.key for f in self.fields]

    def field_by_key(self, key: str) -> FieldSpec | None:
        for spec in self.fields:
            if spec.key == key:
                return spec
        return None


def split_term(key: str) -> tuple[str, str]:
    match = _TERM_RE.match(key)
    if not match:
        raise SchemaError(f"not a prefix:local term: {key!r}", path=key)
    return match.group(1), match.group(2)


def resolve_term(table: Mapping[str, str], key: str) -> str:
    """Expand ``prefix:local`` to an absolute URI using the namespace table."""
    prefix, local = split_term(key)
    try:
        base = table[prefix]
    except KeyError:
        raise UnknownPrefix(f"prefix {prefix!r} is not registered", path=key) from None
    return base + local


def _require_mapping(node: Any, path: str) -> dict:
    if not isinstance(node, dict):
        raise SchemaError(f"expected a mapping, got {type(node).__name__}", path=path)
    return node


def _reject_unknown(node: Mapping, allowed: set[str], path: str) -> None:
    unknown = [k for k in node if k not in allowed]
    if unknown:
        raise SchemaError(f"unknown key(s): {', '.join(sorted(map(str, unknown)))}", path=path)


def _load_namespaces(node: Any, path: str) -> dict[str, str]:
    table = dict(DEFAULT_NAMESPACES)
    if node is None:
        return table
    mapping = _require_mapping(node, path)
    for prefix, uri in mapping.items():
        if not isinstance(prefix, str) or not prefix:
            raise SchemaError("namespace prefixes must be non-empty strings", path=path)
        if not isinstance(uri, str) or not urlparse(uri).scheme:
            raise SchemaError(f"namespace URI for {prefix!r} is not absolute", path=f"{path}.{prefix}")
        table[prefix] = uri
    return table


def _load_field(node: Any, namespaces: Mapping[str, str], path: str) -> FieldSpec:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, _FIELD_KEYS, path)

    key = mapping.get("key")
    if not isinstance(key, str) or not key:
        raise SchemaError("field needs a non-empty 'key'", path=f"{path}.key")
    prefix, local = split_term(key)
    if prefix not in namespaces:
        raise UnknownPrefix(f"prefix {prefix!r} is not registered", path=f"{path}.key")

    datatype = mapping.get("datatype", "text")
    if datatype not in DATATYPES:
        raise SchemaError(
            f"datatype {datatype!r} not in {sorted(DATATYPES)}", path=f"{path}.datatype"
        )

    required = mapping.get("required", False)
    if not isinstance(required, bool):
        raise SchemaError("'required' must be a boolean", path=f"{path}.required")

    vocabulary = mapping.get("vocabulary")
    if datatype == "enum":
        if not isinstance(vocabulary, list) or not vocabulary:
            raise SchemaError("enum fields need a non-empty 'vocabulary'", path=f"{path}.vocabulary")
        if not all(isinstance(v, str) and v for v in vocabulary):
            raise SchemaError("vocabulary entries must be non-empty strings", path=f"{path}.vocabulary")
        vocabulary = tuple(vocabulary)
    elif vocabulary is not None:
        raise SchemaError("'vocabulary' is only allowed on enum fields", path=f"{path}.vocabulary")

    max_length = mapping.get("max_length")
    if max_length is not None:
        if not isinstance(max_length, int) or isinstance(max_length, bool) or max_length < 1:
            raise SchemaError("'max_length' must be an integer >= 1", path=f"{path}.max_length")

    label = mapping.get("label", local)
    if not isinstance(label, str) or not label:
        raise SchemaError("'label' must be a non-empty string", path=f"{path}.label")

    hint = mapping.get("hint")
    if hint is not None and not isinstance(hint, str):
        raise SchemaError("'hint' must be a string", path=f"{path}.hint")

    return FieldSpec(
        key=key,
        label=label,
        datatype=datatype,
        required=required,
        vocabulary=vocabulary,
        hint=hint,
        max_length=max_length,
    )


def _load_collection(node: Any, field_keys: list[str], path: str) -> CollectionRule:
    mapping = _require_mapping(node, path)
    _reject_unknown(mapping, _COLLECTION_KEYS, path)
    template = mapping.get("title_template")
    if not isinstance(template, str) or not template:
        raise SchemaError("collection needs a non-empty 'title_template'", path=f"{path}.title_template")
    parent = mapping.get("parent")
    if parent is not None and (not isinstance(parent, str) or not parent):
        raise SchemaError("'parent' must be a non-empty string", path=f"{path}.parent")
    rule = CollectionRule(title_template=template, parent_collection=parent)
    for placeholder in rule.placeholders():
        if placeholder not in field_keys:
            raise SchemaError(
                f"placeholder {{{placeholder}}} names no field of this model",
                path=f"{path}.title_template",
            )
    return rule


def load_description_model(yaml_text: str) -> DescriptionModel:
    """Parse one YAML document into a validated DescriptionModel."""
    try:
        raw = yaml.safe_load(yaml_text)
    except yaml.YAMLError as exc:
        raise ParseError(f"malformed YAML: {exc}") from exc

    mapping = _require_mapping(raw, "$")
    _reject_unknown(mapping, _MODEL_KEYS, "$")

    name = mapping.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("model needs a non-empty 'name'", path="$.name")

    document_type = mapping.get("document_type", name)
    if not isinstance(document_type, str) or not document_type:
        raise SchemaError("'document_type' must be a non-empty string", path="$.document_type")

    version = mapping.get("version", "1")
    if isinstance(version, (int, float)):
        version = str(version)
    if not isinstance(version, str) or not version:
        raise SchemaError("'version' must be a non-empty string", path="$.version")

    namespaces = _load_namespaces(mapping.get("namespaces"), "$.namespaces")

    raw_fields = mapping.get("fields")
    if not isinstance(raw_fields, list) or not raw_fields:
        raise SchemaError("model needs a non-empty 'fields' list", path="$.fields")

    fields: list[FieldSpec] = []
    seen: set[str] = set()
    for i, node in enumerate(raw_fields):
        spec = _load_field(node, namespaces, f"$.fields[{i}]")
        if spec.key in seen:
            raise SchemaError(f"duplicate field key {spec.key!r}", path=f"$.fields[{i}].key")
        seen.add(spec.key)
        fields.append(spec)

    if not any(f.required for f in fields):
        raise SchemaError("at least one field must be required", path="$.fields")

    collection_rule = None
    if mapping.get("collection") is not None:
        collection_rule = _load_collection(mapping["collection"], [f.key for f in fields], "$.collection")

    return DescriptionModel(
        name=name,
        document_type=document_type,
        version=version,
        fields=tuple(fields),
        collection_rule=collection_rule,
        namespaces=namespaces,
    )


def dump_description_model(model: DescriptionModel) -> str:
    """Serialize back to the same YAML grammar ``load_description_model`` reads."""
    doc: dict[str, Any] = {
        "name": model.name,
        "document_type": model.document_type,
        "version": model.version,
    }
    extra = {p: u for p, u in model.namespaces.items() if DEFAULT_NAMESPACES.get(p) != u}
    if extra:
        doc["namespaces"] = extra
    doc["fields"] = []
    for spec in model.fields:
        entry: dict[str, Any] = {
            "key": spec.key,
            "label": spec.label,
            "datatype": spec.datatype,
            "required": spec.required,
        }
        if spec.vocabulary is not None:
            entry["vocabulary"] = list(spec.vocabulary)
        if spec.hint is not None:
            entry["hint"] = spec.hint
        if spec.max_length is not None:
            entry["max_length"] = spec.max_length
        doc["fields"].append(entry)
    if model.collection_rule is not None:
        coll: dict[str, Any] = {"title_template": model.collection_rule.title_template}
        if model.collection_rule.parent_collection is not None:
            coll["parent"] = model.collection_rule.parent_collection
        doc["collection"] = coll
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True)


def load_model_directory(path: str | Path) -> dict[str, DescriptionModel]:
    """Load every ``*.yaml``/``*.yml`` file in ``path``, keyed by model name."""
    directory = Path(path)
    models: dict[str, DescriptionModel] = {}
    sources: dict[str, Path] = {}
    files = sorted(p for p in directory.iterdir() if p.suffix in (".yaml", ".yml"))
    for file in files:
        try:
            model = load_description_model(file.read_text(encoding="utf-8"))
        except (ParseError, SchemaError) as exc:
            raise type(exc)(f"{file.name}: {exc}") from exc
        if model.name in models:
            raise DuplicateModelName(
                f"model {model.name!r} declared in both {sources[model.name].name} and {file.name}"
            )
        models[model.name] = model
        sources[model.name] = file
    return models
