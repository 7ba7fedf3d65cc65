"""Runtime validators compiled from description models.

The LLM is asked for a single JSON object; everything it returns passes
through here before it is allowed to exist as metadata. Validation is
strict: unknown fields are violations, required fields must be present,
and every value is coerced to its declared datatype or rejected. Nothing
is repaired silently; repair happens upstream by re-prompting with the
violation list.
"""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass, field
from typing import Any, Mapping
from urllib.parse import urlparse

from .ontology import DescriptionModel, FieldSpec

VIOLATION_KINDS = frozenset(
    {
        "missing_required",
        "unknown_field",
        "wrong_type",
        "enum_violation",
        "too_long",
        "bad_date",
        "not_json_object",
    }
)

ROOT = "$root"

_ISO_DATE_RE = re.compile(r"^(\d{4})-(\d{2})-(\d{2})$")
_DAY_FIRST_RE = re.compile(r"^(\d{2})/(\d{2})/(\d{4})$")
_YEAR_RE = re.compile(r"^(\d{4})$")
_INT_RE = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True)
class Violation:
    field: str
    kind: str
    message: str

    def to_dict(self) -> dict[str, str]:
        return {"field": self.field, "kind": self.kind, "message": self.message}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


@dataclass(frozen=True)
class MetadataRecord:
    """A validated, typed set of field values for one document."""

    model_name: str
    values: Mapping[str, Any]
    provenance: str = "llm"
    validated_at: str = ""
    annotations: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model_name": self.model_name,
            "values": dict(self.values),
            "provenance": self.provenance,
            "validated_at": self.validated_at,
            "annotations": {k: dict(v) for k, v in self.annotations.items()},
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MetadataRecord":
        return cls(
            model_name=data["model_name"],
            values=dict(data["values"]),
            provenance=data.get("provenance", "llm"),
            validated_at=data.get("validated_at", ""),
            annotations={k: dict(v) for k, v in data.get("annotations", {}).items()},
        )


@dataclass(frozen=True)
class Coerced:
    value: Any
    annotation: dict[str, str] | None = None


def _now_iso() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def _coerce_date(spec: FieldSpec, raw: Any) -> Coerced | Violation:
    if not isinstance(raw, str):
        return Violation(spec.key, "wrong_type", f"expected a date string, got {type(raw).__name__}")
    text = raw.strip()
    if match := _ISO_DATE_RE.match(text):
        year, month, day = (int(g) for g in match.groups())
    elif match := _DAY_FIRST_RE.match(text):
        day, month, year = (int(g) for g in match.groups())
    elif match := _YEAR_RE.match(text):
        year = int(match.group(1))
        try:
            _dt.date(year, 1, 1)
        except ValueError:
            return Violation(spec.key, "bad_date", f"{text!r} is not a valid year")
        return Coerced(f"{year:04d}-01-01", {"precision": "year"})
    else:
        return Violation(
            spec.key, "bad_date",
            f"{text!r} matches none of the accepted forms (YYYY-MM-DD, DD/MM/YYYY, YYYY)",
        )
    try:
        _dt.date(year, month, day)
    except ValueError:
        return Violation(spec.key, "bad_date", f"{text!r} is not a valid calendar date")
    return Coerced(f"{year:04d}-{month:02d}-{day:02d}")


def _coerce_integer(spec: FieldSpec, raw: Any) -> Coerced | Violation:
    if isinstance(raw, bool):
        return Violation(spec.key, "wrong_type", "expected an integer, got a boolean")
    if isinstance(raw, int):
        return Coerced(raw)
    if isinstance(raw, float) and raw.is_integer():
        return Coerced(int(raw))
    if isinstance(raw, str) and _INT_RE.match(raw.strip()):
        return Coerced(int(raw.strip()))
    return Violation(spec.key, "wrong_type", f"expected an integer, got {raw!r}")


def _check_length(spec: FieldSpec, value: str) -> Violation | None:
    if spec.max_length is not None and len(value) > spec.max_length:
        return Violation(
            spec.key, "too_long",
            f"{len(value)} characters exceeds max_length {spec.max_length}",
        )
    return None


def _coerce_text(spec: FieldSpec, raw: Any) -> Coerced | Violation:
    if not isinstance(raw, str):
        return Violation(spec.key, "wrong_type", f"expected a string, got {type(raw).__name__}")
    value = raw.strip()
    if violation := _check_length(spec, value):
        return violation
    return Coerced(value)


def _coerce_uri(spec: FieldSpec, raw: Any) -> Coerced | Violation:
    if not isinstance(raw, str):
        return Violation(spec.key, "wrong_type", f"expected a URI string, got {type(raw).__name__}")
    value = raw.strip()
    parsed = urlparse(value)
    if not parsed.scheme or not (parsed.netloc or parsed.path):
        return Violation(spec.key, "wrong_type", f"{value!r} is not an absolute URI")
    if violation := _check_length(spec, value):
        return violation
    return Coerced(value)


def _coerce_enum(spec: FieldSpec, raw: Any) -> Coerced | Violation:
    if not isinstance(raw, str):
        return Violation(spec.key, "wrong_type", f"expected a string, got {type(raw).__name__}")
    value = raw.strip()
    folded = value.casefold()
    for canonical in spec.vocabulary or ():
        if canonical.casefold() == folded:
            return Coerced(canonical)
    return Violation(
        spec.key, "enum_violation",
        f"{value!r} is not one of {list(spec.vocabulary or ())}",
    )


def _coerce_list_of_text(spec: FieldSpec, raw: Any) -> Coerced | Violation:
    # LLMs frequently emit a bare string for a list field; wrapping is unambiguous.
    items = [raw] if isinstance(raw, str) else raw
    if not isinstance(items, list):
        return Violation(
            spec.key, "wrong_type", f"expected a list of strings, got {type(raw).__name__}"
        )
    out: list[str] = []
    for item in items:
        if not isinstance(item, str):
            return Violation(
                spec.key, "wrong_type", f"list items must be strings, got {type(item).__name__}"
            )
        value = item.strip()
        if violation := _check_length(spec, value):
            return violation
        out.append(value)
    return Coerced(out)


_COERCERS = {
    "text": _coerce_text,
    "long_text": _coerce_text,
    "date": _coerce_date,
    "integer": _coerce_integer,
    "uri": _coerce_uri,
    "enum": _coerce_enum,
    "list_of_text": _coerce_list_of_text,
}

_TYPE_LABELS = {
    "text": "string",
    "long_text": "string (may be long)",
    "date": "string, ISO 8601 date (YYYY-MM-DD)",
    "integer": "integer",
    "uri": "string, absolute URI",
    "enum": "string, one of allowed_values",
    "list_of_text": "array of strings",
}


def coerce_value(spec: FieldSpec, raw: Any) -> Coerced | Violation:
    """Coerce one raw JSON value to its field's datatype.

    Idempotent: coercing an already coerced value returns it unchanged
    (modulo the dropped precision annotation for year-only dates).
    """
    return _COERCERS[spec.datatype](spec, raw)


class CompiledValidator:
    """A description model compiled to an executable checking rule set."""

    strictness = "strict"

    def __init__(self, model: DescriptionModel):
        self.model = model
        self.model_name = model.name
        self.field_validators = [(spec, _COERCERS[spec.datatype]) for spec in model.fields]
        self._known = {spec.key for spec in model.fields}

    def validate(self, candidate: Any) -> tuple[MetadataRecord | None, ValidationReport]:
        """Check a parsed JSON value; never mutates the candidate."""
        if not isinstance(candidate, dict):
            report = ValidationReport(
                (Violation(ROOT, "not_json_object",
                           f"expected a JSON object, got {type(candidate).__name__}"),)
            )
            return None, report

        violations: list[Violation] = []
        for key in candidate:
            if key not in self._known:
                violations.append(
                    Violation(str(key), "unknown_field", f"{key!r} is not a field of this model")
                )

        values: dict[str, Any] = {}
        annotations: dict[str, dict[str, str]] = {}
        for spec, coercer in self.field_validators:
            # JSON null is treated as "not provided".
            if spec.key not in candidate or candidate[spec.key] is None:
                if spec.required:
                    violations.append(
                        Violation(spec.key, "missing_required", f"required field {spec.key!r} is missing")
                    )
                continue
            result = coercer(spec, candidate[spec.key])
            if isinstance(result, Violation):
                violations.append(result)
            else:
                values[spec.key] = result.value
                if result.annotation:
                    annotations[spec.key] = result.annotation

        report = ValidationReport(tuple(violations))
        if not report.ok:
            return None, report
        record = MetadataRecord(
            model_name=self.model_name,
            values=values,
            provenance="llm",
            validated_at=_now_iso(),
            annotations=annotations,
        )
        return record, report


def compile_validator(model: DescriptionModel) -> CompiledValidator:
    return CompiledValidator(model)


def validate(validator: CompiledValidator, candidate: Any) -> tuple[MetadataRecord | None, ValidationReport]:
    return validator.validate(candidate)


def schema_prompt_fragment(model: DescriptionModel) -> str:
    """Render a JSON-schema-like description of the expected object.

    Deterministic, field order preserved, every vocabulary term verbatim.
    Each field key appears exactly once.
    """
    props: dict[str, dict[str, Any]] = {}
    for spec in model.fields:
        entry: dict[str, Any] = {
            "type": _TYPE_LABELS[spec.datatype],
            "required": spec.required,
        }
        if spec.vocabulary is not None:
            entry["allowed_values"] = list(spec.vocabulary)
        if spec.max_length is not None:
            entry["max_length"] = spec.max_length
        if spec.hint:
            entry["hint"] = spec.hint
        props[spec.key] = entry
    return json.dumps(props, ensure_ascii=False, indent=2)
