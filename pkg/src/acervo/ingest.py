"""File discovery, content fingerprinting, and idempotent registration.

Identity is the SHA-256 of the file bytes: registering the same content
twice (same file or a byte-identical copy elsewhere) never creates a
second record, it only appends to the origin log.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError
from .store import DocumentRecord, Store

DEFAULT_EXTENSIONS = ("pdf", "txt", "jpg", "png", "tif")

_CHUNK = 1 << 20

ORIGIN_DIRECTORY = "directory_scan"
ORIGIN_MANIFEST = "manifest_row"


@dataclass(frozen=True)
class IngestCandidate:
    origin: str
    source_path: Path
    declared_model: str
    extra_hints: dict[str, str] = field(default_factory=dict)
    text_sidecar: Path | None = None


@dataclass(frozen=True)
class RegistrationOutcome:
    created: bool
    record: DocumentRecord


def hash_file(path: str | Path) -> str:
    """SHA-256 of the file bytes, streamed in constant memory."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        while chunk := fh.read(_CHUNK):
            digest.update(chunk)
    return digest.hexdigest()


def find_sidecar(path: Path) -> Path | None:
    """Locate extracted text for an object.

    A ``.txt`` object is its own text; anything else looks for the
    ``<filename>.txt`` sidecar next to it (``a.pdf`` -> ``a.pdf.txt``).
    """
    if path.suffix == ".txt":
        return path
    sidecar = path.with_name(path.name + ".txt")
    return sidecar if sidecar.is_file() else None


def _is_sidecar_of_present_file(path: Path) -> bool:
    return path.suffix == ".txt" and path.with_name(path.stem).is_file()


def scan_directory(
    path: str | Path,
    extensions: tuple[str, ...] = DEFAULT_EXTENSIONS,
    *,
    model: str = "",
) -> list[IngestCandidate]:
    """Recursively collect candidate files in lexicographic order.

    Only files matching the extension filter are returned. A ``.txt``
    file whose name is ``<other present file>.txt`` is treated as that
    file's text sidecar, not as a document of its own.
    """
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    allowed = {ext.lower().lstrip(".") for ext in extensions}
    candidates: list[IngestCandidate] = []
    for p in sorted(root.rglob("*")):
        if not p.is_file():
            continue
        if p.suffix.lower().lstrip(".") not in allowed:
            continue
        if _is_sidecar_of_present_file(p):
            continue
        candidates.append(
            IngestCandidate(origin=ORIGIN_DIRECTORY, source_path=p, declared_model=model)
        )
    return candidates


def load_manifest(
    csv_path: str | Path,
    *,
    path_column: str = "file",
    model_column: str = "model",
    sidecar_column: str = "sidecar",
) -> list[IngestCandidate]:
    """Read a CSV manifest (UTF-8, header row) into candidates.

    Every column other than the mapped ones becomes an extra hint that
    the prompt builder will pass to the model. Relative paths resolve
    against the manifest's own directory. Row numbers in errors count
    the header as row 1.
    """
    csv_path = Path(csv_path)
    base = csv_path.parent
    candidates: list[IngestCandidate] = []
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames
        if header is None:
            raise ManifestError("manifest has no header row", row=1)
        for column in (path_column, model_column):
            if column not in header:
                raise ManifestError(f"missing mapped column {column!r}", row=1)
        mapped = {path_column, model_column, sidecar_column}
        for row_number, row in enumerate(reader, start=2):
            path_cell = (row.get(path_column) or "").strip()
            if not path_cell:
                raise ManifestError(f"empty {path_column!r} cell", row=row_number)
            model_cell = (row.get(model_column) or "").strip()
            if not model_cell:
                raise ManifestError(f"empty {model_column!r} cell", row=row_number)
            sidecar_cell = (row.get(sidecar_column) or "").strip()
            hints = {
                key: value.strip()
                for key, value in row.items()
                if key and key not in mapped and value and value.strip()
            }
            candidates.append(
                IngestCandidate(
                    origin=ORIGIN_MANIFEST,
                    source_path=base / path_cell,
                    declared_model=model_cell,
                    extra_hints=hints,
                    text_sidecar=base / sidecar_cell if sidecar_cell else None,
                )
            )
    return candidates


def register(candidate: IngestCandidate, store: Store) -> RegistrationOutcome:
    """Hash the candidate's file and register it if the content is new."""
    digest = hash_file(candidate.source_path)
    created, record = store.register_document(
        digest,
        model_name=candidate.declared_model,
        source_path=str(candidate.source_path),
        origin=candidate.origin,
        text_ref=str(candidate.text_sidecar) if candidate.text_sidecar else None,
        hints=candidate.extra_hints,
    )
    return RegistrationOutcome(created=created, record=record)
