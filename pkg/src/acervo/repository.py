"""Publishing validated records to an Omeka-S-style repository REST API.

The client speaks the Omeka S conventions: numeric property ids looked
up from ``/properties``, JSON-LD-ish item payloads, item sets as
collections, multipart media upload, and ``key_identity``/
``key_credential`` query authentication. Every exported item carries the
document's content hash as a ``dcterms:identifier`` value, which is the
idempotency key: re-exporting finds the existing item and creates
nothing.

Collection hierarchy: an item set payload may carry
``"o:parent": {"o:id": <id>}`` (the convention of tree-style item set
modules); parents are created before children.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping

import requests

from .errors import AuthError, MediaUploadError, TransportError, UnknownTerm
from .ontology import DescriptionModel
from .validation import MetadataRecord

IDENTIFIER_TERM = "dcterms:identifier"
TITLE_TERM = "dcterms:title"


@dataclass(frozen=True)
class RepositoryConfig:
    base_url: str
    key_identity_env: str | None = None
    key_credential_env: str | None = None
    property_cache_path: str | None = None
    timeout: float = 60.0


@dataclass(frozen=True)
class PropertyValue:
    property_id: int
    term: str
    value: str
    type: str  # literal | uri


@dataclass(frozen=True)
class RepositoryPayload:
    properties: tuple[PropertyValue, ...]
    item_set_ids: tuple[int, ...]
    media_paths: tuple[str, ...]
    identifier: str


def build_payload(
    record: MetadataRecord,
    model: DescriptionModel,
    property_map: Mapping[str, int],
    content_hash: str,
    *,
    item_set_ids: Iterable[int] = (),
    media_paths: Iterable[str] = (),
) -> RepositoryPayload:
    """Map a validated record onto repository properties.

    Exactly one property entry per field value; list values become
    repeated entries; the content hash is always appended as the
    identifier property.
    """
    entries: list[PropertyValue] = []
    for spec in model.fields:
        if spec.key not in record.values:
            continue
        value = record.values[spec.key]
        value_type = "uri" if spec.datatype == "uri" else "literal"
        items = value if isinstance(value, list) else [value]
        for item in items:
            entries.append(
                PropertyValue(
                    property_id=property_map[spec.key],
                    term=spec.key,
                    value=str(item),
                    type=value_type,
                )
            )
    entries.append(
        PropertyValue(
            property_id=property_map[IDENTIFIER_TERM],
            term=IDENTIFIER_TERM,
            value=content_hash,
            type="literal",
        )
    )
    return RepositoryPayload(
        properties=tuple(entries),
        item_set_ids=tuple(item_set_ids),
        media_paths=tuple(str(p) for p in media_paths),
        identifier=content_hash,
    )


def _property_entry(pv: PropertyValue) -> dict[str, Any]:
    if pv.type == "uri":
        return {"type": "uri", "property_id": pv.property_id, "@id": pv.value}
    return {"type": "literal", "property_id": pv.property_id, "@value": pv.value}


class RepositoryClient:
    """Thread-safe client for one repository endpoint."""

    def __init__(self, config: RepositoryConfig):
        self._config = config
        self._base = config.base_url.rstrip("/")
        self._properties: dict[str, int] = {}
        self._properties_lock = threading.Lock()
        self._collection_locks: dict[str, threading.Lock] = {}
        self._collection_locks_guard = threading.Lock()
        if config.property_cache_path and Path(config.property_cache_path).is_file():
            with open(config.property_cache_path, encoding="utf-8") as fh:
                self._properties.update(json.load(fh))

    # -- transport ------------------------------------------------------

    def _auth_params(self) -> dict[str, str]:
        params = {}
        cfg = self._config
        if cfg.key_identity_env and (identity := os.environ.get(cfg.key_identity_env)):
            params["key_identity"] = identity
        if cfg.key_credential_env and (credential := os.environ.get(cfg.key_credential_env)):
            params["key_credential"] = credential
        return params

    def _request(self, method: str, path: str, *, params=None, json_body=None, files=None, data=None):
        url = self._base + path
        merged = dict(params or {})
        merged.update(self._auth_params())
        try:
            response = requests.request(
                method,
                url,
                params=merged,
                json=json_body,
                files=files,
                data=data,
                timeout=self._config.timeout,
            )
        except (requests.Timeout, requests.ConnectionError) as exc:
            raise TransportError(f"{method} {path}: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(f"repository rejected credentials ({response.status_code})")
        if response.status_code >= 400:
            raise TransportError(f"{method} {path}: status {response.status_code}: {response.text[:200]}")
        return response.json() if response.content else None

    # -- properties -----------------------------------------------------

    def resolve_properties(self, terms: Iterable[str]) -> dict[str, int]:
        """Term -> numeric property id, from cache or one listing fetch."""
        wanted = list(dict.fromkeys(terms))
        with self._properties_lock:
            missing = [t for t in wanted if t not in self._properties]
            if missing:
                listing = self._request("GET", "/properties") or []
                live = {entry["o:term"]: entry["o:id"] for entry in listing}
                for term in missing:
                    if term not in live:
                        raise UnknownTerm(f"repository knows no property {term!r}")
                    self._properties[term] = live[term]
                self._write_cache()
            return {t: self._properties[t] for t in wanted}

    def _write_cache(self) -> None:
        path = self._config.property_cache_path
        if not path:
            return
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self._properties, fh, ensure_ascii=False, indent=0)

    # -- collections ------------------------------------------------------

    def _lock_for(self, title: str) -> threading.Lock:
        with self._collection_locks_guard:
            return self._collection_locks.setdefault(title, threading.Lock())

    def _find_item_set(self, title: str) -> int | None:
        prop_id = self.resolve_properties([TITLE_TERM])[TITLE_TERM]
        listing = self._request(
            "GET",
            "/item_sets",
            params={
                "property[0][property]": prop_id,
                "property[0][type]": "eq",
                "property[0][text]": title,
            },
        ) or []
        for entry in listing:
            return entry["o:id"]
        return None

    def ensure_collection(self, title: str, parent: str | None = None) -> int:
        """Return the id of the item set with this exact title, creating
        it (parent chain root-first) when absent. Idempotent."""
        if not title:
            raise ValueError("collection title must be non-empty")
        parent_id = self.ensure_collection(parent) if parent else None
        with self._lock_for(title):
            existing = self._find_item_set(title)
            if existing is not None:
                return existing
            prop_id = self.resolve_properties([TITLE_TERM])[TITLE_TERM]
            body: dict[str, Any] = {
                TITLE_TERM: [{"type": "literal", "property_id": prop_id, "@value": title}]
            }
            if parent_id is not None:
                body["o:parent"] = {"o:id": parent_id}
            created = self._request("POST", "/item_sets", json_body=body)
            return created["o:id"]

    # -- items ------------------------------------------------------------

    def _find_item_by_identifier(self, content_hash: str) -> dict | None:
        prop_id = self.resolve_properties([IDENTIFIER_TERM])[IDENTIFIER_TERM]
        listing = self._request(
            "GET",
            "/items",
            params={
                "property[0][property]": prop_id,
                "property[0][type]": "eq",
                "property[0][text]": content_hash,
            },
        ) or []
        for entry in listing:
            return entry
        return None

    def _item_media_sources(self, item_id: int) -> set[str]:
        listing = self._request("GET", "/media", params={"item_id": item_id}) or []
        return {entry.get("o:source", "") for entry in listing}

    def _upload_media(self, item_id: int, media_paths: Iterable[str]) -> None:
        for path in media_paths:
            path = Path(path)
            meta = {"o:ingester": "upload", "file_index": "0", "o:item": {"o:id": item_id}}
            try:
                with open(path, "rb") as fh:
                    self._request(
                        "POST",
                        "/media",
                        data={"data": json.dumps(meta)},
                        files={"file[0]": (path.name, fh)},
                    )
            except (OSError, TransportError) as exc:
                raise MediaUploadError(
                    f"media upload failed for {path.name}: {exc}", item_id=item_id
                ) from exc

    def export_item(
        self,
        record: MetadataRecord,
        model: DescriptionModel,
        content_hash: str,
        *,
        media_paths: Iterable[str] = (),
        item_set_ids: Iterable[int] = (),
    ) -> int:
        """Create (or find) the item for this record; returns its id.

        Idempotent on the content-hash identifier. If the item already
        exists, only media missing by source filename are uploaded, so a
        run interrupted between item creation and media upload heals on
        retry. MediaUploadError always carries the item id.
        """
        terms = [spec.key for spec in model.fields if spec.key in record.values]
        terms.append(IDENTIFIER_TERM)
        prop_map = self.resolve_properties(terms)
        payload = build_payload(
            record,
            model,
            prop_map,
            content_hash,
            item_set_ids=item_set_ids,
            media_paths=media_paths,
        )

        existing = self._find_item_by_identifier(content_hash)
        if existing is not None:
            item_id = existing["o:id"]
            if payload.media_paths:
                present = self._item_media_sources(item_id)
                missing = [p for p in payload.media_paths if Path(p).name not in present]
                if missing:
                    self._upload_media(item_id, missing)
            return item_id

        body: dict[str, Any] = {}
        for pv in payload.properties:
            body.setdefault(pv.term, []).append(_property_entry(pv))
        if payload.item_set_ids:
            body["o:item_set"] = [{"o:id": sid} for sid in payload.item_set_ids]
        created = self._request("POST", "/items", json_body=body)
        item_id = created["o:id"]
        self._upload_media(item_id, payload.media_paths)
        return item_id
