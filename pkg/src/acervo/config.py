"""Pipeline configuration: one YAML file, secrets only via environment.

Relative paths resolve against the config file's own directory, so a
fixture tree can carry its config along. Unknown keys are errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .llm import EndpointConfig, RepairPolicy
from .quality import DEFAULT_MIN_TOKENS, DEFAULT_THRESHOLD
from .repository import RepositoryConfig
from .store import DEFAULT_LEASE_SECONDS

_TOP_KEYS = {
    "store_path",
    "model_directory",
    "dictionary_directory",
    "gate",
    "endpoint",
    "repair",
    "repository",
    "workers",
    "batch_size",
    "max_attempts",
    "lease_seconds",
    "sources",
}
_GATE_KEYS = {"threshold", "min_tokens"}
_ENDPOINT_KEYS = {
    "base_url",
    "model_id",
    "api_key_env",
    "timeout",
    "max_output_tokens",
    "temperature",
    "retry_backoff",
}
_REPAIR_KEYS = {"max_attempts", "include_violations_in_reprompt"}
_REPOSITORY_KEYS = {
    "base_url",
    "key_identity_env",
    "key_credential_env",
    "property_cache_path",
    "timeout",
}
_SOURCE_KEYS = {"type", "path", "model", "extensions", "path_column", "model_column", "sidecar_column"}


@dataclass(frozen=True)
class GateConfig:
    threshold: float = DEFAULT_THRESHOLD
    min_tokens: int = DEFAULT_MIN_TOKENS


@dataclass(frozen=True)
class SourceConfig:
    type: str  # directory | manifest
    path: Path
    model: str | None = None
    extensions: tuple[str, ...] | None = None
    path_column: str = "file"
    model_column: str = "model"
    sidecar_column: str = "sidecar"


@dataclass(frozen=True)
class PipelineConfig:
    store_path: Path
    model_directory: Path
    dictionary_directory: Path
    endpoint: EndpointConfig
    repository: RepositoryConfig
    gate: GateConfig = field(default_factory=GateConfig)
    repair: RepairPolicy = field(default_factory=RepairPolicy)
    workers: int = 2
    batch_size: int = 8
    max_attempts: int = 3
    lease_seconds: float = DEFAULT_LEASE_SECONDS
    sources: tuple[SourceConfig, ...] = ()

    def with_overrides(self, workers: int | None = None, batch_size: int | None = None) -> "PipelineConfig":
        cfg = self
        if workers is not None:
            cfg = replace(cfg, workers=workers)
        if batch_size is not None:
            cfg = replace(cfg, batch_size=batch_size)
        return cfg


def _require_mapping(node: Any, name: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(f"{name} must be a mapping")
    return node


def _reject_unknown(node: Mapping, allowed: set[str], name: str) -> None:
    unknown = sorted(str(k) for k in node if k not in allowed)
    if unknown:
        raise ConfigError(f"{name}: unknown key(s): {', '.join(unknown)}")


def _existing_dir(base: Path, raw: Any, name: str) -> Path:
    if not isinstance(raw, str) or not raw:
        raise ConfigError(f"{name} must be a non-empty path string")
    path = (base / raw).resolve() if not Path(raw).is_absolute() else Path(raw)
    if not path.is_dir():
        raise ConfigError(f"{name}: no such directory: {path}")
    return path


def _load_sources(nodes: Any, base: Path) -> tuple[SourceConfig, ...]:
    if nodes is None:
        return ()
    if not isinstance(nodes, list):
        raise ConfigError("sources must be a list")
    out = []
    for i, node in enumerate(nodes):
        name = f"sources[{i}]"
        mapping = _require_mapping(node, name)
        _reject_unknown(mapping, _SOURCE_KEYS, name)
        kind = mapping.get("type")
        if kind not in ("directory", "manifest"):
            raise ConfigError(f"{name}.type must be 'directory' or 'manifest'")
        raw_path = mapping.get("path")
        if not isinstance(raw_path, str) or not raw_path:
            raise ConfigError(f"{name}.path must be a non-empty path string")
        path = (base / raw_path).resolve() if not Path(raw_path).is_absolute() else Path(raw_path)
        if kind == "directory":
            if not path.is_dir():
                raise ConfigError(f"{name}.path: no such directory: {path}")
            model = mapping.get("model")
            if not isinstance(model, str) or not model:
                raise ConfigError(f"{name}.model is required for directory sources")
        else:
            if not path.is_file():
                raise ConfigError(f"{name}.path: no such file: {path}")
            model = mapping.get("model")
        extensions = mapping.get("extensions")
        if extensions is not None:
            if not isinstance(extensions, list) or not all(isinstance(e, str) for e in extensions):
                raise ConfigError(f"{name}.extensions must be a list of strings")
            extensions = tuple(extensions)
        out.append(
            SourceConfig(
                type=kind,
                path=path,
                model=model,
                extensions=extensions,
                path_column=mapping.get("path_column", "file"),
                model_column=mapping.get("model_column", "model"),
                sidecar_column=mapping.get("sidecar_column", "sidecar"),
            )
        )
    return tuple(out)


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    base = path.parent.resolve()
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config YAML: {exc}") from exc

    mapping = _require_mapping(raw, "config")
    _reject_unknown(mapping, _TOP_KEYS, "config")

    for required in ("store_path", "model_directory", "dictionary_directory", "endpoint", "repository"):
        if required not in mapping:
            raise ConfigError(f"config is missing {required!r}")

    store_raw = mapping["store_path"]
    if not isinstance(store_raw, str) or not store_raw:
        raise ConfigError("store_path must be a non-empty path string")
    store_path = (base / store_raw).resolve() if not Path(store_raw).is_absolute() else Path(store_raw)
    if not store_path.parent.is_dir():
        raise ConfigError(f"store_path: parent directory does not exist: {store_path.parent}")

    gate_node = _require_mapping(mapping.get("gate") or {}, "gate")
    _reject_unknown(gate_node, _GATE_KEYS, "gate")
    gate = GateConfig(
        threshold=float(gate_node.get("threshold", DEFAULT_THRESHOLD)),
        min_tokens=int(gate_node.get("min_tokens", DEFAULT_MIN_TOKENS)),
    )
    if not 0.0 <= gate.threshold <= 1.0:
        raise ConfigError("gate.threshold must be within [0, 1]")

    endpoint_node = _require_mapping(mapping["endpoint"], "endpoint")
    _reject_unknown(endpoint_node, _ENDPOINT_KEYS, "endpoint")
    for required in ("base_url", "model_id"):
        if not endpoint_node.get(required):
            raise ConfigError(f"endpoint.{required} is required")
    endpoint = EndpointConfig(
        base_url=endpoint_node["base_url"],
        model_id=endpoint_node["model_id"],
        api_key_env=endpoint_node.get("api_key_env"),
        timeout=float(endpoint_node.get("timeout", 60.0)),
        max_output_tokens=int(endpoint_node.get("max_output_tokens", 1024)),
        temperature=float(endpoint_node.get("temperature", 0.0)),
        retry_backoff=float(endpoint_node.get("retry_backoff", 0.5)),
    )
    if endpoint.timeout <= 0:
        raise ConfigError("endpoint.timeout must be > 0")

    repair_node = _require_mapping(mapping.get("repair") or {}, "repair")
    _reject_unknown(repair_node, _REPAIR_KEYS, "repair")
    try:
        repair = RepairPolicy(
            max_attempts=int(repair_node.get("max_attempts", 3)),
            include_violations_in_reprompt=bool(
                repair_node.get("include_violations_in_reprompt", True)
            ),
        )
    except ValueError as exc:
        raise ConfigError(f"repair: {exc}") from exc

    repo_node = _require_mapping(mapping["repository"], "repository")
    _reject_unknown(repo_node, _REPOSITORY_KEYS, "repository")
    if not repo_node.get("base_url"):
        raise ConfigError("repository.base_url is required")
    cache_raw = repo_node.get("property_cache_path")
    cache_path = None
    if cache_raw:
        cache_path = str((base / cache_raw).resolve()) if not Path(cache_raw).is_absolute() else cache_raw
    repository = RepositoryConfig(
        base_url=repo_node["base_url"],
        key_identity_env=repo_node.get("key_identity_env"),
        key_credential_env=repo_node.get("key_credential_env"),
        property_cache_path=cache_path,
        timeout=float(repo_node.get("timeout", 60.0)),
    )

    workers = int(mapping.get("workers", 2))
    batch_size = int(mapping.get("batch_size", 8))
    max_attempts = int(mapping.get("max_attempts", 3))
    lease_seconds = float(mapping.get("lease_seconds", DEFAULT_LEASE_SECONDS))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if max_attempts < 1:
        raise ConfigError("max_attempts must be >= 1")

    return PipelineConfig(
        store_path=store_path,
        model_directory=_existing_dir(base, mapping["model_directory"], "model_directory"),
        dictionary_directory=_existing_dir(base, mapping["dictionary_directory"], "dictionary_directory"),
        endpoint=endpoint,
        repository=repository,
        gate=gate,
        repair=repair,
        workers=workers,
        batch_size=batch_size,
        max_attempts=max_attempts,
        lease_seconds=lease_seconds,
        sources=_load_sources(mapping.get("sources"), base),
    )
