"""Stage orchestration: claim batches, process with a worker pool, transition.

Stage mapping over the lifecycle graph:

    ingest   register candidates            -> NEW
    include  locate/attach extracted text   NEW -> INCLUDED
    gate     score + threshold              INCLUDED -> EMBEDDED | QUALITY_REJECTED
    infer    LLM enrichment + validation    EMBEDDED -> INFERRED
    upload   repository export              INFERRED -> UPLOADED

Per-document errors are charged to the record via record_failure and
never abort a stage; a record whose attempts run out lands in FAILED.
Each stage loops until nothing in its input state is claimable, so a
failed record is retried within the same invocation until it either
succeeds or exhausts its attempts.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .config import PipelineConfig, SourceConfig
from .errors import PipelineError
from .ingest import find_sidecar, load_manifest, register, scan_directory
from .llm import enrich
from .ontology import load_model_directory
from .quality import build_matcher, load_dictionaries, score_text
from .repository import RepositoryClient
from .store import DocumentRecord, PipelineState, Store
from .validation import compile_validator

STAGES = ("ingest", "include", "gate", "infer", "upload")

logger = logging.getLogger("acervo")


@dataclass
class RunMetrics:
    processed: dict[str, int] = field(default_factory=dict)
    failures: dict[str, int] = field(default_factory=dict)
    prompt_tokens: int = 0
    completion_tokens: int = 0
    duration_s: float = 0.0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    @property
    def tokens_per_hour(self) -> float:
        if self.duration_s <= 0:
            return 0.0
        return self.total_tokens / (self.duration_s / 3600.0)

    def to_dict(self) -> dict:
        return {
            "processed": dict(self.processed),
            "failures": dict(self.failures),
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "total_tokens": self.total_tokens,
            "duration_s": self.duration_s,
            "tokens_per_hour": self.tokens_per_hour,
        }

    def absorb(self, other: "RunMetrics") -> None:
        for stage, n in other.processed.items():
            self.processed[stage] = self.processed.get(stage, 0) + n
        for stage, n in other.failures.items():
            self.failures[stage] = self.failures.get(stage, 0) + n
        self.prompt_tokens += other.prompt_tokens
        self.completion_tokens += other.completion_tokens


def _log_event(stage: str, **fields) -> None:
    logger.info(json.dumps({"stage": stage, **fields}, ensure_ascii=False))


def _read_text(text_ref: str | None) -> str:
    """Extracted text for a record; no reference or a vanished file is ''. """
    if not text_ref:
        return ""
    path = Path(text_ref)
    if not path.is_file():
        return ""
    return path.read_text(encoding="utf-8")


# -- ingest -----------------------------------------------------------------


def _iter_candidates(source: SourceConfig):
    if source.type == "directory":
        extensions = source.extensions
        if extensions:
            return scan_directory(source.path, extensions, model=source.model or "")
        return scan_directory(source.path, model=source.model or "")
    return load_manifest(
        source.path,
        path_column=source.path_column,
        model_column=source.model_column,
        sidecar_column=source.sidecar_column,
    )


def run_ingest(config: PipelineConfig, store: Store, sources=None) -> RunMetrics:
    metrics = RunMetrics(processed={"ingest": 0}, failures={"ingest": 0})
    started = time.perf_counter()
    for source in sources if sources is not None else config.sources:
        for candidate in _iter_candidates(source):
            try:
                outcome = register(candidate, store)
            except OSError as exc:
                metrics.failures["ingest"] += 1
                _log_event("ingest", path=str(candidate.source_path), outcome="error", error=str(exc))
                continue
            if outcome.created:
                metrics.processed["ingest"] += 1
            _log_event(
                "ingest",
                hash=outcome.record.hash,
                outcome="created" if outcome.created else "duplicate",
                path=str(candidate.source_path),
            )
    metrics.duration_s = time.perf_counter() - started
    return metrics


# -- claim-driven stages ------------------------------------------------------


def _drain(
    config: PipelineConfig,
    store: Store,
    stage: str,
    input_state: PipelineState,
    handler: Callable[[DocumentRecord], tuple[int, int]],
) -> RunMetrics:
    """Claim/process/transition until the input state is empty.

    ``handler`` processes one record end to end (including its
    transition) and returns (prompt_tokens, completion_tokens).
    """
    metrics = RunMetrics(processed={stage: 0}, failures={stage: 0})
    started = time.perf_counter()
    worker_id = f"{stage}@{os.getpid()}"

    def process(record: DocumentRecord) -> tuple[str, int, int]:
        doc_started = time.perf_counter()
        try:
            prompt_tokens, completion_tokens = handler(record)
        except (PipelineError, OSError, ValueError, KeyError) as exc:
            error = f"{type(exc).__name__}: {exc}"
            store.record_failure(record.hash, error, config.max_attempts, worker=worker_id)
            _log_event(stage, hash=record.hash, outcome="error", error=error)
            return "error", 0, 0
        _log_event(
            stage,
            hash=record.hash,
            outcome="ok",
            duration_ms=round((time.perf_counter() - doc_started) * 1000, 3),
            tokens=prompt_tokens + completion_tokens,
        )
        return "ok", prompt_tokens, completion_tokens

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        while True:
            batch = store.claim_batch(
                input_state, config.batch_size, worker_id, config.lease_seconds
            )
            if not batch:
                break
            futures = [pool.submit(process, record) for record in batch]
            for future in as_completed(futures):
                outcome, prompt_tokens, completion_tokens = future.result()
                if outcome == "ok":
                    metrics.processed[stage] += 1
                else:
                    metrics.failures[stage] += 1
                metrics.prompt_tokens += prompt_tokens
                metrics.completion_tokens += completion_tokens

    metrics.duration_s = time.perf_counter() - started
    return metrics


def run_include(config: PipelineConfig, store: Store) -> RunMetrics:
    worker_id = f"include@{os.getpid()}"

    def handler(record: DocumentRecord) -> tuple[int, int]:
        text_ref = record.text_ref
        if not text_ref:
            probed = find_sidecar(Path(record.source_path))
            text_ref = str(probed) if probed else None
        store.transition(
            record.hash,
            PipelineState.NEW,
            PipelineState.INCLUDED,
            worker=worker_id,
            text_ref=text_ref,
            note="text attached" if text_ref else "no text payload",
        )
        return 0, 0

    return _drain(config, store, "include", PipelineState.NEW, handler)


def run_gate(config: PipelineConfig, store: Store) -> RunMetrics:
    matcher = build_matcher(load_dictionaries(config.dictionary_directory))
    worker_id = f"gate@{os.getpid()}"

    def handler(record: DocumentRecord) -> tuple[int, int]:
        text = _read_text(record.text_ref)
        report = score_text(
            matcher, text, threshold=config.gate.threshold, min_tokens=config.gate.min_tokens
        )
        if report.verdict == "pass":
            to_state = PipelineState.EMBEDDED
        else:
            to_state = PipelineState.QUALITY_REJECTED
        store.transition(
            record.hash,
            PipelineState.INCLUDED,
            to_state,
            worker=worker_id,
            quality=report,
            note=f"verdict={report.verdict} best={report.best_language} density={report.best_density:.3f}",
        )
        return 0, 0

    return _drain(config, store, "gate", PipelineState.INCLUDED, handler)


def run_infer(config: PipelineConfig, store: Store) -> RunMetrics:
    models = load_model_directory(config.model_directory)
    validators = {name: compile_validator(model) for name, model in models.items()}
    worker_id = f"infer@{os.getpid()}"

    def handler(record: DocumentRecord) -> tuple[int, int]:
        model = models.get(record.model_name)
        if model is None:
            raise KeyError(f"no description model named {record.model_name!r}")
        text = _read_text(record.text_ref)
        result = enrich(
            text,
            model,
            validators[record.model_name],
            config.endpoint,
            config.repair,
            hints=record.hints or None,
        )
        store.transition(
            record.hash,
            PipelineState.EMBEDDED,
            PipelineState.INFERRED,
            worker=worker_id,
            metadata=result.record,
            note=f"attempts={result.attempts}",
        )
        return result.prompt_tokens, result.completion_tokens

    return _drain(config, store, "infer", PipelineState.EMBEDDED, handler)


def run_upload(config: PipelineConfig, store: Store, client: RepositoryClient | None = None) -> RunMetrics:
    client = client or RepositoryClient(config.repository)
    models = load_model_directory(config.model_directory)
    worker_id = f"upload@{os.getpid()}"

    def handler(record: DocumentRecord) -> tuple[int, int]:
        model = models.get(record.model_name)
        if model is None:
            raise KeyError(f"no description model named {record.model_name!r}")
        if record.metadata is None:
            raise ValueError("record reached upload without metadata")
        item_set_ids: list[int] = []
        rule = model.collection_rule
        if rule is not None:
            title = rule.render(record.metadata.values)
            item_set_ids.append(client.ensure_collection(title, rule.parent_collection))
        item_id = client.export_item(
            record.metadata,
            model,
            record.hash,
            media_paths=[record.source_path],
            item_set_ids=item_set_ids,
        )
        store.transition(
            record.hash,
            PipelineState.INFERRED,
            PipelineState.UPLOADED,
            worker=worker_id,
            repository_item_id=str(item_id),
        )
        return 0, 0

    return _drain(config, store, "upload", PipelineState.INFERRED, handler)


# -- entry points -------------------------------------------------------------


def run_stage(
    config: PipelineConfig,
    stage: str,
    store: Store | None = None,
    sources=None,
) -> RunMetrics:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    store = store or Store(config.store_path)
    if stage == "ingest":
        metrics = run_ingest(config, store, sources=sources)
    elif stage == "include":
        metrics = run_include(config, store)
    elif stage == "gate":
        metrics = run_gate(config, store)
    elif stage == "infer":
        metrics = run_infer(config, store)
    else:
        metrics = run_upload(config, store)
    store.set_meta("last_run", metrics.to_dict())
    return metrics


def run_pipeline(config: PipelineConfig, store: Store | None = None) -> RunMetrics:
    """All five stages in order; one document's failure never blocks others."""
    store = store or Store(config.store_path)
    total = RunMetrics()
    started = time.perf_counter()
    for stage in STAGES:
        if stage == "ingest":
            total.absorb(run_ingest(config, store))
        elif stage == "include":
            total.absorb(run_include(config, store))
        elif stage == "gate":
            total.absorb(run_gate(config, store))
        elif stage == "infer":
            total.absorb(run_infer(config, store))
        else:
            total.absorb(run_upload(config, store))
    total.duration_s = time.perf_counter() - started
    store.set_meta("last_run", total.to_dict())
    return total
