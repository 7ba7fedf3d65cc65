"""Chat-completions gateway with schema-constrained repair loop.

Prompts are built from the description model; the endpoint is any
OpenAI-compatible ``/chat/completions`` server, local or remote. The
response must survive local validation: native JSON modes are never
relied on, so the guarantee holds for every endpoint. When validation
fails, the model gets its own output back together with the violation
list and a bounded number of chances to correct it.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, Mapping

import requests

from .errors import AuthError, EnrichmentExhausted, NoJsonFound, RateLimited, TransportError
from .ontology import DescriptionModel
from .validation import (
    CompiledValidator,
    MetadataRecord,
    ValidationReport,
    Violation,
    schema_prompt_fragment,
)

#: Document text budget per prompt: head + tail with an elision marker.
TEXT_CAP = 12_000
_HEAD = 9_000
_TAIL = 3_000
ELISION_MARKER = "\n[...]\n"

_TRANSPORT_TRIES = 3

_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_-]+)?\s*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_id: str
    api_key_env: str | None = None
    timeout: float = 60.0
    max_output_tokens: int = 1024
    temperature: float = 0.0
    retry_backoff: float = 0.5

    def api_key(self) -> str | None:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


@dataclass(frozen=True)
class RepairPolicy:
    max_attempts: int = 3
    include_violations_in_reprompt: bool = True

    def __post_init__(self):
        if not 1 <= self.max_attempts <= 10:
            raise ValueError("max_attempts must be between 1 and 10")


@dataclass
class ChatExchange:
    messages: list[dict[str, str]]
    response_text: str
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class EnrichmentResult:
    record: MetadataRecord
    attempts: int
    prompt_tokens: int
    completion_tokens: int


# Endpoints that answered 429 are backed off globally, not per worker.
_rate_gate: dict[str, float] = {}
_rate_gate_lock = threading.Lock()


def _cap_text(text: str) -> str:
    if len(text) <= TEXT_CAP:
        return text
    return text[:_HEAD] + ELISION_MARKER + text[-_TAIL:]


def build_prompt(
    model: DescriptionModel,
    text: str,
    hints: Mapping[str, str] | None = None,
) -> list[dict[str, str]]:
    """Deterministic system + user message pair for the first attempt."""
    system = (
        "You extract archival metadata from digitized documents of type "
        f"'{model.document_type}'.\n"
        "Reply with exactly one JSON object and nothing else: no prose, no "
        "code fences, no explanations.\n"
        "The object must contain only the fields described here, with "
        "required fields always present:\n"
        f"{schema_prompt_fragment(model)}\n"
        "Dates must be ISO 8601 (YYYY-MM-DD). Omit optional fields the text "
        "does not support; never invent values."
    )
    parts = []
    if hints:
        lines = "\n".join(f"- {key}: {value}" for key, value in hints.items())
        parts.append(f"Known facts about this document:\n{lines}")
    parts.append(f"Document text:\n{_cap_text(text)}")
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": "\n\n".join(parts)},
    ]


def _estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4) if text else 0


def _wait_for_rate_gate(base_url: str) -> None:
    with _rate_gate_lock:
        until = _rate_gate.get(base_url, 0.0)
    delay = until - time.time()
    if delay > 0:
        time.sleep(min(delay, 30.0))


def complete(endpoint: EndpointConfig, messages: list[dict[str, str]]) -> ChatExchange:
    """One chat-completions call with bounded retries on transport faults.

    Timeouts, connection errors, and 5xx responses are retried with
    exponential backoff up to three requests total. 401/403 raise
    AuthError immediately; 429 raises RateLimited and arms a shared
    backoff for the endpoint.
    """
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    key = endpoint.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {
        "model": endpoint.model_id,
        "messages": messages,
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_output_tokens,
    }

    last_fault = "unknown transport fault"
    for attempt in range(_TRANSPORT_TRIES):
        _wait_for_rate_gate(endpoint.base_url)
        try:
            response = requests.post(url, json=body, headers=headers, timeout=endpoint.timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_fault = f"{type(exc).__name__}: {exc}"
        else:
            if response.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({response.status_code})")
            if response.status_code == 429:
                retry_after = float(response.headers.get("Retry-After", "1"))
                with _rate_gate_lock:
                    _rate_gate[endpoint.base_url] = time.time() + retry_after
                raise RateLimited("endpoint rate limited the request", retry_after=retry_after)
            if response.status_code >= 500:
                last_fault = f"server error {response.status_code}"
            elif response.status_code != 200:
                raise TransportError(f"unexpected status {response.status_code}: {response.text[:200]}")
            else:
                return _parse_completion(response, messages)
        if attempt < _TRANSPORT_TRIES - 1:
            time.sleep(endpoint.retry_backoff * (2**attempt))
    raise TransportError(f"gave up after {_TRANSPORT_TRIES} tries: {last_fault}")


def _parse_completion(response: requests.Response, messages: list[dict[str, str]]) -> ChatExchange:
    try:
        payload = response.json()
        text = payload["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion payload: {exc}") from exc
    usage = payload.get("usage") or {}
    prompt_tokens = usage.get("prompt_tokens")
    completion_tokens = usage.get("completion_tokens")
    if prompt_tokens is None:
        prompt_tokens = sum(_estimate_tokens(m["content"]) for m in messages)
    if completion_tokens is None:
        completion_tokens = _estimate_tokens(text)
    return ChatExchange(
        messages=list(messages),
        response_text=text,
        prompt_tokens=int(prompt_tokens),
        completion_tokens=int(completion_tokens),
    )


def _balanced_object(text: str, start: int) -> str | None:
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def extract_json(response_text: str) -> Any:
    """Pull the first parseable JSON value out of an LLM reply.

    Tried in order: the whole string, each fenced code block, the
    substring from the first ``{`` to its matching brace.
    """
    stripped = response_text.strip()
    try:
        return json.loads(stripped)
    except ValueError:
        pass
    for block in _FENCE_RE.findall(stripped):
        try:
            return json.loads(block.strip())
        except ValueError:
            continue
    start = stripped.find("{")
    if start != -1:
        candidate = _balanced_object(stripped, start)
        if candidate is not None:
            try:
                return json.loads(candidate)
            except ValueError:
                pass
    raise NoJsonFound("no parseable JSON found in the response")


def _repair_message(report: ValidationReport, policy: RepairPolicy) -> dict[str, str]:
    lines = ["Your previous reply was rejected by schema validation."]
    if policy.include_violations_in_reprompt:
        lines.append("Violations:")
        lines.extend(f"- {v.field}: {v.kind}: {v.message}" for v in report.violations)
    lines.append(
        "Return a corrected reply: exactly one JSON object conforming to the schema, nothing else."
    )
    return {"role": "user", "content": "\n".join(lines)}


def enrich(
    text: str,
    model: DescriptionModel,
    validator: CompiledValidator,
    endpoint: EndpointConfig,
    policy: RepairPolicy | None = None,
    hints: Mapping[str, str] | None = None,
) -> EnrichmentResult:
    """Run the prompt/validate/repair loop until a record validates.

    Raises EnrichmentExhausted (carrying the last validation report)
    when every attempt fails; transport errors propagate as-is.
    """
    policy = policy or RepairPolicy()
    messages = build_prompt(model, text, hints)
    prompt_tokens = 0
    completion_tokens = 0
    last_report = ValidationReport()
    for attempt in range(1, policy.max_attempts + 1):
        exchange = complete(endpoint, messages)
        prompt_tokens += exchange.prompt_tokens
        completion_tokens += exchange.completion_tokens
        try:
            candidate = extract_json(exchange.response_text)
        except NoJsonFound as exc:
            record = None
            last_report = ValidationReport(
                (Violation("$root", "not_json_object", str(exc)),)
            )
        else:
            record, last_report = validator.validate(candidate)
        if record is not None:
            return EnrichmentResult(
                record=record,
                attempts=attempt,
                prompt_tokens=prompt_tokens,
                completion_tokens=completion_tokens,
            )
        if attempt < policy.max_attempts:
            messages = messages + [
                {"role": "assistant", "content": exchange.response_text},
                _repair_message(last_report, policy),
            ]
    raise EnrichmentExhausted(
        f"no valid record after {policy.max_attempts} attempts",
        report=last_report,
        attempts=policy.max_attempts,
    )
