"""Exception types shared across the pipeline."""

from __future__ import annotations


class PipelineError(Exception):
    """Base class for every error this package raises deliberately."""


class ConfigError(PipelineError):
    pass


# --- description models ---------------------------------------------------

class ParseError(PipelineError):
    """Input is not syntactically valid YAML."""


class SchemaError(PipelineError):
    """Structurally valid YAML that violates the model grammar.

    ``path`` points at the offending node, e.g. ``fields[2].vocabulary``.
    """

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class UnknownPrefix(SchemaError):
    pass


class DuplicateModelName(PipelineError):
    pass


# --- ingestion ------------------------------------------------------------

class ManifestError(PipelineError):
    def __init__(self, message: str, row: int):
        super().__init__(f"row {row}: {message}")
        self.row = row


# --- state store ----------------------------------------------------------

class StoreError(PipelineError):
    pass


class NotFound(StoreError):
    pass


class StaleState(StoreError):
    """Compare-and-set lost: the record is no longer in the expected state."""


class IllegalEdge(StoreError):
    """The requested transition is not an edge of the lifecycle graph."""


# --- quality gate ---------------------------------------------------------

class EmptyDictionary(PipelineError):
    pass


class DictionaryError(PipelineError):
    pass


# --- LLM gateway ----------------------------------------------------------

class TransportError(PipelineError):
    pass


class AuthError(PipelineError):
    pass


class RateLimited(PipelineError):
    def __init__(self, message: str, retry_after: float):
        super().__init__(message)
        self.retry_after = retry_after


class NoJsonFound(PipelineError):
    pass


class EnrichmentExhausted(PipelineError):
    """Every repair attempt failed validation; carries the last report."""

    def __init__(self, message: str, report, attempts: int):
        super().__init__(message)
        self.report = report
        self.attempts = attempts


# --- repository export ----------------------------------------------------

class UnknownTerm(PipelineError):
    pass


class MediaUploadError(PipelineError):
    """Item creation succeeded but a media upload failed.

    ``item_id`` is always set so the caller can retry media separately.
    """

    def __init__(self, message: str, item_id):
        super().__init__(message)
        self.item_id = item_id
