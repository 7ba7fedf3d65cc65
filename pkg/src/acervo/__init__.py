"""acervo: schema-constrained metadata enrichment for digitized archives.

A resumable pipeline that registers digitized documents by content hash,
gates their OCR text against language dictionaries, asks an LLM for
metadata that must survive strict model-driven validation, and publishes
items plus hierarchical collections to a repository REST API.
"""

from .config import PipelineConfig, load_config
from .ingest import hash_file, load_manifest, register, scan_directory
from .llm import EndpointConfig, RepairPolicy, build_prompt, complete, enrich, extract_json
from .ontology import (
    DescriptionModel,
    FieldSpec,
    dump_description_model,
    load_description_model,
    load_model_directory,
    resolve_term,
)
from .pipeline import RunMetrics, run_pipeline, run_stage
from .quality import QualityReport, build_matcher, gate, load_dictionaries, score_text
from .repository import RepositoryClient, RepositoryConfig, build_payload
from .store import DocumentRecord, PipelineState, Store, open_store
from .validation import (
    CompiledValidator,
    MetadataRecord,
    ValidationReport,
    coerce_value,
    compile_validator,
    schema_prompt_fragment,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "CompiledValidator",
    "DescriptionModel",
    "DocumentRecord",
    "EndpointConfig",
    "FieldSpec",
    "MetadataRecord",
    "PipelineConfig",
    "PipelineState",
    "QualityReport",
    "RepairPolicy",
    "RepositoryClient",
    "RepositoryConfig",
    "RunMetrics",
    "Store",
    "ValidationReport",
    "build_matcher",
    "build_payload",
    "build_prompt",
    "coerce_value",
    "compile_validator",
    "complete",
    "dump_description_model",
    "enrich",
    "extract_json",
    "gate",
    "hash_file",
    "load_config",
    "load_description_model",
    "load_dictionaries",
    "load_manifest",
    "load_model_directory",
    "open_store",
    "register",
    "resolve_term",
    "run_pipeline",
    "run_stage",
    "scan_directory",
    "score_text",
    "validate",
]
