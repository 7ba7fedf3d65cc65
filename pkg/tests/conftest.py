"""Shared fixtures: description models, dictionaries, corpora, servers."""

from __future__ import annotations

import json
import random
from pathlib import Path

import pytest

from acervo.config import load_config
from acervo.ontology import load_description_model
from acervo.store import Store
from acervo.validation import compile_validator

from mock_http import MockLLMServer, MockRepositoryServer

NEWSPAPER_MODEL_YAML = """\
name: newspaper_edition
document_type: newspaper_edition
version: "1"
fields:
  - key: dcterms:title
    label: Title
    datatype: text
    required: true
    max_length: 300
  - key: dcterms:creator
    label: Publisher
    datatype: text
    required: true
  - key: dcterms:date
    label: Edition date
    datatype: date
    required: true
  - key: dcterms:language
    label: Language
    datatype: enum
    required: false
    vocabulary: [pt, es, en]
  - key: dcterms:subject
    label: Subjects
    datatype: list_of_text
    required: false
  - key: bibo:issue
    label: Issue number
    datatype: integer
    required: false
collection:
  title_template: "Edições de {dcterms:creator}"
  parent: "Hemeroteca"
"""

VALID_NEWSPAPER_JSON = json.dumps(
    {
        "dcterms:title": "Diário dos Campos, ed. 1",
        "dcterms:creator": "Diário dos Campos",
        "dcterms:date": "1913-05-02",
        "dcterms:language": "pt",
    },
    ensure_ascii=False,
)

PT_WORDS = (
    "o", "a", "de", "do", "da", "em", "no", "na", "por", "para", "com", "que",
    "não", "mais", "muito", "todo", "este", "essa", "seu", "sua", "ele", "ela",
    "ser", "estar", "ter", "fazer", "dizer", "ano", "dia", "tempo", "cidade",
    "governo", "jornal", "edição", "página", "notícia", "imprensa", "café",
    "senhor", "casa", "rua", "praça", "estrada", "ontem", "hoje", "sempre",
)
ES_WORDS = (
    "el", "la", "de", "del", "en", "por", "para", "con", "que", "no", "más",
    "mucho", "todo", "este", "esa", "su", "sus", "ser", "estar", "tener",
    "hacer", "decir", "año", "día", "tiempo", "ciudad", "gobierno",
    "periódico", "edición", "página", "noticia", "prensa", "señor", "casa",
    "calle", "plaza", "camino", "ayer", "hoy", "siempre",
)
EN_WORDS = (
    "the", "a", "of", "in", "on", "by", "for", "with", "that", "not", "more",
    "much", "all", "this", "his", "her", "be", "have", "do", "say", "year",
    "day", "time", "city", "government", "newspaper", "edition", "page",
    "news", "press", "mister", "house", "street", "square", "road",
    "yesterday", "today", "always",
)

GARBAGE_TOKENS = ("qqzx", "wkkj", "xvbq", "zzrq", "kJkq", "qgh", "vvx", "zqzq", "xxj", "pqzv")


def write_models(directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "newspaper_edition.yaml").write_text(NEWSPAPER_MODEL_YAML, encoding="utf-8")
    return directory


def write_dicts(directory: Path) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for lang, words in (("pt", PT_WORDS), ("es", ES_WORDS), ("en", EN_WORDS)):
        (directory / f"{lang}.txt").write_text("\n".join(words) + "\n", encoding="utf-8")
    return directory


def clean_text(index: int, rng: random.Random, n_tokens: int = 120) -> str:
    words = [rng.choice(PT_WORDS) for _ in range(n_tokens)]
    return f"Diário dos Campos edição {index}\n" + " ".join(words) + "\n"


def garbage_text(rng: random.Random, n_tokens: int = 60) -> str:
    return " ".join(rng.choice(GARBAGE_TOKENS) + str(rng.randint(0, 99)) for _ in range(n_tokens))


def build_corpus(
    directory: Path,
    n_clean: int = 5,
    n_garbage: int = 0,
    n_notext: int = 0,
    n_badtext: int = 0,
    seed: int = 7,
) -> dict[str, list[Path]]:
    """Fake scanned newspapers: a .pdf byte blob plus a .pdf.txt sidecar.

    ``garbage`` docs carry a sidecar of OCR noise (gate fails), ``notext``
    docs have no sidecar at all, ``badtext`` docs have an undecodable
    sidecar (reading it raises, so the record exhausts its attempts).
    """
    rng = random.Random(seed)
    directory.mkdir(parents=True, exist_ok=True)
    out: dict[str, list[Path]] = {"clean": [], "garbage": [], "notext": [], "badtext": []}
    index = 0
    for _ in range(n_clean):
        pdf = directory / f"doc_{index:03d}.pdf"
        pdf.write_bytes(b"%PDF-1.4 fake scan " + str(index).encode())
        (directory / f"doc_{index:03d}.pdf.txt").write_text(
            clean_text(index, rng), encoding="utf-8"
        )
        out["clean"].append(pdf)
        index += 1
    for _ in range(n_garbage):
        pdf = directory / f"doc_{index:03d}.pdf"
        pdf.write_bytes(b"%PDF-1.4 fake scan " + str(index).encode())
        (directory / f"doc_{index:03d}.pdf.txt").write_text(garbage_text(rng), encoding="utf-8")
        out["garbage"].append(pdf)
        index += 1
    for _ in range(n_notext):
        pdf = directory / f"doc_{index:03d}.pdf"
        pdf.write_bytes(b"%PDF-1.4 fake scan, no sidecar " + str(index).encode())
        out["notext"].append(pdf)
        index += 1
    for _ in range(n_badtext):
        pdf = directory / f"doc_{index:03d}.pdf"
        pdf.write_bytes(b"%PDF-1.4 fake scan " + str(index).encode())
        (directory / f"doc_{index:03d}.pdf.txt").write_bytes(b"\xff\xfe\xfa broken bytes")
        out["badtext"].append(pdf)
        index += 1
    return out


def write_config_yaml(
    root: Path,
    llm_base_url: str,
    repo_base_url: str,
    *,
    sources: str = "",
    workers: int = 2,
    batch_size: int = 4,
    max_attempts: int = 3,
    endpoint_extra: str = "",
) -> Path:
    write_models(root / "models")
    write_dicts(root / "dicts")
    config = f"""\
store_path: state.db
model_directory: models
dictionary_directory: dicts
gate:
  threshold: 0.35
  min_tokens: 20
endpoint:
  base_url: {llm_base_url}
  model_id: mock-model
  timeout: 10
  retry_backoff: 0.01
{endpoint_extra}
repair:
  max_attempts: 3
repository:
  base_url: {repo_base_url}
  property_cache_path: property_cache.json
workers: {workers}
batch_size: {batch_size}
max_attempts: {max_attempts}
{sources}
"""
    path = root / "config.yaml"
    path.write_text(config, encoding="utf-8")
    return path


@pytest.fixture
def newspaper_model():
    return load_description_model(NEWSPAPER_MODEL_YAML)


@pytest.fixture
def newspaper_validator(newspaper_model):
    return compile_validator(newspaper_model)


@pytest.fixture
def store(tmp_path):
    return Store(tmp_path / "state.db")


@pytest.fixture
def llm_server():
    with MockLLMServer() as server:
        yield server


@pytest.fixture
def valid_llm_server():
    responder = lambda body: (VALID_NEWSPAPER_JSON, {"prompt_tokens": 100, "completion_tokens": 40})
    with MockLLMServer(responder=responder) as server:
        yield server


@pytest.fixture
def repo_server():
    with MockRepositoryServer() as server:
        yield server


@pytest.fixture
def pipeline_config(tmp_path, valid_llm_server, repo_server):
    """Full config wired to the mock servers, with a 5-doc corpus source."""
    build_corpus(tmp_path / "corpus", n_clean=5)
    config_path = write_config_yaml(
        tmp_path,
        valid_llm_server.base_url,
        repo_server.base_url,
        sources="sources:\n  - type: directory\n    path: corpus\n    model: newspaper_edition\n",
    )
    return load_config(config_path)
