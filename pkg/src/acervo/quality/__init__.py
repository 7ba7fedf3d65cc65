"""OCR quality gate: dictionary hit densities over extracted text.

Every word of every language dictionary goes into one multi-pattern
automaton; scoring a text is a single pass that counts, per language,
how many tokens are dictionary words. The density of the best language
decides whether the text is good enough to send to inference.

The scan kernel is compiled (Cython) when available and falls back to a
pure-Python implementation with identical behavior. Set
``ACERVO_PURE_PYTHON=1`` before import to force the fallback; the
selected engine is reported in ``KERNEL_IMPL``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from typing import Any, Mapping

from ..errors import DictionaryError, EmptyDictionary
from .dictionaries import load_dictionaries, load_dictionary_file

if os.environ.get("ACERVO_PURE_PYTHON"):
    from ._kernel_py import Kernel as _Kernel

    KERNEL_IMPL = "python"
else:
    try:
        from ._kernel import Kernel as _Kernel  # type: ignore[no-redef]

        KERNEL_IMPL = "cython"
    except ImportError:
        from ._kernel_py import Kernel as _Kernel  # type: ignore[no-redef]

        KERNEL_IMPL = "python"

DEFAULT_THRESHOLD = 0.35
DEFAULT_MIN_TOKENS = 20

VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"
VERDICT_NO_TEXT = "no_text"


@dataclass(frozen=True)
class LanguageScore:
    matched: int
    density: float


@dataclass(frozen=True)
class QualityReport:
    token_count: int
    per_language: Mapping[str, LanguageScore]
    best_language: str | None
    best_density: float
    verdict: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "token_count": self.token_count,
            "per_language": {
                lang: {"matched": s.matched, "density": s.density}
                for lang, s in self.per_language.items()
            },
            "best_language": self.best_language,
            "best_density": self.best_density,
            "verdict": self.verdict,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QualityReport":
        return cls(
            token_count=data["token_count"],
            per_language={
                lang: LanguageScore(s["matched"], s["density"])
                for lang, s in data["per_language"].items()
            },
            best_language=data.get("best_language"),
            best_density=data["best_density"],
            verdict=data["verdict"],
        )


class Matcher:
    """Immutable automaton over all words of all languages.

    ``pattern_count`` is the number of distinct pattern strings compiled;
    a word shared by several languages is one pattern tagged with every
    owning language. Entries containing non-letter characters can never
    equal a token and are left out of the automaton (they stay in the
    caller's dictionary sets, where a token lookup also never hits them).
    """

    def __init__(self, dictionaries: Mapping[str, frozenset[str] | set[str]], kernel_cls=None):
        if not dictionaries:
            raise EmptyDictionary("no language dictionaries given")
        self.languages: tuple[str, ...] = tuple(sorted(dictionaries))
        owners_by_pattern: dict[str, list[int]] = {}
        for index, lang in enumerate(self.languages):
            words = dictionaries[lang]
            if not words:
                raise EmptyDictionary(f"wordlist for {lang!r} is empty")
            for w in sorted(words):
                if any(c.isspace() for c in w):
                    raise DictionaryError(f"{lang}: entry contains whitespace: {w!r}")
                folded = w.casefold()
                if not folded.isalpha():
                    continue
                owners_by_pattern.setdefault(folded, []).append(index)
        patterns = list(owners_by_pattern)
        owners = list(owners_by_pattern.values())
        self.pattern_count = len(patterns)
        kernel_cls = kernel_cls or _Kernel
        self._kernel = kernel_cls(patterns, owners, len(self.languages))

    def scan(self, text: str) -> tuple[int, list[int]]:
        return self._kernel.scan(text)


def build_matcher(dictionaries: Mapping[str, frozenset[str] | set[str]]) -> Matcher:
    return Matcher(dictionaries)


def _decide(token_count: int, best_density: float, threshold: float, min_tokens: int) -> str:
    if token_count == 0:
        return VERDICT_NO_TEXT
    if best_density >= threshold and token_count >= min_tokens:
        return VERDICT_PASS
    return VERDICT_FAIL


def gate(
    report: QualityReport,
    threshold: float = DEFAULT_THRESHOLD,
    min_tokens: int = DEFAULT_MIN_TOKENS,
) -> str:
    """Re-decide a report's verdict under the given gate settings."""
    return _decide(report.token_count, report.best_density, threshold, min_tokens)


def regate(
    report: QualityReport,
    threshold: float = DEFAULT_THRESHOLD,
    min_tokens: int = DEFAULT_MIN_TOKENS,
) -> QualityReport:
    return replace(report, verdict=gate(report, threshold, min_tokens))


def score_text(
    matcher: Matcher,
    text: str,
    threshold: float = DEFAULT_THRESHOLD,
    min_tokens: int = DEFAULT_MIN_TOKENS,
) -> QualityReport:
    """Score a text against every language in one pass.

    The text is casefolded first; a token is a maximal run of Unicode
    letters; a dictionary word counts only when it equals a whole token.
    """
    folded = text.casefold()
    token_count, counts = matcher.scan(folded)
    per_language: dict[str, LanguageScore] = {}
    best_language: str | None = None
    best_density = 0.0
    for index, lang in enumerate(matcher.languages):
        matched = counts[index]
        density = matched / token_count if token_count else 0.0
        per_language[lang] = LanguageScore(matched, density)
        if token_count and (best_language is None or density > best_density):
            best_language = lang
            best_density = density
    return QualityReport(
        token_count=token_count,
        per_language=per_language,
        best_language=best_language,
        best_density=best_density,
        verdict=_decide(token_count, best_density, threshold, min_tokens),
    )


__all__ = [
    "DEFAULT_MIN_TOKENS",
    "DEFAULT_THRESHOLD",
    "KERNEL_IMPL",
    "LanguageScore",
    "Matcher",
    "QualityReport",
    "VERDICT_FAIL",
    "VERDICT_NO_TEXT",
    "VERDICT_PASS",
    "build_matcher",
    "gate",
    "load_dictionaries",
    "load_dictionary_file",
    "regate",
    "score_text",
]
