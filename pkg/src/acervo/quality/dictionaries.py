"""Language dictionary files.

Layout: ``<dir>/<lang>.txt``, one word per line, UTF-8, ``#`` starts a
comment line. Words are casefolded on load.
"""

from __future__ import annotations

from pathlib import Path

from ..errors import DictionaryError, EmptyDictionary


def load_dictionary_file(path: str | Path) -> frozenset[str]:
    path = Path(path)
    words: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            entry = line.strip()
            if not entry or entry.startswith("#"):
                continue
            if any(c.isspace() for c in entry):
                raise DictionaryError(
                    f"{path.name}:{lineno}: dictionary entry contains whitespace: {entry!r}"
                )
            words.add(entry.casefold())
    if not words:
        raise EmptyDictionary(f"{path.name}: wordlist is empty")
    return frozenset(words)


def load_dictionaries(directory: str | Path) -> dict[str, frozenset[str]]:
    """Load every ``*.txt`` wordlist in ``directory``, keyed by language code."""
    directory = Path(directory)
    files = sorted(directory.glob("*.txt"))
    if not files:
        raise EmptyDictionary(f"no *.txt dictionaries found in {directory}")
    return {path.stem: load_dictionary_file(path) for path in files}
