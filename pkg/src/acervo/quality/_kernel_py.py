"""Pure-Python scan kernel, used when the compiled one is unavailable."""

from __future__ import annotations

from typing import Sequence

from ._automaton import build_automaton


class Kernel:
    """Counts whole-token dictionary hits per language in one text pass.

    The automaton walks the raw character stream; a hit is recorded only
    when, at the end of a token (maximal run of Unicode letters), the
    automaton sits on a terminal node whose depth equals the token
    length. That condition holds exactly when the token as a whole is a
    pattern, so suffix matches inside longer tokens ("de" in "desde")
    never count. Patterns containing non-letter characters can never
    satisfy it and are dropped by the caller.
    """

    def __init__(self, patterns: Sequence[str], owners: Sequence[Sequence[int]], n_langs: int):
        self._goto, self._fail, self._depth, self._word = build_automaton(patterns)
        self._owners = [tuple(o) for o in owners]
        self._n_langs = n_langs

    def scan(self, text: str) -> tuple[int, list[int]]:
        """Return ``(token_count, per-language matched token counts)``."""
        goto = self._goto
        fail = self._fail
        depth = self._depth
        word = self._word
        owners = self._owners
        isalpha = str.isalpha
        counts = [0] * self._n_langs
        tokens = 0
        state = 0
        tlen = 0

        for ch in text:
            if isalpha(ch):
                if tlen == 0:
                    tokens += 1
                tlen += 1
                s = state
                while True:
                    nxt = goto[s].get(ch)
                    if nxt is not None:
                        state = nxt
                        break
                    if s == 0:
                        state = 0
                        break
                    s = fail[s]
            elif tlen:
                w = word[state]
                if w >= 0 and depth[state] == tlen:
                    for lang in owners[w]:
                        counts[lang] += 1
                tlen = 0
                state = 0

        if tlen:
            w = word[state]
            if w >= 0 and depth[state] == tlen:
                for lang in owners[w]:
                    counts[lang] += 1

        return tokens, counts
