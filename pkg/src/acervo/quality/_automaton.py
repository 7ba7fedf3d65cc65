"""Goto/failure automaton construction shared by both scan kernels.

Classic Aho-Corasick construction: insert every pattern into a trie,
then compute failure links breadth-first so the scan never backtracks.
Patterns are expected to be unique; the caller merges duplicates and
keeps the per-pattern tags.
"""

from __future__ import annotations

from collections import deque
from typing import Sequence


def build_automaton(
    patterns: Sequence[str],
) -> tuple[list[dict[str, int]], list[int], list[int], list[int]]:
    """Return ``(goto, fail, depth, word)``.

    ``goto[s]`` maps a character to the next state, ``fail[s]`` is the
    longest proper suffix of the path to ``s`` that is also a path from
    the root, ``depth[s]`` the path length, and ``word[s]`` the pattern
    id terminating at ``s`` (-1 when none). Construction is linear in
    the total pattern length.
    """
    goto: list[dict[str, int]] = [{}]
    depth: list[int] = [0]
    word: list[int] = [-1]

    for pid, pattern in enumerate(patterns):
        node = 0
        for ch in pattern:
            nxt = goto[node].get(ch)
            if nxt is None:
                nxt = len(goto)
                goto[node][ch] = nxt
                goto.append({})
                depth.append(depth[node] + 1)
                word.append(-1)
            node = nxt
        word[node] = pid

    fail = [0] * len(goto)
    queue: deque[int] = deque(goto[0].values())
    while queue:
        state = queue.popleft()
        for ch, child in goto[state].items():
            queue.append(child)
            f = fail[state]
            while f and ch not in goto[f]:
                f = fail[f]
            nxt = goto[f].get(ch, 0)
            fail[child] = nxt if nxt != child else 0

    return goto, fail, depth, word
