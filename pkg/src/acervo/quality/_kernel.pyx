# cython: language_level=3
# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled scan kernel: whole-token multi-pattern matching.

Same contract and same automaton as ``_kernel_py.Kernel``; the scan loop
runs over flat C arrays. Edges are stored CSR-style sorted by codepoint
and resolved by binary search, with a dense first-level row for the root
(codepoints below 4096, which covers the Latin scripts dictionaries are
written in). Codepoints outside every pattern simply fail to the root.
"""

from cpython.unicode cimport Py_UNICODE_ISALPHA

from array import array as _array

from ._automaton import build_automaton

cdef unsigned int _FAST = 4096


cdef class Kernel:
    cdef int[::1] edge_start
    cdef unsigned int[::1] edge_char
    cdef int[::1] edge_to
    cdef int[::1] fail
    cdef int[::1] depth
    cdef int[::1] word
    cdef int[::1] owner_start
    cdef int[::1] owner_lang
    cdef int[::1] root_fast
    cdef int n_langs
    cdef readonly int node_count

    def __init__(self, patterns, owners, int n_langs):
        goto, fail, depth, word = build_automaton(patterns)
        n = len(goto)
        starts = [0] * (n + 1)
        chars = []
        targets = []
        for s in range(n):
            edges = sorted((ord(c), t) for c, t in goto[s].items())
            starts[s + 1] = starts[s] + len(edges)
            for code, t in edges:
                chars.append(code)
                targets.append(t)
        if not chars:  # keep buffers non-empty for the memoryviews
            chars = [0]
            targets = [-1]

        owner_starts = [0] * (len(owners) + 1)
        owner_langs = []
        for i, langs in enumerate(owners):
            owner_starts[i + 1] = owner_starts[i] + len(langs)
            owner_langs.extend(langs)
        if not owner_langs:
            owner_langs = [0]

        fast = [-1] * _FAST
        for c, t in goto[0].items():
            if ord(c) < _FAST:
                fast[ord(c)] = t

        self.edge_start = _array("i", starts)
        self.edge_char = _array("I", chars)
        self.edge_to = _array("i", targets)
        self.fail = _array("i", fail)
        self.depth = _array("i", depth)
        self.word = _array("i", word)
        self.owner_start = _array("i", owner_starts)
        self.owner_lang = _array("i", owner_langs)
        self.root_fast = _array("i", fast)
        self.n_langs = n_langs
        self.node_count = n

    cdef inline int _edge(self, int state, unsigned int c):
        cdef int lo, hi, mid
        if state == 0 and c < _FAST:
            return self.root_fast[c]
        lo = self.edge_start[state]
        hi = self.edge_start[state + 1]
        while lo < hi:
            mid = (lo + hi) >> 1
            if self.edge_char[mid] < c:
                lo = mid + 1
            elif self.edge_char[mid] > c:
                hi = mid
            else:
                return self.edge_to[mid]
        return -1

    cdef inline int _advance(self, int state, unsigned int c):
        cdef int nxt
        while True:
            nxt = self._edge(state, c)
            if nxt >= 0:
                return nxt
            if state == 0:
                return 0
            state = self.fail[state]

    def scan(self, text):
        """Return ``(token_count, per-language matched token counts)``."""
        cdef str t = text
        cdef Py_ssize_t i, n = len(t)
        cdef Py_UCS4 ch
        cdef int state = 0, tlen = 0, w, j
        cdef long long tokens = 0
        counts_arr = _array("q", bytes(8 * self.n_langs))
        cdef long long[::1] counts = counts_arr

        for i in range(n):
            ch = t[i]
            if Py_UNICODE_ISALPHA(ch):
                if tlen == 0:
                    tokens += 1
                tlen += 1
                state = self._advance(state, <unsigned int> ch)
            elif tlen > 0:
                w = self.word[state]
                if w >= 0 and self.depth[state] == tlen:
                    for j in range(self.owner_start[w], self.owner_start[w + 1]):
                        counts[self.owner_lang[j]] += 1
                tlen = 0
                state = 0

        if tlen > 0:
            w = self.word[state]
            if w >= 0 and self.depth[state] == tlen:
                for j in range(self.owner_start[w], self.owner_start[w + 1]):
                    counts[self.owner_lang[j]] += 1

        return int(tokens), list(counts_arr)
