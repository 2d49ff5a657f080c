"""Pure-Python ROUGE kernels; same contract as the compiled module."""

from __future__ import annotations

from collections import Counter


def lcs_length(a, b) -> int:
    """Length of the longest common subsequence (two-row DP)."""
    if len(a) == 0 or len(b) == 0:
        return 0
    b = list(b)
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def _grams(seq, n: int) -> Counter:
    seq = list(seq)
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def ngram_overlap(cand, ref, n: int) -> tuple[int, int, int]:
    """(clipped overlap, candidate n-gram count, reference n-gram count)."""
    ca, cb = _grams(cand, n), _grams(ref, n)
    overlap = sum(min(c, cb[g]) for g, c in ca.items() if g in cb)
    return overlap, sum(ca.values()), sum(cb.values())
