"""ROUGE-1/2/L F1 scoring and greedy oracle sentence labels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .corpus import tokenize


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, hits: int, cand: int, ref: int) -> "RougeScore":
        p = hits / cand if cand else 0.0
        r = hits / ref if ref else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f)


class _Interner:
    """Maps hashable tokens to small non-negative int ids."""

    def __init__(self):
        self.ids: dict = {}

    def __call__(self, tokens) -> np.ndarray:
        ids = self.ids
        return np.fromiter((ids.setdefault(t, len(ids)) for t in tokens), dtype=np.int64, count=len(tokens))


def _as_tokens(x) -> Sequence:
    return tokenize(x) if isinstance(x, str) else x


def rouge_n(candidate, reference, n: int = 1) -> RougeScore:
    """Clipped n-gram overlap; strings are tokenized like the corpus."""
    if n not in (1, 2):
        raise ValueError(f"n must be 1 or 2, got {n}")
    intern = _Interner()
    c, r = intern(list(_as_tokens(candidate))), intern(list(_as_tokens(reference)))
    return RougeScore.from_counts(*kernels.ngram_overlap(c, r, n))


def rouge_l(candidate, reference) -> RougeScore:
    intern = _Interner()
    c, r = intern(list(_as_tokens(candidate))), intern(list(_as_tokens(reference)))
    return RougeScore.from_counts(kernels.lcs_length(c, r), len(c), len(r))


def rouge_all(candidate, reference) -> dict[str, RougeScore]:
    return {
        "rouge1": rouge_n(candidate, reference, 1),
        "rouge2": rouge_n(candidate, reference, 2),
        "rougeL": rouge_l(candidate, reference),
    }


def mean_r1_r2(cand_ids: np.ndarray, ref_ids: np.ndarray) -> float:
    r1 = RougeScore.from_counts(*kernels.ngram_overlap(cand_ids, ref_ids, 1))
    r2 = RougeScore.from_counts(*kernels.ngram_overlap(cand_ids, ref_ids, 2))
    return (r1.f1 + r2.f1) / 2


@dataclass
class OracleLabels:
    labels: list[int]
    trace: list[float] = field(default_factory=list)
    order: list[int] = field(default_factory=list)


def subset_score(
    sent_ids: Sequence[np.ndarray], ref_ids: np.ndarray, chosen, objective: Callable = mean_r1_r2
) -> float:
    """Objective of the chosen sentences concatenated in source order."""
    if not chosen:
        return 0.0
    cand = np.concatenate([sent_ids[i] for i in sorted(chosen)])
    return objective(cand, ref_ids)


def greedy_oracle(source_sentences, reference, objective: Callable = mean_r1_r2) -> OracleLabels:
    """Greedily add the sentence with the largest strictly positive score gain.

    Sentences and reference may be strings or token lists. Ties go to the
    lowest sentence index.
    """
    sents = [list(_as_tokens(s)) for s in source_sentences]
    if not sents:
        raise ValueError("greedy_oracle needs at least one sentence")
    intern = _Interner()
    ref_ids = intern(list(_as_tokens(reference)))
    sent_ids = [intern(s) for s in sents]
    chosen: set[int] = set()
    trace: list[float] = []
    order: list[int] = []
    best_so_far = 0.0
    while len(chosen) < len(sents):
        best_gain, best_i, best_score = 0.0, -1, best_so_far
        for i in range(len(sents)):
            if i in chosen:
                continue
            score = subset_score(sent_ids, ref_ids, chosen | {i}, objective)
            if score - best_so_far > best_gain:
                best_gain, best_i, best_score = score - best_so_far, i, score
        if best_i < 0:
            break
        chosen.add(best_i)
        order.append(best_i)
        trace.append(best_score)
        best_so_far = best_score
    return OracleLabels([int(i in chosen) for i in range(len(sents))], trace, order)
