"""Tokenization, sentence segmentation, vocabulary, encoding and datasets."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .diffcore.rng import RngState, permutation, raw_words

PAD, UNK, BOS, EOS, MASK, CLS = "<pad>", "<unk>", "<s>", "</s>", "<mask>", "[CLS]"
RESERVED = (PAD, UNK, BOS, EOS, MASK, CLS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID, MASK_ID, CLS_ID = range(6)

LEVELS = ("token", "sentence")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
_SENT_END_RE = re.compile(r"[.!?]+(?=\s|$)")

MARKER = "key"


class EncodingError(ValueError):
    pass


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Lowercased word/punctuation tokens with their character offsets in ``text``."""
    return [(m.group().lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def tokenize(text: str) -> list[str]:
    return [tok for tok, _, _ in tokenize_with_spans(text)]


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, trimmed of surrounding whitespace.

    A sentence ends at a run of ``.``, ``!`` or ``?`` followed by whitespace
    or end of text; the delimiter stays with its sentence.
    """
    spans = []
    start = 0
    ends = [m.end() for m in _SENT_END_RE.finditer(text)]
    if not ends or ends[-1] < len(text):
        ends.append(len(text))
    for end in ends:
        piece = text[start:end]
        lead = len(piece) - len(piece.lstrip())
        s, e = start + lead, start + len(piece.rstrip())
        if e > s:
            spans.append((s, e))
        start = end
    return spans


def segment_sentences(text: str) -> list[str]:
    return [text[s:e] for s, e in sentence_spans(text)]


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:6]) != RESERVED:
            raise ValueError("first six vocabulary entries must be the reserved tokens")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate vocabulary entries")

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]

    def token(self, i: int) -> str:
        return self.tokens[i]

    def decode(self, ids: Iterable[int], strip_special: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip_special and i in (PAD_ID, BOS_ID, EOS_ID, CLS_ID):
                continue
            out.append(self.tokens[i])
        return out


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocabulary:
    """Reserved tokens, then corpus tokens by descending frequency (ties lexicographic)."""
    if max_size < len(RESERVED):
        raise ValueError(f"max_size must be at least {len(RESERVED)}, got {max_size}")
    counts: Counter[str] = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    for r in RESERVED:
        counts.pop(r, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    room = max_size - len(RESERVED)
    return Vocabulary(list(RESERVED) + [t for t, _ in ranked[:room]])


@dataclass
class Document:
    text: str
    sentences: list[list[str]]
    sentence_char_spans: list[tuple[int, int]]
    token_char_spans: list[list[tuple[int, int]]]

    @classmethod
    def from_text(cls, text: str) -> "Document":
        sentences, tok_spans, sent_spans = [], [], []
        for s, e in sentence_spans(text):
            toks = tokenize_with_spans(text[s:e])
            if not toks:
                continue
            sentences.append([t for t, _, _ in toks])
            tok_spans.append([(s + a, s + b) for _, a, b in toks])
            sent_spans.append((s, e))
        return cls(text, sentences, sent_spans, tok_spans)

    @property
    def tokens(self) -> list[str]:
        return [t for sent in self.sentences for t in sent]


@dataclass
class EncodedExample:
    source_ids: np.ndarray
    sentence_ids: np.ndarray
    cls_positions: np.ndarray
    segment_ids: np.ndarray
    target_ids: np.ndarray | None
    level: str
    num_sentences: int

    @property
    def num_units(self) -> int:
        return self.num_sentences if self.level == "sentence" else len(self.source_ids)

    @property
    def source_len(self) -> int:
        return len(self.source_ids)


def encode(
    source_text: str,
    target_text: str | None,
    vocab: Vocabulary,
    level: str = "sentence",
    max_source_len: int | None = None,
) -> EncodedExample:
    """Encode a (source, target) pair.

    ``max_source_len`` drops whole trailing sentences so the source fits;
    at least one sentence is always kept.
    """
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}, got {level!r}")
    doc = Document.from_text(source_text)
    if not doc.sentences:
        raise EncodingError("source is empty after tokenization")
    src, sent, seg, cls = [], [], [], []
    for k, toks in enumerate(doc.sentences):
        piece = ([CLS_ID] if level == "sentence" else []) + vocab.ids(toks)
        if max_source_len is not None and k > 0 and len(src) + len(piece) > max_source_len:
            break
        if level == "sentence":
            cls.append(len(src))
        src.extend(piece)
        sent.extend([k] * len(piece))
        seg.extend([k % 2 if level == "sentence" else 0] * len(piece))
    n_sent = sent[-1] + 1
    target = None
    if target_text is not None:
        target = np.array([BOS_ID] + vocab.ids(tokenize(target_text)) + [EOS_ID], dtype=np.int64)
    return EncodedExample(
        source_ids=np.array(src, dtype=np.int64),
        sentence_ids=np.array(sent, dtype=np.int64),
        cls_positions=np.array(cls, dtype=np.int64),
        segment_ids=np.array(seg, dtype=np.int64),
        target_ids=target,
        level=level,
        num_sentences=n_sent,
    )


def decode_source(ex: EncodedExample, vocab: Vocabulary) -> list[str]:
    return vocab.decode(ex.source_ids)


@dataclass
class Batch:
    """Right-padded arrays for a list of examples."""

    source: np.ndarray          # (B, S)
    src_valid: np.ndarray       # (B, S) bool
    sentence_ids: np.ndarray    # (B, S), 0 on padding
    segment_ids: np.ndarray     # (B, S)
    units: np.ndarray           # (B, U) positions of unit representations
    unit_valid: np.ndarray      # (B, U) bool
    target_in: np.ndarray | None
    target_out: np.ndarray | None
    tgt_valid: np.ndarray | None
    level: str
    examples: list[EncodedExample]

    @property
    def size(self) -> int:
        return self.source.shape[0]

    def unit_to_token(self) -> np.ndarray:
        """Index of the unit that owns each source position, shape (B, S)."""
        if self.level == "sentence":
            return self.sentence_ids
        return np.broadcast_to(np.arange(self.source.shape[1]), self.source.shape)


def collate(examples: Sequence[EncodedExample]) -> Batch:
    if not examples:
        raise ValueError("cannot collate an empty batch")
    level = examples[0].level
    if any(ex.level != level for ex in examples):
        raise ValueError("mixed encoding levels in one batch")
    B = len(examples)
    S = max(ex.source_len for ex in examples)
    source = np.full((B, S), PAD_ID, dtype=np.int64)
    valid = np.zeros((B, S), dtype=bool)
    sent = np.zeros((B, S), dtype=np.int64)
    seg = np.zeros((B, S), dtype=np.int64)
    U = max(ex.num_units for ex in examples)
    units = np.zeros((B, U), dtype=np.int64)
    unit_valid = np.zeros((B, U), dtype=bool)
    for b, ex in enumerate(examples):
        n = ex.source_len
        source[b, :n] = ex.source_ids
        valid[b, :n] = True
        sent[b, :n] = ex.sentence_ids
        seg[b, :n] = ex.segment_ids
        pos = ex.cls_positions if level == "sentence" else np.arange(n)
        units[b, : len(pos)] = pos
        unit_valid[b, : len(pos)] = True
    tin = tout = tvalid = None
    if all(ex.target_ids is not None for ex in examples):
        T = max(len(ex.target_ids) for ex in examples) - 1
        tin = np.full((B, T), PAD_ID, dtype=np.int64)
        tout = np.full((B, T), PAD_ID, dtype=np.int64)
        tvalid = np.zeros((B, T), dtype=bool)
        for b, ex in enumerate(examples):
            t = ex.target_ids
            tin[b, : len(t) - 1] = t[:-1]
            tout[b, : len(t) - 1] = t[1:]
            tvalid[b, : len(t) - 1] = True
    return Batch(source, valid, sent, seg, units, unit_valid, tin, tout, tvalid, level, list(examples))


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticSpec:
    num_docs: int = 200
    sentences_per_doc: int = 10
    salient_fraction: float = 0.3
    vocab_size: int = 120
    seed: int = 0
    min_len: int = 3
    max_len: int = 5


def _pools(vocab_size: int) -> tuple[list[str], list[str]]:
    n_filler = (vocab_size - 1) // 2
    n_content = vocab_size - 1 - n_filler
    if n_filler < 4 or n_content < 4:
        raise ValueError(f"vocab_size {vocab_size} too small to separate filler and content pools")
    return [f"f{i}" for i in range(n_filler)], [f"c{i}" for i in range(n_content)]


def num_salient(sentences_per_doc: int, salient_fraction: float) -> int:
    k = math.floor(salient_fraction * sentences_per_doc + 0.5)
    return min(max(k, 1), sentences_per_doc - 1)


def generate_synthetic_corpus(spec: SyntheticSpec | dict) -> list[tuple[str, str]]:
    """Documents of filler and marker-prefixed salient sentences.

    Salient sentences use a content vocabulary disjoint from the filler one
    and are placed at uniformly random positions; the target is the salient
    sentences, verbatim and in order.
    """
    if isinstance(spec, dict):
        spec = SyntheticSpec(**spec)
    if not 0 < spec.salient_fraction < 1:
        raise ValueError("salient_fraction must lie in (0, 1)")
    if spec.sentences_per_doc < 4:
        raise ValueError("sentences_per_doc must be at least 4")
    filler, content = _pools(spec.vocab_size)
    rng = RngState(spec.seed, 0)
    k = num_salient(spec.sentences_per_doc, spec.salient_fraction)
    span = spec.max_len - spec.min_len + 1
    pairs = []
    for _ in range(spec.num_docs):
        order = permutation(rng, spec.sentences_per_doc)
        salient = set(order[:k].tolist())
        sentences, target = [], []
        for j in range(spec.sentences_per_doc):
            n = spec.min_len + int(raw_words(rng, 1)[0] % np.uint64(span))
            pool = content if j in salient else filler
            words = [pool[int(w % np.uint64(len(pool)))] for w in raw_words(rng, n)]
            if j in salient:
                words = [MARKER] + words
            text = " ".join(words) + "."
            sentences.append(text)
            if j in salient:
                target.append(text)
        pairs.append((" ".join(sentences), " ".join(target)))
    return pairs


def salient_labels(source_text: str) -> list[int]:
    """Construction labels of a synthetic document: 1 for marker-prefixed sentences."""
    return [int(bool(toks) and toks[0] == MARKER) for toks in Document.from_text(source_text).sentences]


# ---------------------------------------------------------------------------
# JSONL


def read_jsonl(path: str | Path, require_target: bool = True) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if not isinstance(rec.get("source"), str):
                raise ValueError(f"{path}:{lineno}: missing string field 'source'")
            if "target" in rec and not isinstance(rec["target"], str):
                raise ValueError(f"{path}:{lineno}: field 'target' must be a string")
            if require_target and "target" not in rec:
                raise ValueError(f"{path}:{lineno}: missing field 'target'")
            records.append({k: rec[k] for k in ("source", "target") if k in rec})
    return records


def write_jsonl(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def pairs_to_records(pairs: Iterable[tuple[str, str]]) -> list[dict]:
    return [{"source": s, "target": t} for s, t in pairs]
