"""Evaluation variants, sparsity sweeps and evidence-annotated summaries."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .. import abstractor, extractor
from ..corpus import EOS_ID, MARKER, Document, EncodedExample, collate, encode, segment_sentences
from ..diffcore import RngState, permutation
from ..rouge import greedy_oracle, rouge_all
from .config import TrainConfig
from .training import TrainState, encode_records, train

VARIANTS = ("model", "top3", "lead3", "random3", "extractive", "full")
SENTENCE_VARIANTS = ("top3", "lead3", "random3")
METRICS = ("rouge1", "rouge2", "rougeL")


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(start + size, n))


def _decode(ids: list[int], vocab) -> list[str]:
    if EOS_ID in ids:
        ids = ids[: ids.index(EOS_ID)]
    return vocab.decode(ids)


def _source_tokens(ex: EncodedExample, token_mask: np.ndarray, vocab) -> list[str]:
    keep = token_mask[: ex.source_len] > 0
    return vocab.decode(ex.source_ids[keep].tolist())


def _mean_scores(cands: list[list[str]], refs: list[list[str]]) -> dict[str, float]:
    # fixed aggregation order: example order, then a single sum
    rows = [rouge_all(c, r) for c, r in zip(cands, refs)]
    return {m: float(np.sum([row[m].f1 for row in rows]) / len(rows)) for m in METRICS}


def _transitions(token_mask: np.ndarray, valid: np.ndarray) -> np.ndarray:
    pair = valid[:, 1:] & valid[:, :-1]
    return (np.abs(np.diff(token_mask, axis=1)) * pair).sum(axis=1)


def _evidence_scores(selected: list[np.ndarray], gold: list[np.ndarray]) -> dict[str, float]:
    tp = sum(float((s * g).sum()) for s, g in zip(selected, gold))
    ns = sum(float(s.sum()) for s in selected)
    ng = sum(float(g.sum()) for g in gold)
    exact = sum(bool(np.array_equal(s, g)) for s, g in zip(selected, gold)) / len(selected)
    return {
        "precision": tp / ns if ns else 0.0,
        "recall": tp / ng if ng else 0.0,
        "exact_match": exact,
    }


def _unit_gold(ex: EncodedExample, sentence_labels) -> np.ndarray:
    lab = np.asarray(sentence_labels, dtype=np.float64)[: ex.num_sentences]
    return lab if ex.level == "sentence" else lab[ex.sentence_ids]


def evaluate(state: TrainState, records: list[dict], variants=None, pi: float | None = None,
             oracle: list[list[int]] | None = None) -> dict:
    """Score each variant's generated summaries against the references.

    ``model`` uses the top-pi hard mask, ``extractive`` scores that evidence
    itself, ``full`` keeps every unit. Sentence-only variants use exactly
    three sentences chosen by extractor score, by position, or at random
    under the report seed.
    """
    cfg = state.config
    variants = tuple(variants or (VARIANTS if cfg.level == "sentence" else ("model", "extractive", "full")))
    unknown = set(variants) - set(VARIANTS)
    if unknown:
        raise ValueError(f"unknown variants: {sorted(unknown)}")
    if cfg.level != "sentence" and set(variants) & set(SENTENCE_VARIANTS):
        raise ValueError("top3/lead3/random3 need a sentence-level checkpoint")
    if cfg.plain_seq2seq:
        variants = tuple(v for v in variants if v in ("model", "full"))
    if not records:
        raise ValueError("no evaluation records")
    if any("target" not in r for r in records):
        raise ValueError("evaluation records need a 'target' field")
    pi = cfg.pi if pi is None else pi
    vocab, params = state.vocab, state.params
    examples = encode_records(records, vocab, cfg)
    refs = [_decode(ex.target_ids[1:].tolist(), vocab) for ex in examples]
    if oracle is None:
        oracle = [greedy_oracle(segment_sentences(r["source"]), r["target"]).labels for r in records]
    random_rng = RngState(cfg.report_seed, 0)

    cands = {v: [] for v in variants}
    selected_units, token_fracs, transitions = [], [], []
    for idx in _chunks(len(examples), cfg.eval_batch_size):
        batch = collate([examples[i] for i in idx])
        full = np.where(batch.src_valid, 1.0, 0.0)
        if cfg.plain_seq2seq or pi == 1:
            dist = None
            model_mask, model_units = full, [np.ones(examples[i].num_units) for i in idx]
        else:
            dist = extractor.score_units(params, batch)
            hard = extractor.hard_mask_topk(dist, pi, cfg.min_sentences)
            model_mask = hard.token
            model_units = [hard.units[b, : examples[i].num_units] for b, i in enumerate(idx)]
        selected_units.extend(model_units)
        token_fracs.extend((model_mask * batch.src_valid).sum(1) / batch.src_valid.sum(1))
        transitions.extend(_transitions(model_mask, batch.src_valid))

        masks = {}
        for v in variants:
            if v == "model":
                masks[v] = None if cfg.plain_seq2seq else model_mask
            elif v == "full":
                masks[v] = None if cfg.plain_seq2seq else full
            elif v == "extractive":
                cands[v].extend(_source_tokens(examples[i], model_mask[b], vocab) for b, i in enumerate(idx))
            else:
                picks = []
                for b, i in enumerate(idx):
                    n = examples[i].num_units
                    k = min(3, n)
                    if v == "top3":
                        picks.append(extractor.topk_units(dist.probs(b), k) if dist is not None else np.arange(k))
                    elif v == "lead3":
                        picks.append(np.arange(k))
                    else:
                        picks.append(np.sort(permutation(random_rng, n)[:k]))
                if dist is None:
                    dist = extractor.score_units(params, batch)
                masks[v] = extractor.mask_from_units(dist, picks).token
        for v, mask in masks.items():
            outs = abstractor.generate(params, batch, mask, max_len=cfg.max_gen_len, beam=cfg.beam)
            cands[v].extend(_decode(o, vocab) for o in outs)

    report = {
        "num_examples": len(examples),
        "pi": pi,
        "level": cfg.level,
        "variants": {v: _mean_scores(cands[v], refs) for v in variants},
        "sparsity": float(np.sum(token_fracs) / len(token_fracs)),
        "mean_transitions": float(np.sum(transitions) / len(transitions)),
        "evidence": _evidence_scores(selected_units, [_unit_gold(ex, o) for ex, o in zip(examples, oracle)]),
    }
    markers = [[int(bool(s) and s[0] == MARKER) for s in Document.from_text(r["source"]).sentences] for r in records]
    if any(any(m) for m in markers):
        report["evidence_vs_markers"] = _evidence_scores(
            selected_units, [_unit_gold(ex, m) for ex, m in zip(examples, markers)])
    return report


def sparsity_sweep(config: TrainConfig, pis, train_records: list[dict], eval_records: list[dict],
                   labels=None, init=None) -> dict:
    """One model per pi (optionally fine-tuned from ``init``), each evaluated on the model variant."""
    pis = list(pis)
    if not pis:
        raise ValueError("sweep needs at least one pi value")
    rows = []
    for pi in pis:
        cfg = config.replace(pi=float(pi), beta=0.0 if pi == 1 else config.beta)
        state = train(cfg, train_records, labels, init)
        rep = evaluate(state, eval_records, ["model"])
        rows.append({"pi": float(pi), **rep["variants"]["model"], "sparsity": rep["sparsity"]})
    return {"sweep": rows}


def summarize(state: TrainState, text: str, pi: float | None = None) -> dict:
    """Generate a summary and list the evidence units with character spans and probabilities."""
    cfg = state.config
    if not text.strip():
        raise ValueError("document is empty")
    pi = cfg.pi if pi is None else pi
    doc = Document.from_text(text)
    ex = encode(text, None, state.vocab, cfg.level, max_source_len=cfg.max_positions)
    batch = collate([ex])
    n = ex.num_units
    if cfg.plain_seq2seq or pi == 1:
        units, probs = np.ones(n), np.ones(n)
        mask = None if cfg.plain_seq2seq else np.ones((1, ex.source_len))
    else:
        dist = extractor.score_units(state.params, batch)
        hard = extractor.hard_mask_topk(dist, pi, cfg.min_sentences)
        units, probs, mask = hard.units[0, :n], dist.probs(0), hard.token
    if cfg.level == "sentence":
        spans = doc.sentence_char_spans[:n]
    else:
        spans = [sp for sent in doc.token_char_spans for sp in sent][:n]
    out = abstractor.generate(state.params, batch, mask, max_len=cfg.max_gen_len, beam=cfg.beam)[0]
    evidence = [
        {"unit": int(j), "start": int(spans[j][0]), "end": int(spans[j][1]),
         "text": text[spans[j][0] : spans[j][1]], "probability": float(probs[j])}
        for j in np.flatnonzero(units)
    ]
    return {"summary": " ".join(_decode(out, state.vocab)), "evidence": evidence}


def write_report(report: dict, out_dir: str | Path, name: str = "report.json") -> str:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    (out / name).write_text(text, encoding="utf-8")
    return text
