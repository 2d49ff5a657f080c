"""Training and pretraining loops."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import abstractor, extractor, objectives
from ..corpus import EncodedExample, Vocabulary, build_vocab, collate, encode, read_jsonl, segment_sentences
from ..diffcore import RngState, Tape, backward, permutation
from ..model import ModelParameters
from ..rouge import greedy_oracle
from .checkpoint import Checkpoint, ShapeMismatchError, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .optim import Adam, clip_by_global_norm, lr_schedule

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "task", "kl", "lasso", "bce", "total", "lr")
# stream ids mixed into the seed so data order and mask noise never share counters
_DATA_STREAM = 0x5EED_DA7A
_NOISE_STREAM = 0x5EED_6B6B


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, values: dict[str, float]):
        terms = ", ".join(f"{k}={v!r}" for k, v in values.items())
        super().__init__(f"non-finite loss at step {step}: {terms}")
        self.step = step
        self.values = values


@dataclass
class TrainState:
    config: TrainConfig
    vocab: Vocabulary
    params: ModelParameters
    optimizer: Adam
    step: int
    noise: RngState
    log: list[dict] = field(default_factory=list)

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(
            config=self.config.to_dict(),
            vocab=list(self.vocab.tokens),
            params={n: t.data.copy() for n, t in self.params.tensors.items()},
            moments={"adam_m": {n: a.copy() for n, a in self.optimizer.m.items()},
                     "adam_v": {n: a.copy() for n, a in self.optimizer.v.items()}},
            step=self.step,
            adam_t=self.optimizer.t,
            rng=self.noise.copy(),
        )


# ---------------------------------------------------------------------------
# data


def load_records(path: str, require_target: bool = True) -> list[dict]:
    if not path:
        raise ValueError("no dataset path configured")
    return read_jsonl(path, require_target=require_target)


def encode_records(records: list[dict], vocab: Vocabulary, config: TrainConfig,
                   target_from_source: bool = False) -> list[EncodedExample]:
    out = []
    for rec in records:
        target = rec["source"] if target_from_source else rec.get("target")
        ex = encode(rec["source"], target, vocab, config.level, max_source_len=config.max_positions)
        if ex.target_ids is not None and len(ex.target_ids) > config.max_positions:
            ex.target_ids = np.concatenate([ex.target_ids[: config.max_positions - 1], ex.target_ids[-1:]])
        out.append(ex)
    return out


def vocab_for(records: list[dict], config: TrainConfig) -> Vocabulary:
    texts = [r["source"] for r in records] + [r["target"] for r in records if "target" in r]
    return build_vocab(texts, config.vocab_size)


def oracle_labels_for(records: list[dict]) -> list[list[int]]:
    return [greedy_oracle(segment_sentences(r["source"]), r["target"]).labels for r in records]


def _unit_labels(examples: list[EncodedExample], labels: list[list[int]], idx: np.ndarray, level: str):
    """Per-unit 0/1 labels for a batch; token level inherits each token's sentence label."""
    batch_labels = []
    for i in idx:
        ex, lab = examples[i], np.asarray(labels[i], dtype=np.float64)
        if len(lab) < ex.num_sentences:
            raise ValueError(f"example {i}: {len(lab)} labels for {ex.num_sentences} sentences")
        lab = lab[: ex.num_sentences]
        batch_labels.append(lab if level == "sentence" else lab[ex.sentence_ids])
    width = max(len(l) for l in batch_labels)
    return np.stack([np.pad(l, (0, width - len(l))) for l in batch_labels])


def batch_indices(seed: int, step: int, batch_size: int, n: int) -> np.ndarray:
    """Examples for a step, a pure function of (seed, step): epoch-wise shuffles, concatenated."""
    start = step * batch_size
    out = []
    while len(out) < batch_size:
        epoch, offset = divmod(start + len(out), n)
        order = permutation(RngState(seed ^ _DATA_STREAM, epoch << 32), n)
        out.extend(order[offset : offset + batch_size - len(out)].tolist())
    return np.array(out, dtype=np.int64)


# ---------------------------------------------------------------------------
# loop


def compute_losses(state: TrainState, batch, labels=None) -> objectives.LossBundle:
    cfg = state.config
    params = state.params
    if cfg.plain_seq2seq:
        return objectives.combine(abstractor.forward_nll(params, batch), beta=0.0)
    if cfg.pi == 1:
        # the extractor is bypassed: every unit kept, the mask is exactly one
        ones = np.where(batch.src_valid, 1.0, 0.0)
        return objectives.combine(abstractor.forward_nll(params, batch, ones), beta=0.0)
    dist = extractor.score_units(params, batch)
    sm = extractor.soft_mask(dist, state.noise, cfg.tau)
    task = abstractor.forward_nll(params, batch, sm.token)
    kl = objectives.kl_sparsity(dist.unit_probs, cfg.pi, dist.unit_valid) if cfg.beta > 0 else 0.0
    lasso = objectives.lasso_loss(sm.token, batch.src_valid) if cfg.lasso_weight > 0 else 0.0
    bce = 0.0
    if cfg.bce_weight > 0:
        bce = objectives.supervision_bce(dist.unit_probs, labels, dist.unit_valid)
    return objectives.combine(task, kl, lasso, bce, cfg.beta, cfg.lasso_weight, cfg.bce_weight)


def train_step(state: TrainState, examples: list[EncodedExample], labels=None) -> dict:
    cfg = state.config
    idx = batch_indices(cfg.seed, state.step, cfg.batch_size, len(examples))
    batch = collate([examples[i] for i in idx])
    unit_labels = None
    if cfg.bce_weight > 0 and not cfg.plain_seq2seq and cfg.pi < 1:
        if labels is None:
            raise ValueError("bce_weight > 0 needs oracle labels")
        unit_labels = _unit_labels(examples, labels, idx, cfg.level)
    with Tape():
        bundle = compute_losses(state, batch, unit_labels)
    values = bundle.values()
    if not all(math.isfinite(v) for v in values.values()):
        raise NonFiniteLossError(state.step, values)
    grads = backward(bundle.total, state.params.tensors)
    if cfg.grad_clip > 0:
        clip_by_global_norm(grads, cfg.grad_clip)
    lr = lr_schedule(state.step, cfg)
    state.optimizer.step(state.params.tensors, grads, lr)
    state.step += 1
    row = {"step": state.step, **{k: values[k] for k in LOG_FIELDS[1:6]}, "lr": lr}
    state.log.append(row)
    return row


def new_state(config: TrainConfig, vocab: Vocabulary, init: Checkpoint | None = None) -> TrainState:
    params = ModelParameters.initialize(config.extractor_config(), config.abstractor_config(), len(vocab), config.seed)
    if init is not None:
        shapes = params.shapes()
        for name, arr in init.params.items():
            if name in params.tensors:
                if arr.shape != shapes[name]:
                    raise ShapeMismatchError(name, shapes[name], arr.shape)
                params.tensors[name].data = arr.copy()
    return TrainState(config, vocab, params, Adam(params.shapes()), 0, RngState(config.seed ^ _NOISE_STREAM, 0))


def restore_state(ckpt: Checkpoint, config: TrainConfig | None = None) -> TrainState:
    """Rebuild a mid-training state; continuing it matches an uninterrupted run bit for bit."""
    config = config or TrainConfig.from_dict(ckpt.config)
    vocab = Vocabulary(list(ckpt.vocab))
    params = ModelParameters.initialize(config.extractor_config(), config.abstractor_config(), len(vocab), config.seed)
    for name, t in params.tensors.items():
        if name not in ckpt.params:
            raise ShapeMismatchError(name, t.shape, ())
        if ckpt.params[name].shape != t.shape:
            raise ShapeMismatchError(name, t.shape, ckpt.params[name].shape)
        t.data = ckpt.params[name].copy()
    opt = Adam(params.shapes())
    for kind, store in (("adam_m", opt.m), ("adam_v", opt.v)):
        for name, arr in ckpt.moments.get(kind, {}).items():
            store[name] = arr.copy()
    opt.t = ckpt.adam_t
    return TrainState(config, vocab, params, opt, ckpt.step, ckpt.rng.copy())


def run(state: TrainState, examples: list[EncodedExample], labels=None, until: int | None = None) -> TrainState:
    cfg = state.config
    if not examples:
        raise ValueError("dataset is empty")
    until = cfg.total_steps if until is None else min(until, cfg.total_steps)
    while state.step < until:
        row = train_step(state, examples, labels)
        if cfg.log_every and (row["step"] % max(cfg.log_every, 1) == 0) and log.isEnabledFor(logging.DEBUG):
            log.debug("step %d total %.5f task %.5f kl %.5f", row["step"], row["total"], row["task"], row["kl"])
    return state


def train(config: TrainConfig, records: list[dict], labels: list[list[int]] | None = None,
          init: Checkpoint | None = None, until: int | None = None) -> TrainState:
    """Train from scratch, or from ``init``'s parameters (vocabulary included)."""
    config.validate()
    if not records:
        raise ValueError("dataset is empty")
    if any("target" not in r for r in records):
        raise ValueError("training records need a 'target' field")
    vocab = Vocabulary(list(init.vocab)) if init is not None else vocab_for(records, config)
    examples = encode_records(records, vocab, config)
    if config.bce_weight > 0 and labels is None:
        labels = oracle_labels_for(records)
    state = new_state(config, vocab, init)
    return run(state, examples, labels, until)


def pretrain(config: TrainConfig, records: list[dict], until: int | None = None) -> TrainState:
    """Reconstruction training: the target is the source itself."""
    config.validate()
    if not records:
        raise ValueError("dataset is empty")
    vocab = build_vocab([r["source"] for r in records], config.vocab_size)
    pre_cfg = config.replace(bce_weight=0.0)
    examples = encode_records(records, vocab, pre_cfg, target_from_source=True)
    return run(new_state(pre_cfg, vocab), examples, None, until)


def resume(ckpt: Checkpoint, records: list[dict], labels=None, until: int | None = None,
           reconstruction: bool = False) -> TrainState:
    state = restore_state(ckpt)
    examples = encode_records(records, state.vocab, state.config, target_from_source=reconstruction)
    if state.config.bce_weight > 0 and labels is None:
        labels = oracle_labels_for(records)
    return run(state, examples, labels, until)


def write_loss_csv(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (row[k] if k == "step" else repr(float(row[k]))) for k in LOG_FIELDS})


def save_state(state: TrainState, path: str | Path, dtype: str = "float64") -> None:
    save_checkpoint(state.checkpoint(), path, dtype)


def load_state(path: str | Path) -> TrainState:
    return restore_state(load_checkpoint(path))
