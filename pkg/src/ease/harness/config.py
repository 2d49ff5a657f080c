"""Flat training configuration, presets and ``key=value`` overrides."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..abstractor import AbstractorConfig
from ..extractor import ExtractorConfig


@dataclass
class TrainConfig:
    # masking
    level: str = "sentence"
    mask_scheme: str = "embed-mix"
    share_encoder: bool = False
    pi: float = 0.5
    beta: float = 5.0
    tau: float = 0.01
    min_sentences: int = 3
    init_prob: float = 0.0
    lasso_weight: float = 0.0
    bce_weight: float = 0.0
    plain_seq2seq: bool = False
    # optimisation
    learning_rate: float = 3e-5
    warmup_steps: int = 500
    total_steps: int = 20000
    batch_size: int = 16
    grad_clip: float = 0.0
    seed: int = 0
    # model dims
    model_dim: int = 64
    num_heads: int = 4
    ffn_dim: int = 128
    extractor_layers: int = 2
    abstractor_layers: int = 2
    max_positions: int = 256
    vocab_size: int = 512
    # data and output
    train_data: str = ""
    eval_data: str = ""
    pretrain_data: str = ""
    oracle_labels: str = ""
    init_checkpoint: str = ""
    checkpoint: str = ""
    out_dir: str = "runs/default"
    # evaluation
    max_gen_len: int = 48
    beam: int = 1
    report_seed: int = 1234
    eval_batch_size: int = 32
    sweep_pis: list = field(default_factory=lambda: [0.2, 0.3, 0.5])
    # synthetic data
    synth_num_docs: int = 8000
    synth_eval_docs: int = 100
    synth_sentences_per_doc: int = 10
    synth_salient_fraction: float = 0.3
    synth_vocab_size: int = 120
    log_every: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.warmup_steps >= self.total_steps:
            raise ValueError("warmup_steps must be smaller than total_steps")
        for name in ("beta", "lasso_weight", "bce_weight", "learning_rate", "grad_clip"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.pi <= 1:
            raise ValueError("pi must lie in (0, 1]")
        if self.pi == 1 and self.beta > 0:
            raise ValueError("pi = 1 makes the Bernoulli prior degenerate; set beta = 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        self.extractor_config()
        self.abstractor_config()

    def extractor_config(self) -> ExtractorConfig:
        return ExtractorConfig(
            num_layers=self.extractor_layers, model_dim=self.model_dim, num_heads=self.num_heads,
            ffn_dim=self.ffn_dim, max_positions=self.max_positions, level=self.level, tau=self.tau,
            sparsity_pi=self.pi, min_sentences=self.min_sentences, init_prob=self.init_prob,
        )

    def abstractor_config(self) -> AbstractorConfig:
        return AbstractorConfig(
            num_layers=self.abstractor_layers, model_dim=self.model_dim, num_heads=self.num_heads,
            ffn_dim=self.ffn_dim, max_positions=self.max_positions, mask_scheme=self.mask_scheme,
            share_encoder=self.share_encoder,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known - {"preset"}
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        base = PRESETS[d["preset"]]() if "preset" in d else {}
        base.update({k: v for k, v in d.items() if k != "preset"})
        return cls(**base)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def desk_preset() -> dict:
    """Toy dims and a short schedule that trains in minutes on one CPU core.

    A from-scratch abstractor only learns to copy from the source once it has
    seen mostly unmasked inputs, so desk runs start from a reconstruction
    checkpoint (``desk-pretrain``). The softer temperature and weaker prior
    give the extractor a usable gradient within the 2000-step budget.
    """
    return dict(
        model_dim=64, num_heads=4, ffn_dim=128, extractor_layers=2, abstractor_layers=2,
        vocab_size=512, batch_size=16, total_steps=2000, warmup_steps=100, learning_rate=3e-3,
        max_positions=128, tau=0.5, beta=1.0,
    )


def desk_pretrain_preset() -> dict:
    """Reconstruction warm-up for the desk abstractor: every unit kept, no prior."""
    return {**desk_preset(), "pi": 1.0, "beta": 0.0, "total_steps": 1000, "learning_rate": 1e-3}


PRESETS = {"default": dict, "desk": desk_preset, "desk-pretrain": desk_pretrain_preset}


def preset(name: str, **overrides) -> TrainConfig:
    return TrainConfig(**{**PRESETS[name](), **overrides})


def load_config(path: str | Path | None) -> TrainConfig:
    if not path:
        return TrainConfig()
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a flat JSON object")
    return TrainConfig.from_dict(data)


def _coerce(kind, raw: str):
    if kind is bool or kind == "bool":
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int or kind == "int":
        return int(raw)
    if kind is float or kind == "float":
        return float(raw)
    if kind is list or kind == "list":
        return [float(x) for x in raw.split(",") if x.strip()]
    return raw


def apply_overrides(cfg: TrainConfig, pairs: list[str]) -> TrainConfig:
    """Apply ``key=value`` strings, coercing to each field's declared type."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    changes = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"override must look like key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in types:
            raise ValueError(f"unknown config field {key!r}")
        changes[key] = _coerce(types[key], raw)
    return cfg.replace(**changes) if changes else cfg
