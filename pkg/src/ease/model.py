"""Named parameter collection for extractor and abstractor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .abstractor import AbstractorConfig
from .corpus import MASK_ID
from .diffcore import Tensor
from .extractor import ExtractorConfig


def check_shareable(ext: ExtractorConfig, abs_: AbstractorConfig) -> None:
    for f in ("num_layers", "model_dim", "num_heads", "ffn_dim", "max_positions"):
        if getattr(ext, f) != getattr(abs_, f):
            raise ValueError(f"share_encoder needs equal {f}: extractor {getattr(ext, f)} vs abstractor {getattr(abs_, f)}")


def parameter_shapes(ext: ExtractorConfig, abs_: AbstractorConfig, vocab_size: int) -> dict:
    """name -> (shape, initialiser) for the full model."""
    d = ext.model_dim
    shapes = {}
    shapes.update(layers.embedding_shapes("ext", vocab_size, d, ext.max_positions))
    shapes.update(layers.encoder_shapes("ext", ext.num_layers, d, ext.ffn_dim))
    shapes["ext.head.w"] = ((d, 1), ("normal", 1 / math.sqrt(d)))
    pi = ext.init_prob or ext.sparsity_pi
    shapes["ext.head.b"] = ((1,), ("const", math.log(pi / (1 - pi)) if pi < 1 else 0.0))

    da = abs_.model_dim
    if abs_.share_encoder:
        check_shareable(ext, abs_)
    else:
        shapes.update(layers.embedding_shapes("abs.enc", vocab_size, da, abs_.max_positions))
        shapes.update(layers.encoder_shapes("abs.enc", abs_.num_layers, da, abs_.ffn_dim))
    shapes["abs.dec.pos_emb"] = ((abs_.max_positions, da), ("normal", 1 / math.sqrt(da)))
    shapes.update(layers.decoder_shapes("abs.dec", abs_.num_layers, da, abs_.ffn_dim))
    shapes["abs.out_bias"] = ((vocab_size,), ("zeros",))
    shapes["abs.x_mask"] = ((da,), ("mask-row",))
    return shapes


@dataclass
class ModelParameters:
    extractor: ExtractorConfig
    abstractor: AbstractorConfig
    vocab_size: int
    tensors: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def initialize(cls, extractor: ExtractorConfig, abstractor: AbstractorConfig, vocab_size: int,
                   seed: int = 0) -> "ModelParameters":
        shapes = parameter_shapes(extractor, abstractor, vocab_size)
        tensors = {}
        for name, (shape, init) in shapes.items():
            if init[0] == "mask-row":
                continue
            tensors[name] = Tensor(layers.init_tensor(name, shape, init, seed), requires_grad=True, name=name)
        prefix = "ext" if abstractor.share_encoder else "abs.enc"
        # the learned mask embedding starts from the <mask> token's row
        tensors["abs.x_mask"] = Tensor(tensors[f"{prefix}.tok_emb"].data[MASK_ID].copy(),
                                       requires_grad=True, name="abs.x_mask")
        return cls(extractor, abstractor, vocab_size, {n: tensors[n] for n in sorted(tensors)})

    @property
    def encoder_prefix(self) -> str:
        return "ext" if self.abstractor.share_encoder else "abs.enc"

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def count(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {n: t.shape for n, t in self.tensors.items()}

    def group(self, name: str) -> str:
        if name.startswith("ext.head"):
            return "extractor_head"
        if name == "abs.x_mask":
            return "mask_embedding"
        if name.startswith("ext."):
            return "extractor_encoder"
        return "abstractor"

    def copy(self) -> "ModelParameters":
        return ModelParameters(self.extractor, self.abstractor, self.vocab_size,
                               {n: Tensor(t.data.copy(), requires_grad=True, name=n) for n, t in self.tensors.items()})

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.tensors.items()}
