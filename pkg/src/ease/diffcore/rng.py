"""Counter-based random streams.

Draws come from Philox keyed by ``seed`` and positioned by ``counter``, so a
given ``(seed, counter)`` pair always yields the same numbers regardless of
what else was sampled before.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

_MASK64 = (1 << 64) - 1


@dataclass
class RngState:
    seed: int
    counter: int = 0

    def __post_init__(self):
        self.seed &= _MASK64
        self.counter &= _MASK64

    def copy(self) -> "RngState":
        return RngState(self.seed, self.counter)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "counter": self.counter}

    @classmethod
    def from_dict(cls, d) -> "RngState":
        return cls(int(d["seed"]), int(d["counter"]))


def raw_words(rng: RngState, n: int) -> np.ndarray:
    """``n`` uint64 words; advances the counter by whole Philox blocks (4 words)."""
    blocks = -(-n // 4)
    bitgen = np.random.Philox(key=rng.seed, counter=rng.counter)
    out = bitgen.random_raw(blocks * 4)[:n]
    rng.counter = (rng.counter + blocks) & _MASK64
    return out


def uniform_open(rng: RngState, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1): (k + 0.5) / 2**53 for 53-bit k."""
    shape = tuple(np.atleast_1d(shape)) if not isinstance(shape, tuple) else shape
    n = int(np.prod(shape, dtype=np.int64))
    k = raw_words(rng, n) >> np.uint64(11)
    return ((k.astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)).reshape(shape)


def gumbel_from_uniform(u) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return -np.log(-np.log(u))


def gumbel_sample(shape, rng: RngState) -> Tensor:
    """Standard Gumbel(0, 1) draws of the given shape."""
    return Tensor(gumbel_from_uniform(uniform_open(rng, shape)))


def permutation(rng: RngState, n: int) -> np.ndarray:
    """Uniform random permutation of ``range(n)`` (sort by random keys)."""
    keys = raw_words(rng, n)
    return np.argsort(keys, kind="stable")
