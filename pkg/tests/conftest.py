import numpy as np
import pytest

from ease.abstractor import AbstractorConfig
from ease.corpus import build_vocab, collate, encode
from ease.extractor import ExtractorConfig
from ease.model import ModelParameters

DOCS = [
    ("w1 w2 w3. w4 w5. w6 w7 w8 w9.", "w2 w5"),
    ("w3 w1. w9 w9 w2. w5.", "w9 w1"),
]


def tiny_model(level="sentence", scheme="embed-mix", share=False, seed=0, pi=0.5, tau=0.5, d=8, heads=2,
               layers=1, vocab_size=None):
    ext = ExtractorConfig(num_layers=layers, model_dim=d, num_heads=heads, ffn_dim=2 * d, max_positions=32,
                          level=level, tau=tau, sparsity_pi=pi, min_sentences=1)
    abs_ = AbstractorConfig(num_layers=layers, model_dim=d, num_heads=heads, ffn_dim=2 * d, max_positions=32,
                            mask_scheme=scheme, share_encoder=share)
    vocab = build_vocab([s for pair in DOCS for s in pair], 32)
    params = ModelParameters.initialize(ext, abs_, vocab_size or len(vocab), seed)
    return params, vocab


def tiny_batch(vocab, level="sentence"):
    return collate([encode(s, t, vocab, level) for s, t in DOCS])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
