"""Compare the compiled and pure-Python ROUGE kernels.

    python benchmarks/bench_kernels.py [--length 400] [--repeat 20]
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ease import kernels


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--length", type=int, default=400)
    parser.add_argument("--vocab", type=int, default=60)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    a = rng.integers(0, args.vocab, args.length).astype(np.int64)
    b = rng.integers(0, args.vocab, args.length).astype(np.int64)
    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    else:
        print("compiled extension not built; timing the Python fallback only")

    cases = {
        "lcs_length": lambda m: m.lcs_length(a, b),
        "ngram_overlap n=1": lambda m: m.ngram_overlap(a, b, 1),
        "ngram_overlap n=2": lambda m: m.ngram_overlap(a, b, 2),
    }
    print(f"sequences of {args.length} tokens, best of {args.repeat} runs")
    print(f"{'kernel':<20}" + "".join(f"{k:>14}" for k in backends) + f"{'speedup':>10}")
    for label, fn in cases.items():
        results = {k: fn(m) for k, m in backends.items()}
        if len(set(map(str, results.values()))) != 1:
            raise SystemExit(f"{label}: backends disagree: {results}")
        times = {k: min(timeit.repeat(lambda m=m: fn(m), number=1, repeat=args.repeat)) for k, m in backends.items()}
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else ""
        print(f"{label:<20}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times.values()) + speed)


if __name__ == "__main__":
    main()
