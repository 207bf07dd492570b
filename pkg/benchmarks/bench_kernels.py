"""Benchmark the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Covers the four hot paths: sequential channel sampling, keyed codeword
generation, codeword-scan count tables, and the exhaustive AEP pair
enumeration.  The first numba call per kernel includes JIT compilation;
it is timed separately as "warmup".
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from markovcoord import kernels
from markovcoord.rng import derive_keys, make_cdf, uniforms


def timeit(fn, repeat):
    fn()  # warmup / jit
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    chan_cdf = make_cdf(rng.dirichlet(np.ones(2), size=4))          # (nx*ny, ny)
    w_cdf = make_cdf(rng.dirichlet(np.ones(2), size=2))             # (nx, nw)
    x_seq = rng.integers(0, 2, size=100_000).astype(np.int64)
    keys = derive_keys(12345, np.arange(4096, dtype=np.int64))
    row_idx = rng.integers(0, 2, size=300).astype(np.int64)
    words = rng.integers(0, 2, size=(4096, 300)).astype(np.int64)
    base = rng.integers(0, 4, size=300).astype(np.int64) * 2
    xdig = kernels.digit_rows(2 ** 10, 2, 10)
    ydig = kernels.digit_rows(2 ** 10, 2, 10)
    logpx = np.log2(np.array([0.6, 0.4]))
    w_table = rng.dirichlet(np.ones(2), size=(2, 2))
    logw = np.transpose(np.log2(w_table), (1, 0, 2)).ravel()
    support = np.ones(8, dtype=bool)
    q = rng.dirichlet(np.ones(8))

    cases = {
        "markov_path (n=1e5)":
            lambda: kernels.markov_path(x_seq, 0, chan_cdf, 42),
        "word_symbols (4096x300)":
            lambda: kernels.word_symbols(keys, row_idx, w_cdf),
        "offset_counts (4096x300)":
            lambda: kernels.offset_counts(words, base, 2, 16),
        "aep_enumerate (2^20 pairs)":
            lambda: kernels.aep_enumerate(xdig, ydig, 0, logpx, logw, support,
                                          q, 10, 2, 2, 0.3),
    }

    results = {}
    for backend in ("numpy", "numba"):
        try:
            kernels.set_backend(backend)
        except ImportError:
            print(f"{backend}: not available, skipping")
            continue
        for name, fn in cases.items():
            t_warm = time.perf_counter()
            fn()
            warmup = time.perf_counter() - t_warm
            results[(backend, name)] = (timeit(fn, args.repeat), warmup)

    print(f"{'kernel':<28} {'numpy':>10} {'numba':>10} {'speedup':>8} {'jit':>7}")
    for name in cases:
        t_np = results.get(("numpy", name), (float('nan'),))[0]
        t_nb, warm = results.get(("numba", name), (float("nan"), float("nan")))
        print(f"{name:<28} {t_np*1e3:>8.2f}ms {t_nb*1e3:>8.2f}ms "
              f"{t_np/t_nb:>7.1f}x {warm:>6.2f}s")


if __name__ == "__main__":
    main()
