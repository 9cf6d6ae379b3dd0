"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--postings N] [--times N] [--frames N]

The numpy fallback is what you get with TEMPORAG_KERNELS=numpy; this script
imports both variants directly so one process measures the pair.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from temporag import _kernels


def timeit(fn, n_runs=7, n_warmup=2):
    for _ in range(n_warmup):
        fn()
    samples = []
    for _ in range(n_runs):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return np.mean(samples) * 1000, np.std(samples) * 1000


def bench_bm25(n_postings, n_docs=5000):
    rng = np.random.default_rng(0)
    positions = rng.integers(0, n_docs, size=n_postings).astype(np.int64)
    tfs = rng.integers(1, 9, size=n_postings).astype(np.float64)
    idfs = rng.uniform(0.05, 3.0, size=n_postings)
    dl_norm = rng.uniform(0.3, 3.0, size=n_docs)

    def run_numba():
        _kernels.bm25_accumulate_numba(np.zeros(n_docs), positions, tfs, idfs, dl_norm, 1.2)

    def run_numpy():
        _kernels.bm25_accumulate_numpy(np.zeros(n_docs), positions, tfs, idfs, dl_norm, 1.2)

    return run_numba, run_numpy


def bench_decay(n_times):
    rng = np.random.default_rng(1)
    times = rng.uniform(0, 1, size=n_times)

    def run_numba():
        _kernels.decay_multipliers_numba(times, 1.0, 0.0, 0.5, 1.0, 1.0, 1.0)

    def run_numpy():
        _kernels.decay_multipliers_numpy(times, 1.0, 0.0, 0.5, 1.0, 1.0, 1.0)

    return run_numba, run_numpy


def bench_entropy(n_frames):
    rng = np.random.default_rng(2)
    sims = rng.uniform(-1, 1, size=n_frames)

    def run_numba():
        _kernels.entropy_alpha_numba(sims)

    def run_numpy():
        _kernels.entropy_alpha_numpy(sims)

    return run_numba, run_numpy


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--postings", type=int, default=2_000_000)
    parser.add_argument("--times", type=int, default=2_000_000)
    parser.add_argument("--frames", type=int, default=1_000_000)
    args = parser.parse_args()

    if not _kernels.USING_NUMBA:
        print("numba backend not active (TEMPORAG_KERNELS=numpy or numba missing);")
        print("nothing to compare.")
        return

    cases = [
        (f"bm25_accumulate ({args.postings:,} postings)", bench_bm25(args.postings)),
        (f"decay_multipliers ({args.times:,} times)", bench_decay(args.times)),
        (f"entropy_alpha ({args.frames:,} frames)", bench_entropy(args.frames)),
    ]
    print(f"{'kernel':<42} {'numba (ms)':>14} {'numpy (ms)':>14} {'speedup':>8}")
    for name, (run_numba, run_numpy) in cases:
        nb_mean, nb_std = timeit(run_numba)
        np_mean, np_std = timeit(run_numpy)
        speedup = np_mean / nb_mean if nb_mean > 0 else float("inf")
        print(
            f"{name:<42} {nb_mean:>8.2f}±{nb_std:<5.2f} {np_mean:>8.2f}±{np_std:<5.2f} {speedup:>7.2f}x"
        )


if __name__ == "__main__":
    main()
