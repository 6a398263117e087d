#!/usr/bin/env python3
"""Benchmark the permutation replicate kernels: compiled vs pure NumPy.

Runs the same replicate workload through both backends, checks that their
integer exceedance counts agree exactly, and reports per-replicate timings.

    python benchmarks/bench_permutation.py --n 47 --d 11 --b 2000
"""

import argparse
import time

import numpy as np

from copartial import available_backends, close
from copartial._backend import resolve_backend
from copartial._kernels import cutoff_grid


def make_data(n, d, seed):
    rng = np.random.default_rng(seed)
    X = close(np.exp(rng.normal(size=(n, d))))
    return X.log_values()


def run_backend(name, base, b, seed, cutoffs, shrinkage, pipeline):
    _, kernel = resolve_backend(name)
    t0 = time.perf_counter()
    pos, neg, failed = kernel.replicate_counts(
        base, b, seed, cutoffs, shrinkage=shrinkage, pipeline=pipeline
    )
    elapsed = time.perf_counter() - t0
    return elapsed, pos, neg, failed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=47, help="samples")
    parser.add_argument("--d", type=int, default=11, help="parts")
    parser.add_argument("--b", type=int, default=2000, help="replicates")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--step", type=float, default=0.001)
    parser.add_argument("--shrinkage", type=float, default=0.0)
    parser.add_argument("--pipeline", choices=["partial", "correlation"],
                        default="partial")
    args = parser.parse_args()

    base = make_data(args.n, args.d, args.seed)
    cutoffs = cutoff_grid(args.step)
    backends = available_backends()
    print(f"workload: N={args.n} D={args.d} B={args.b} "
          f"pipeline={args.pipeline} shrinkage={args.shrinkage}")
    print(f"backends: {backends}")

    results = {}
    for name in backends:
        # warm up once so import/JIT costs stay out of the timing
        run_backend(name, base, min(50, args.b), args.seed, cutoffs,
                    args.shrinkage, args.pipeline)
        elapsed, pos, neg, failed = run_backend(
            name, base, args.b, args.seed, cutoffs, args.shrinkage,
            args.pipeline,
        )
        results[name] = (elapsed, pos, neg, failed)
        print(f"  {name:>6}: {elapsed:8.3f} s total, "
              f"{1e6 * elapsed / args.b:8.1f} us/replicate, "
              f"failed={failed}")

    if len(results) == 2:
        (e_fast, pos_f, neg_f, _) = results["cython"]
        (e_slow, pos_n, neg_n, _) = results["numpy"]
        same = (np.array_equal(pos_f, pos_n)
                and np.array_equal(neg_f, neg_n))
        print(f"  counts identical: {same}")
        print(f"  speedup: {e_slow / e_fast:.2f}x")
        if not same:
            raise SystemExit("backend count mismatch")


if __name__ == "__main__":
    main()
