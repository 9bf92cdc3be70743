"""Benchmark the numba hot kernels against their pure-numpy twins.

Usage:
    python benchmarks/bench_kernels.py [--json OUT.json]

The dispatch respects BRIDGEMIX_NO_NUMBA; this script times both code paths
directly regardless of the flag, and also times one end-to-end exact-drift
Euler sweep (where the weight kernel sits on the hot path).
"""

import argparse
import json
import time

import numpy as np

from bridgemix import ConstantBeta, EmpiricalStart, ExactBridgeMixtureField, SdeSpec, run_paths
from bridgemix import accel
from bridgemix.datasets import three_atoms


def best_of(fn, reps=5):
    best = np.inf
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_weights(rng):
    out = {}
    for n_paths, n_atoms, dim in ((20_000, 3, 1), (4_000, 32, 2), (256, 100, 64)):
        states = rng.standard_normal((n_paths, dim))
        means = rng.standard_normal((n_atoms, dim))
        if accel.NUMBA_ENABLED:
            accel._identity_weights_numba(states, means, 0.5)  # compile
            t_numba = best_of(lambda: accel._identity_weights_numba(states, means, 0.5))
        else:
            t_numba = None
        t_numpy = best_of(lambda: accel.identity_weights_numpy(states, means, 0.5))
        out[f"P{n_paths}_N{n_atoms}_D{dim}"] = {
            "numba_s": t_numba,
            "numpy_s": t_numpy,
            "speedup": None if t_numba is None else t_numpy / t_numba,
        }
    return out


def bench_variogram(rng):
    out = {}
    for size in (32, 64, 128):
        img = rng.standard_normal((size, size))
        offs_i, offs_j, bins = [], [], []
        for di in range(size):
            for dj in range(1 if di == 0 else -(size - 1), size):
                h = np.hypot(di / size, dj / size)
                if h == 0 or h > 0.5:
                    continue
                offs_i.append(di)
                offs_j.append(dj)
                bins.append(min(int(h / 0.5 * 16), 15))
        offs_i = np.array(offs_i, dtype=np.int64)
        offs_j = np.array(offs_j, dtype=np.int64)
        bins = np.array(bins, dtype=np.int64)
        if accel.NUMBA_ENABLED:
            accel._variogram_accumulate_numba(img, offs_i, offs_j, bins, 16)
            t_numba = best_of(
                lambda: accel._variogram_accumulate_numba(img, offs_i, offs_j, bins, 16),
                reps=3,
            )
        else:
            t_numba = None
        t_numpy = best_of(
            lambda: accel.variogram_accumulate_numpy(img, offs_i, offs_j, bins, 16),
            reps=3,
        )
        out[f"{size}x{size}"] = {
            "numba_s": t_numba,
            "numpy_s": t_numpy,
            "speedup": None if t_numba is None else t_numpy / t_numba,
        }
    return out


def bench_end_to_end():
    sde = SdeSpec(kind="bm", beta=ConstantBeta(1.0), tau=1.0, dim=1)
    data = three_atoms()
    coupling = EmpiricalStart(data, data)
    field = ExactBridgeMixtureField(sde, coupling)
    run_paths(field, coupling, 64, 256, seed=0)  # warm-up/compile
    return best_of(lambda: run_paths(field, coupling, 512, 4000, seed=1), reps=3)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--json", default=None)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    results = {
        "numba_enabled": accel.NUMBA_ENABLED,
        "posterior_weights": bench_weights(rng),
        "variogram_accumulate": bench_variogram(rng),
        "euler_sweep_4000x512_s": bench_end_to_end(),
    }
    print(json.dumps(results, indent=2))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
