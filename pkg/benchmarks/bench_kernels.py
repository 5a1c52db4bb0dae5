"""Compare the compiled and pure-Python kernel backends.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
timed on the same inputs under both backends and the outputs are checked for
equality before timing is reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from pic_shuffle import kernels
from pic_shuffle.tasks.matching import distance_matrix, radius_adjacency


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng: np.random.Generator):
    a = rng.uniform(-1, 1, (713, 2))
    b = rng.uniform(-1, 1, (532, 2))
    cost = np.ascontiguousarray(np.sqrt(distance_matrix(b, a)))
    indptr, indices = radius_adjacency(a, b, 0.4)
    pts = rng.uniform(-1, 1, (10_000, 2))
    return {
        "linear_assignment 532x713": lambda k: k.linear_assignment(cost),
        "hopcroft_karp 713x532 tau=0.4": lambda k: k.hopcroft_karp(len(a), len(b), indptr, indices),
        "grid_radius_pairs n=1e4 tau=0.2": lambda k: k.grid_radius_pairs(pts, 0.2),
    }


def _same(x, y) -> bool:
    if isinstance(x, tuple):
        # Pair lists may come back in any order.
        ox, oy = np.lexsort(x[::-1]), np.lexsort(y[::-1])
        return all(np.array_equal(p[ox], q[oy]) for p, q in zip(x, y))
    return np.array_equal(x, y)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    backends = {name: kernels.get_backend(name) for name in kernels.available_backends()}
    if "cython" not in backends:
        print("compiled backend not built; only the Python fallback is timed")
    print(f"{'kernel':34s}" + "".join(f"{name:>12s}" for name in backends) + f"{'speedup':>10s}")
    for label, run in _cases(np.random.default_rng(args.seed)).items():
        outputs = {name: run(mod) for name, mod in backends.items()}
        if "cython" in outputs and not _same(outputs["python"], outputs["cython"]):
            raise SystemExit(f"backends disagree on {label}")
        times = {name: _best_of(lambda m=mod: run(m), args.repeat) for name, mod in backends.items()}
        speed = f"{times['python'] / times['cython']:9.1f}x" if "cython" in times else f"{'-':>10s}"
        print(f"{label:34s}" + "".join(f"{times[n] * 1e3:10.2f}ms" for n in backends) + speed)


if __name__ == "__main__":
    main()
