"""Time the numba kernels against their numpy twins.

    python benchmarks/bench_kernels.py [--repeat 5] [--draws 2400]

Numba compile time is reported separately from the steady-state timings.
Both backends must give identical results; the script exits non-zero if not.
"""

from __future__ import annotations

import argparse
import sys
import time
import timeit

import numpy as np

from serfsim import kernels
from serfsim.fixtures import load_fixture
from serfsim.quantreg import build_design, initial_basis


def best_of(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def simplex_case(tau: float):
    d = build_design(load_fixture())
    X = np.ascontiguousarray(d.X / np.abs(d.X).max(axis=0))
    return X, d.y, tau, initial_basis(X), 50 * len(d.y) + 1000


def paths_case(draws: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    bii = rng.random((draws, 24))
    noise = np.zeros((draws, 24))
    return 20.0, 0.7, -69.09, 1.5, bii, noise, 200.0, 49


def bench(name, numba_fn, numpy_fn, args, repeat, same):
    t0 = time.perf_counter()
    ref = numba_fn(*args)
    compile_s = time.perf_counter() - t0
    other = numpy_fn(*args)
    if not same(ref, other):
        print(f"{name}: backends disagree", file=sys.stderr)
        return False
    t_numba = best_of(lambda: numba_fn(*args), repeat)
    t_numpy = best_of(lambda: numpy_fn(*args), repeat)
    print(f"{name:<28} numba {t_numba * 1e3:9.3f} ms   numpy {t_numpy * 1e3:9.3f} ms   "
          f"speedup {t_numpy / t_numba:6.1f}x   (first call incl. compile {compile_s:.2f} s)")
    return True


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--draws", type=int, default=2400, help="paths per yield_paths call")
    args = ap.parse_args(argv)

    if kernels.rq_simplex_numba is None:
        print("numba is unavailable (or SERFSIM_NO_NUMBA is set); nothing to compare", file=sys.stderr)
        return 1

    ok = True
    for tau in (0.1, 0.5, 0.9):
        ok &= bench(
            f"rq_simplex 752x10 tau={tau}",
            kernels.rq_simplex_numba, kernels.rq_simplex_numpy, simplex_case(tau), args.repeat,
            lambda a, b: np.array_equal(a[0], b[0]) and a[4] == b[4],
        )
    ok &= bench(
        f"yield_paths {args.draws}x24",
        kernels.yield_paths_numba, kernels.yield_paths_numpy, paths_case(args.draws), args.repeat,
        lambda a, b: np.array_equal(a[0], b[0]) and a[1] == b[1],
    )
    return 0 if ok else 2


if __name__ == "__main__":
    raise SystemExit(main())
