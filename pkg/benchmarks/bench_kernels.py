"""Time the compiled rolling-window kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--length N] [--repeat R]
"""

import argparse
import timeit

import numpy as np

from epiphase import _pykernels

try:
    from epiphase import _kernels
except ImportError:
    _kernels = None

WINDOW = 14


def cases(x):
    return {
        "rolling_moments": lambda k: k.rolling_moments(x, WINDOW),
        "rolling_apen": lambda k: k.rolling_apen(x, WINDOW, 2, 0.2),
        "rolling_shannon": lambda k: k.rolling_shannon(x, WINDOW, 5),
    }


def best_of(fn, repeat):
    timer = timeit.Timer(fn)
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--length", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    if _kernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16} {'length':>8} {'python ms':>11} {'cython ms':>11} {'speedup':>8}")
    for n in args.length:
        x = rng.poisson(150, n).astype(np.float64)
        for name, call in cases(x).items():
            py = best_of(lambda: call(_pykernels), args.repeat)
            if _kernels is None:
                print(f"{name:<16} {n:>8} {1e3 * py:>11.3f} {'-':>11} {'-':>8}")
                continue
            cy = best_of(lambda: call(_kernels), args.repeat)
            print(f"{name:<16} {n:>8} {1e3 * py:>11.3f} {1e3 * cy:>11.3f} {py / cy:>7.1f}x")


if __name__ == "__main__":
    main()
