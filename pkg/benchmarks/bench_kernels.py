"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from stokes_biot import _kernels
from stokes_biot.forms import FAR_GAUSS, NEAR_GAUSS, _gauss01


def bench(fn, args, repeat):
    fn(*args)  # warm up (and trigger compilation)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    opts = ap.parse_args()
    rules = (*_gauss01(FAR_GAUSS), *_gauss01(NEAR_GAUSS))
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'size':>6}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>9}{'max diff':>11}")
    for n in (16, 64, 256):
        s = np.linspace(0.0, 1.0, n + 1)
        args = (s, *rules)
        tn = bench(_kernels.slobodeckij_gram_numba, args, opts.repeat)
        tp = bench(_kernels.slobodeckij_gram_numpy, args, opts.repeat)
        diff = np.abs(_kernels.slobodeckij_gram_numba(*args)
                      - _kernels.slobodeckij_gram_numpy(*args)).max()
        print(f"{'slobodeckij_gram':<18}{n:>6}{tn:>12.2e}{tp:>12.2e}{tp / tn:>9.1f}{diff:>11.1e}")
    for n in (200, 800):
        A = rng.normal(size=(n, n)) + n * np.eye(n)
        B = rng.normal(size=(n, 1))
        args = (A, B, 1e-14)
        tn = bench(_kernels.gauss_solve_numba, args, opts.repeat)
        tp = bench(_kernels.gauss_solve_numpy, args, opts.repeat)
        diff = np.abs(_kernels.gauss_solve_numba(*args)[0] - _kernels.gauss_solve_numpy(*args)[0]).max()
        print(f"{'gauss_solve':<18}{n:>6}{tn:>12.2e}{tp:>12.2e}{tp / tn:>9.1f}{diff:>11.1e}")


if __name__ == "__main__":
    main()
