"""Time the compiled kernels against their numpy twins.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from beliefbo import _kernels_py

try:
    from beliefbo import _kernels_ext
except ImportError:
    _kernels_ext = None


def cases(rng):
    d, m, L = 4, 1024, 128
    psi = rng.standard_normal((m, d)) * 3
    b = rng.uniform(0, 2 * np.pi, m)
    W = rng.standard_normal((L, m))
    X = rng.random((1024, d))
    idx = rng.integers(0, L, 1024)
    C = rng.standard_normal((64, 128))
    Y = np.repeat(C, 4, axis=1) + 0.1 * rng.standard_normal((64, 512))
    lw = np.full((64, 128), -np.log(128))
    return {
        "cos_features 1024x1024 (d=4)": lambda k: k.cos_features(X, psi, b, 0.04),
        "paired_value_grad 1024 pts, m=1024": lambda k: k.paired_value_grad(X, idx, W, psi, b, 0.04),
        "mixture_logpdf 64x512 vs 128": lambda k: k.mixture_logpdf(Y, C, lw, 0.1),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy ms':>10s} {'cython ms':>10s} {'speed-up':>9s}")
    for name, fn in cases(rng).items():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=3, repeat=args.repeat)) / 3 * 1e3
        if _kernels_ext is None:
            print(f"{name:40s} {t_py:10.2f} {'n/a':>10s} {'':>9s}")
            continue
        t_ext = min(timeit.repeat(lambda: fn(_kernels_ext), number=3, repeat=args.repeat)) / 3 * 1e3
        print(f"{name:40s} {t_py:10.2f} {t_ext:10.2f} {t_py / t_ext:8.1f}x")


if __name__ == "__main__":
    main()
