"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The first numba call (compilation, or cache load) is excluded.
"""
import argparse
import time

import numpy as np

from wigneravg import kernels
from wigneravg._accel import HAVE_NUMBA


def best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    n = 128
    K = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    y = np.linspace(-4, 4, n, endpoint=False)
    xi = rng.uniform(-20, 20, size=n)
    yield "direct_wigner 128^3", "_direct_wigner", (K, y, xi, y[1] - y[0])

    V = rng.normal(size=(64, 2048)) + 1j * rng.normal(size=(64, 2048))
    yield "gram_schmidt 64x2048", "_mgs", (V, 0.01, 1e-10)

    shape = (1024, 1024)
    F = rng.uniform(0.5, 2.0, shape)
    d = [rng.normal(size=shape) for _ in range(4)]
    mask = rng.uniform(size=shape) > 0.2
    yield "log_quotient 1024^2", "_tatarskii", (F, *d, 0.1, 0.3, mask)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':24s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>8s}")
    for label, stem, inputs in cases(rng):
        t_np = best_of(getattr(kernels, stem + "_numpy"), inputs, args.repeat)
        if HAVE_NUMBA:
            fn = getattr(kernels, stem + "_numba")
            fn(*inputs)
            t_nb = best_of(fn, inputs, args.repeat)
            print(f"{label:24s} {1e3 * t_np:12.2f} {1e3 * t_nb:12.2f} {t_np / t_nb:8.1f}")
        else:
            print(f"{label:24s} {1e3 * t_np:12.2f} {'n/a':>12s}")


if __name__ == "__main__":
    main()
