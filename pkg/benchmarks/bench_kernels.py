#!/usr/bin/env python3
"""Time the hot kernels on every available backend.

Run after building the extension (`pip install -e . --no-build-isolation`):

    python benchmarks/bench_kernels.py [--repeat 5]

The two backends compute identical math (same per-element evaluation order),
so this is purely a speed comparison: per-pixel warp loops, the Poisson
matvec inside conjugate gradient, and the Monte Carlo unprojection loop.
"""

import argparse
import math
import time

import numpy as np

from gazekit._kernels import available_backends


def timeit(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_warp(backend, repeat):
    rng = np.random.default_rng(0)
    img = rng.random((480, 640, 3))
    m = np.array([[0.8, 0.05, 20.0], [-0.03, 0.9, 10.0], [1e-5, -2e-5, 1.0]])
    m_inv = np.linalg.inv(m)
    return timeit(lambda: backend.warp_bilinear(img, m_inv, 480, 640), repeat)


def bench_matvec(backend, repeat):
    rng = np.random.default_rng(1)
    side = 256
    n = side * side
    idx = np.arange(n).reshape(side, side)
    nbr = np.full((n, 4), -1, dtype=np.int64)
    nbr[idx[1:, :].ravel(), 0] = idx[:-1, :].ravel()
    nbr[idx[:-1, :].ravel(), 1] = idx[1:, :].ravel()
    nbr[idx[:, 1:].ravel(), 2] = idx[:, :-1].ravel()
    nbr[idx[:, :-1].ravel(), 3] = idx[:, 1:].ravel()
    x = rng.random(n)

    def run():
        for _ in range(50):
            backend.poisson_matvec(x, nbr)

    return timeit(run, repeat)


def bench_mc(backend, repeat):
    rng = np.random.default_rng(2)
    n = 1_000_000
    u = rng.uniform(-50, 50, n) + 30.0
    v = rng.uniform(-50, 50, n)
    gx, gy = -0.3, 0.1
    gz = -math.sqrt(1.0 - gx * gx - gy * gy)
    return timeit(lambda: backend.mc_unproject_errors(0, u, v, 100.0, gx, gy, gz, -1.0),
                  repeat)


BENCHES = [
    ("bilinear warp 640x480x3", bench_warp),
    ("poisson matvec 256^2 x50", bench_matvec),
    ("mc unproject 1e6 samples", bench_mc),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(sorted(backends))}")
    header = f"{'kernel':>28} " + " ".join(f"{name:>12}" for name in sorted(backends))
    if len(backends) > 1:
        header += f" {'speedup':>9}"
    print(header)
    for label, bench in BENCHES:
        times = {name: bench(impl, args.repeat) for name, impl in backends.items()}
        row = f"{label:>28} " + " ".join(f"{times[name] * 1e3:>9.2f} ms"
                                         for name in sorted(backends))
        if "native" in times and "python" in times:
            row += f" {times['python'] / times['native']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
