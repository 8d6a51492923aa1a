#!/usr/bin/env python3
"""Timing comparison of the compiled kernel core against the numpy fallback.

Covers the three kernels plus one full training epoch for each model kind,
at the shapes that dominate real runs: large batched affines for the
SC stack, many small affines for the stepped recurrent cell.

    python benchmarks/bench_backends.py [--reps N] [--quick]
"""

import argparse
import math
import time

import numpy as np

from growprune import _core
from growprune.models import build_edge, build_server
from growprune.numerics import OptimizerState
from growprune.synthesis import SplitArrays, seed_init, train_epoch


def best_of(fn, reps):
    best = math.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_under(backend, fn, reps):
    prev = _core.set_backend(backend)
    try:
        fn()  # warm up
        return best_of(fn, reps)
    finally:
        _core.set_backend(prev)


def kernel_cases():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((256, 3712))
    w = rng.standard_normal((1024, 3712))
    b = rng.standard_normal(1024)
    gy = rng.standard_normal((256, 1024))
    xs = rng.standard_normal((64, 136))
    ws = rng.standard_normal((96, 136))
    bs = rng.standard_normal(96)
    gys = rng.standard_normal((64, 96))
    value = rng.standard_normal((1024, 3712))
    vel = np.zeros_like(value)
    grad = rng.standard_normal(value.shape)
    mask = rng.integers(0, 2, size=value.shape).astype(np.uint8)
    value *= mask

    def edge_fwd():
        for _ in range(60):
            _core.affine(xs, ws, bs)

    def edge_bwd():
        for _ in range(60):
            _core.affine_backward(gys, xs, ws)

    return [
        ("affine fwd  256x3712 -> 1024", lambda: _core.affine(x, w, b)),
        ("affine bwd  256x3712 -> 1024", lambda: _core.affine_backward(gy, x, w)),
        ("affine fwd  64x136 -> 96, 60 calls", edge_fwd),
        ("affine bwd  64x136 -> 96, 60 calls", edge_bwd),
        ("momentum    1024x3712 masked",
         lambda: _core.momentum_update(value, vel, grad, mask, 1e-4, 0.9)),
    ]


def epoch_cases():
    rng = np.random.default_rng(1)
    sx = rng.standard_normal((1024, 3712))
    sy = rng.integers(0, 2, size=1024)
    server_data = SplitArrays(sx, sy, sx[:64], sy[:64])

    def server_epoch():
        model = build_server(2, np.random.default_rng(2), hidden_widths=(64, 32),
                             dropout_rate=0.0)
        seed_init(model, 0.2, np.random.default_rng(3))
        train_epoch(model, server_data, OptimizerState(0.01, 0.9), 256,
                    np.random.default_rng(4))

    ex = rng.standard_normal((512, 60, 40))
    ey = rng.integers(0, 2, size=512)
    edge_data = SplitArrays(ex, ey, ex[:64], ey[:64])

    def edge_epoch():
        model = build_edge(2, np.random.default_rng(5), state_width=16,
                           hidden_width=16, dropout_rate=0.0)
        seed_init(model, 0.2, np.random.default_rng(6))
        train_epoch(model, edge_data, OptimizerState(0.01, 0.9), 64,
                    np.random.default_rng(7))

    return [("train epoch, server 3712-64-32-2", server_epoch),
            ("train epoch, edge state 16, T=60", edge_epoch)]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=5, help="repetitions (best-of)")
    parser.add_argument("--quick", action="store_true", help="kernels only, 2 reps")
    args = parser.parse_args()
    reps = 2 if args.quick else args.reps

    backends = _core.available_backends()
    print(f"backends: {', '.join(backends)} (numpy {np.__version__})")
    cases = kernel_cases()
    if not args.quick:
        cases += epoch_cases()

    width = max(len(name) for name, _ in cases) + 2
    header = "case".ljust(width) + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name, fn in cases:
        times = {b: run_under(b, fn, reps) for b in backends}
        line = name.ljust(width) + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{times['python'] / times['cython']:>9.2f}x"
        print(line)


if __name__ == "__main__":
    main()
