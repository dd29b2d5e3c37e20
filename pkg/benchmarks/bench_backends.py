"""Timing comparison of the numba kernels against their numpy fallbacks.

Run from the repo root:

    python3 benchmarks/bench_backends.py

Both code paths live in parkour.kernels; this script calls the private
implementations directly so one process can time both.
"""

import time

import numpy as np

from parkour import kernels as K
from parkour.dynamics import DynamicsConfig


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm (numba compiles here)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_bilinear(h):
    rng = np.random.default_rng(0)
    xs = rng.uniform(-1, 5, 200_000)
    ys = rng.uniform(-1, 4, 200_000)
    out = np.empty_like(xs)
    a = timeit(K._bilinear_loop, h, 0.025, 0.0, 0.0, xs, ys, out)
    b = timeit(K._bilinear_np, h, 0.025, 0.0, 0.0, xs, ys, out)
    return "bilinear_batch (200k pts)", a, b


def bench_edge_mask(h):
    offs = np.array([(dx, dy) for dx in range(-3, 4) for dy in range(-3, 4)
                     if (dx * dx + dy * dy) * 0.025 ** 2 <= 0.05 ** 2 + 1e-12],
                    dtype=np.int64)

    def run_nb(h, offs):
        K._dilate_loop(K._discontinuity_loop(h, 0.05), offs)

    def run_np(h, offs):
        K._dilate_np(K._discontinuity_np(h, 0.05), offs)

    a = timeit(run_nb, h, offs)
    b = timeit(run_np, h, offs)
    return f"edge_mask ({h.shape[0]}x{h.shape[1]})", a, b


def bench_raycast(h):
    rng = np.random.default_rng(1)
    origin = np.array([2.0, 2.0, 0.9])
    dirs = rng.normal(size=(5046, 3))
    dirs[:, 2] = -np.abs(dirs[:, 2])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    out = np.empty(5046)
    a = timeit(K._raycast_loop, h, 0.025, 0.0, 0.0, origin, dirs, 0.05, 2.0,
               0.01, 8, out)
    b = timeit(K._raycast_np, h, 0.025, 0.0, 0.0, origin, dirs, 0.05, 2.0,
               0.01, 8, out)
    return "raycast (one 58x87 frame)", a, b


def bench_dynamics(h):
    rng = np.random.default_rng(2)
    n = 256
    P = K.pack_dyn_params(DynamicsConfig())
    pos = np.column_stack([rng.uniform(0, 4, n), rng.uniform(0, 3, n),
                           rng.uniform(0.2, 0.4, n)])
    args = (pos, rng.uniform(-1, 1, (n, 3)), rng.uniform(-3, 3, n),
            rng.uniform(-1, 1, n), pos[:, None, :] + rng.uniform(-0.3, 0.3, (n, 4, 3)),
            rng.random((n, 4)) < 0.5, rng.uniform(-1, 1, (n, 12)),
            np.ones(n), np.ones(n), h, 0.025, 0.0, 0.0, P)

    def run(fn):
        outs = (np.empty((n, 3)), np.empty((n, 3)), np.empty(n), np.empty(n),
                np.empty(n), np.empty(n), np.empty((n, 4, 3)),
                np.empty((n, 4), dtype=np.bool_))
        fn(*args, *outs)

    a = timeit(lambda: run(K._dyn_step_loop))
    b = timeit(lambda: run(K._dyn_step_np))
    return "dynamics step (256 robots)", a, b


def main():
    rng = np.random.default_rng(3)
    h = np.ascontiguousarray(rng.normal(0, 0.05, (240, 160)).cumsum(axis=0))
    print(f"numba available and enabled: {K.USE_NUMBA}")
    print(f"{'kernel':<28} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for bench in (bench_bilinear, bench_edge_mask, bench_raycast, bench_dynamics):
        name, a, b = bench(h)
        print(f"{name:<28} {a * 1e3:>10.2f} {b * 1e3:>10.2f} {b / a:>7.1f}x")


if __name__ == "__main__":
    main()
