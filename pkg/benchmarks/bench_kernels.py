#!/usr/bin/env python3
"""Time the numba and pure-numpy kernel paths against each other.

Runs the superpixel assignment pass and the Gaussian deposition kernel on
synthetic data of configurable size, checks that the two implementations
agree, and prints a timing table. The installed package picks its path from
DIGCROWD_DISABLE_NUMBA; this script calls both implementations directly.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from digcrowd import _kernels
from digcrowd._kernels import MASS_QUANTUM

if not _kernels.NUMBA_ENABLED:
    raise SystemExit(
        "numba path unavailable (DIGCROWD_DISABLE_NUMBA set or numba missing); "
        "nothing to compare"
    )


def _timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_assign(width: int, height: int, clusters: int, repeat: int):
    rng = np.random.default_rng(0)
    depth = rng.random((height, width))
    step = float(np.sqrt(depth.size / clusters))
    k = int(round(width / step)) * int(round(height / step))
    feat = rng.random(k)
    cpx = rng.uniform(0, width, k)
    cpy = rng.uniform(0, height, k)
    ratio2 = (0.1 / step) ** 2

    def fresh():
        return np.full((height, width), np.inf), np.full((height, width), -1, np.int32)

    # warm up the JIT before timing
    d2, ids = fresh()
    _kernels._assign_windows_numba(depth, feat, cpx, cpy, ratio2, step, d2, ids)

    d2_nb, id_nb = fresh()
    t_nb = _timeit(
        lambda: _kernels._assign_windows_numba(depth, feat, cpx, cpy, ratio2, step, d2_nb, id_nb),
        repeat,
    )
    d2_np, id_np = fresh()
    t_np = _timeit(
        lambda: _kernels._assign_windows_numpy(depth, feat, cpx, cpy, ratio2, step, d2_np, id_np),
        repeat,
    )
    fresh_nb = fresh()
    _kernels._assign_windows_numba(depth, feat, cpx, cpy, ratio2, step, *fresh_nb)
    fresh_np = fresh()
    _kernels._assign_windows_numpy(depth, feat, cpx, cpy, ratio2, step, *fresh_np)
    agree = np.array_equal(fresh_nb[1], fresh_np[1])
    return t_nb, t_np, agree


def bench_deposit(width: int, height: int, heads: int, repeat: int):
    rng = np.random.default_rng(1)
    xs = rng.uniform(0, width, heads)
    ys = rng.uniform(0, height, heads)
    sigmas = rng.uniform(1.0, 6.0, heads)
    truncs = np.full(heads, 3.0)
    valid = np.ones((height, width), dtype=np.uint8)

    field = np.zeros((height, width))
    _kernels._deposit_gaussians_numba(field, xs, ys, sigmas, truncs, valid)  # warmup

    f_nb = np.zeros((height, width))
    t_nb = _timeit(
        lambda: _kernels._deposit_gaussians_numba(f_nb, xs, ys, sigmas, truncs, valid),
        repeat,
    )
    f_np = np.zeros((height, width))
    t_np = _timeit(
        lambda: _kernels._deposit_gaussians_numpy(f_np, xs, ys, sigmas, truncs, valid),
        repeat,
    )
    a = np.zeros((height, width))
    b = np.zeros((height, width))
    _kernels._deposit_gaussians_numba(a, xs, ys, sigmas, truncs, valid)
    _kernels._deposit_gaussians_numpy(b, xs, ys, sigmas, truncs, valid)
    max_diff = float(np.abs(a - b).max())
    agree = max_diff <= 2 * MASS_QUANTUM and a.sum() == float(heads) and b.sum() == float(heads)
    return t_nb, t_np, agree


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--width", type=int, default=1080)
    ap.add_argument("--height", type=int, default=720)
    ap.add_argument("--clusters", type=int, default=256)
    ap.add_argument("--heads", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    rows = []
    t_nb, t_np, ok = bench_assign(args.width, args.height, args.clusters, args.repeat)
    rows.append(("superpixel assignment", t_nb, t_np, ok))
    t_nb, t_np, ok = bench_deposit(args.width, args.height, args.heads, args.repeat)
    rows.append(("gaussian deposition", t_nb, t_np, ok))

    print(f"{'kernel':<24} {'numba':>10} {'numpy':>10} {'speedup':>8}  agree")
    for name, nb, np_, ok in rows:
        print(f"{name:<24} {nb * 1e3:>8.2f}ms {np_ * 1e3:>8.2f}ms {np_ / nb:>7.1f}x  {ok}")
    return 0 if all(r[3] for r in rows) else 1


if __name__ == "__main__":
    raise SystemExit(main())
