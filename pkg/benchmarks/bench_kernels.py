"""Compare the compiled grid-oracle kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--points N] [--repeat R]

Prints the best-of-R wall time of each backend and the max abs difference.
"""
import argparse
import time

import numpy as np

from imdp_plf import _kernels_py

try:
    from imdp_plf import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def affine_case(rng, N):
    # 40 facet rows in 5 policy segments, 6-dimensional points
    G = rng.normal(size=(40, 6))
    h = rng.normal(size=40)
    seg = np.arange(0, 41, 8)
    pts = rng.normal(size=(N, 6))
    return lambda impl: impl.affine_max(G, h, seg, pts)


def box_case(rng, N):
    # 4 policies, 3 states, 2 objectives, 6 facets
    M, n, q, k = 4, 3, 2, 6
    p_mid = rng.dirichlet(np.ones(n), size=(M, n))
    p_rad = 0.05 * rng.random((M, n, n))
    r_mid = rng.normal(size=(M, q, n))
    r_rad = 0.1 * rng.random((M, q, n))
    C = rng.normal(size=(k, q * n))
    d = rng.normal(size=k)
    gammas = np.array([0.8, 0.9])
    w = rng.normal(size=q * n)
    pts = rng.normal(size=(N, q * n))
    return lambda impl: impl.box_worst(C, d, gammas, p_mid, p_rad, r_mid, r_rad, w, pts)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels_c is None:
        print("compiled kernels not built; only the numpy backend is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<12}{'numpy s':>10}{'cython s':>10}{'speedup':>9}{'max diff':>11}")
    for name, make in (("affine_max", affine_case), ("box_worst", box_case)):
        run = make(rng, args.points)
        t_py, out_py = best_time(lambda: run(_kernels_py), args.repeat)
        if _kernels_c is None:
            print(f"{name:<12}{t_py:>10.4f}{'--':>10}{'--':>9}{'--':>11}")
            continue
        t_c, out_c = best_time(lambda: run(_kernels_c), args.repeat)
        diff = float(np.max(np.abs(out_c - out_py)))
        print(f"{name:<12}{t_py:>10.4f}{t_c:>10.4f}{t_py / t_c:>8.1f}x{diff:>11.2e}")


if __name__ == "__main__":
    main()
