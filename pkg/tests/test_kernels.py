import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from imdp_plf import _kernels_py
from imdp_plf.kernels import BACKEND

try:
    from imdp_plf import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

IMPLS = [_kernels_py] + ([_kernels_c] if _kernels_c is not None else [])


def brute_affine_max(G, h, seg, pts):
    out = np.empty((len(pts), len(seg) - 1))
    for p, x in enumerate(pts):
        for s in range(len(seg) - 1):
            out[p, s] = max(G[r] @ x + h[r] for r in range(seg[s], seg[s + 1]))
    return out


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_affine_max(impl):
    rng = np.random.default_rng(0)
    G = rng.normal(size=(11, 3))
    h = rng.normal(size=11)
    seg = np.array([0, 4, 5, 11])
    pts = rng.normal(size=(50, 3))
    np.testing.assert_allclose(impl.affine_max(G, h, seg, pts),
                               brute_affine_max(G, h, seg, pts), atol=1e-12)


def brute_box_worst(C, d, gammas, p_lo, p_hi, r_lo, r_hi, w, E):
    """Enumerate every corner of the entrywise box."""
    M, n, _ = p_lo.shape
    q = len(gammas)
    out = np.full(M, -np.inf)
    for pi in range(M):
        for pb in itertools.product((0, 1), repeat=n * n):
            P = np.where(np.array(pb).reshape(n, n), p_hi[pi], p_lo[pi])
            for rb in itertools.product((0, 1), repeat=q * n):
                R = np.where(np.array(rb).reshape(q, n), r_hi[pi], r_lo[pi])
                A = np.kron(np.diag(gammas), P)
                L = R.reshape(-1) - w + A @ w
                out[pi] = max(out[pi], np.max(C @ (A @ E + L) - d))
    return out


@pytest.mark.parametrize("impl", IMPLS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_box_worst_matches_corners(impl):
    rng = np.random.default_rng(1)
    M, n, q, k = 2, 2, 2, 3
    p_lo = rng.random((M, n, n)) * 0.5
    p_hi = p_lo + rng.random((M, n, n)) * 0.2
    r_lo = rng.normal(size=(M, q, n))
    r_hi = r_lo + rng.random((M, q, n))
    gammas = np.array([0.5, 0.8])
    C = rng.normal(size=(k, q * n))
    d = rng.normal(size=k)
    w = rng.normal(size=q * n)
    pts = rng.normal(size=(7, q * n))
    got = impl.box_worst(C, d, gammas, 0.5 * (p_lo + p_hi), 0.5 * (p_hi - p_lo),
                         0.5 * (r_lo + r_hi), 0.5 * (r_hi - r_lo), w, pts)
    for i, E in enumerate(pts):
        np.testing.assert_allclose(got[i], brute_box_worst(C, d, gammas, p_lo, p_hi, r_lo,
                                                           r_hi, w, E), atol=1e-10)


@pytest.mark.skipif(_kernels_c is None, reason="compiled kernels not built")
def test_backends_agree_large():
    rng = np.random.default_rng(2)
    G = rng.normal(size=(40, 6))
    h = rng.normal(size=40)
    seg = np.arange(0, 41, 8)
    pts = rng.normal(size=(10_000, 6))
    np.testing.assert_allclose(_kernels_c.affine_max(G, h, seg, pts),
                               _kernels_py.affine_max(G, h, seg, pts), atol=1e-12)


def test_backend_selection():
    assert BACKEND in ("cython", "numpy")
    if _kernels_c is not None:
        assert BACKEND == "cython"
    env = dict(os.environ, IMDP_PLF_PURE="1")
    out = subprocess.run([sys.executable, "-c", "import imdp_plf; print(imdp_plf.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
