"""Pure-numpy implementations of the hot kernels.

These are the fallback used when the compiled extension (``cct._core``) is
unavailable or disabled.  The two backends implement the same contracts and
agree to floating-point summation-order differences (~1e-15 relative).
"""
from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "numpy"


def aux_rhat_sizes(p: np.ndarray, q: np.ndarray, v2: np.ndarray, alpha: float) -> np.ndarray:
    """Per-test-point BH rejection counts over the auxiliary p-value vectors.

    For each ``j`` the auxiliary vector has entry ``0`` at position ``j`` and
    entry ``p[l]`` (full p-value) where ``v2[l] <= v2[j]``, else ``q[l]``
    (the p-value with its randomization term dropped).  Returns the BH
    rejection count ``r*_j`` of each vector at level ``alpha``; always >= 1
    because of the zero entry.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    m = p.shape[0]
    mat = np.where(v2[None, :] <= v2[:, None], p[None, :], q[None, :])
    np.fill_diagonal(mat, 0.0)
    mat.sort(axis=1)
    thr = alpha * np.arange(1, m + 1) / m
    hits = mat <= thr[None, :]
    # r*_j = largest r with the r-th smallest entry <= alpha*r/m
    rev = hits[:, ::-1]
    first = np.argmax(rev, axis=1)
    return (m - first).astype(np.int64)


def _weight_matrix(x1, x2, bandwidth, family):
    d = x1.shape[1]
    sq = (
        np.einsum("ij,ij->i", x1, x1)[:, None]
        + np.einsum("ij,ij->i", x2, x2)[None, :]
        - 2.0 * x1 @ x2.T
    )
    np.maximum(sq, 0.0, out=sq)
    h = bandwidth
    if family == "gaussian":
        return (2 * math.pi * h * h) ** (-d / 2) * np.exp(-sq / (2 * h * h))
    vol = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * (math.sqrt(2.0) * h) ** d
    return (sq <= 2.0 * h * h) / vol


def u_stat_terms(
    x1: np.ndarray,
    x2: np.ndarray,
    v1: np.ndarray,
    v2: np.ndarray,
    xi: np.ndarray,
    bandwidth: float,
    family: str = "gaussian",
) -> tuple[float, float]:
    """Numerator and variance estimate of the kernel-weighted two-sample
    U-statistic.

    ``D[i, j] = 1/2 - 1{v1[i] < v2[j]} - xi[j] * 1{v1[i] == v2[j]}`` and the
    numerator is ``mean_ij W[i, j] * D[i, j]`` with kernel weights ``W``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = x1.shape[0]
    w = _weight_matrix(x1, x2, bandwidth, family)
    dmat = (
        0.5
        - (v1[:, None] < v2[None, :])
        - xi[None, :] * (v1[:, None] == v2[None, :])
    )
    wd = w * dmat
    total = wd.sum()
    numerator = total / n**2
    rows = wd.sum(axis=1) / n
    cols = wd.sum(axis=0) / n
    sigma_sq = (
        (rows @ rows) / n**2
        + (cols @ cols) / n**2
        - (wd * wd).sum() / n**4
        - (2.0 / n) * numerator**2
    )
    return float(numerator), float(sigma_sq)
