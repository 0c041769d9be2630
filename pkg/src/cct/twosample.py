"""Two-sample conditional distribution test via a kernel-weighted U-statistic.

The statistic aggregates centered pairwise score comparisons
``D[i, j] = 1/2 - 1{V_1i < V_2j} - xi_j 1{V_1i = V_2j}`` with kernel weights
``H(X_1i, X_2j)``, standardizes by a plug-in variance estimator, and rejects
the null of equal conditional distributions for large values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .kernels import KernelSpec, default_bandwidth
from .scores import conditional_density_ratio_scores, fit_logistic


class DegenerateVarianceError(ValueError):
    """The variance estimate was not positive; the statistic is undefined."""


@dataclass(frozen=True)
class TwoSampleResult:
    """Standardized statistic, its components, and the test decision."""

    t_hat: float
    numerator: float
    sigma_sq_hat: float
    p_value: float
    reject: bool
    n1: int


def normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def d_hat(v1: float, v2: float, xi: float) -> float:
    """Centered pairwise comparison ``1/2 - 1{v1 < v2} - xi * 1{v1 = v2}``."""
    if v1 < v2:
        return -0.5
    if v1 == v2:
        return 0.5 - xi
    return 0.5


def weighted_statistic(
    x1: np.ndarray,
    x2: np.ndarray,
    v1,
    v2,
    kernel: KernelSpec,
    rng: np.random.Generator | None = None,
    *,
    xi=None,
    alpha: float = 0.05,
) -> TwoSampleResult:
    """Kernel-weighted two-sample U-statistic over equal-sized score samples.

    One uniform draw ``xi[j]`` is made per sample-2 point and reused across
    all pairs ``(i, j)``.  Raises :class:`DegenerateVarianceError` when the
    variance estimate is not positive (e.g. all comparisons equal).
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    n1 = x1.shape[0]
    if x2.shape[0] != n1 or v1.shape[0] != n1 or v2.shape[0] != n1:
        raise ValueError("both samples must have the same calibration size")
    if n1 < 2:
        raise ValueError("need at least two calibration points per sample")
    if xi is None:
        if rng is None:
            raise ValueError("need a generator when xi is not forced")
        xi = rng.uniform(size=n1)
    xi = np.asarray(xi, dtype=float)
    numerator, sigma_sq = _backend.u_stat_terms(
        x1, x2, v1, v2, xi, kernel.bandwidth, kernel.family
    )
    if sigma_sq <= 0.0:
        raise DegenerateVarianceError(
            f"variance estimate {sigma_sq} is not positive (degenerate comparisons)"
        )
    t_hat = numerator / math.sqrt(sigma_sq)
    p_value = 1.0 - normal_cdf(t_hat)
    return TwoSampleResult(
        t_hat=t_hat,
        numerator=numerator,
        sigma_sq_hat=sigma_sq,
        p_value=p_value,
        reject=bool(p_value <= alpha),
        n1=n1,
    )


def _split_half(n: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_train = n // 2
    return perm[:n_train], perm[n_train:]


def conditional_two_sample_test(
    x1: np.ndarray,
    y1,
    x2: np.ndarray,
    y2,
    alpha: float = 0.05,
    kernel: KernelSpec | None = None,
    rng: np.random.Generator | None = None,
    l2: float = 1e-4,
) -> TwoSampleResult:
    """Test ``H0: P_1(Y|X) = P_2(Y|X)`` on two labeled samples.

    Each sample is split in half; logistic classifiers on the training
    halves estimate the marginal covariate density ratio (on ``x``) and the
    joint ratio (on ``(x, y)``), whose quotient estimates the conditional
    density ratio.  The statistic compares the calibration halves with the
    sample-1-to-sample-2 ratio ``f_1(y|x) / f_2(y|x)`` as the score, so that
    a shifted second sample drifts the statistic into the upper rejection
    tail.  When ``kernel`` is None a Gaussian kernel with the default
    bandwidth rule on the full covariate vector is used.
    """
    if rng is None:
        raise ValueError("need a generator")
    x1 = np.atleast_2d(np.asarray(x1, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if kernel is None:
        kernel = KernelSpec("gaussian", default_bandwidth(x1.shape[0], x1.shape[1]), x1.shape[1])

    t1, c1 = _split_half(x1.shape[0], rng)
    t2, c2 = _split_half(x2.shape[0], rng)
    # equalize calibration halves by dropping random rows from the larger
    n_cal = min(c1.shape[0], c2.shape[0])
    if c1.shape[0] > n_cal:
        c1 = c1[rng.permutation(c1.shape[0])[:n_cal]]
    if c2.shape[0] > n_cal:
        c2 = c2[rng.permutation(c2.shape[0])[:n_cal]]

    labels = np.concatenate([np.zeros(t1.shape[0]), np.ones(t2.shape[0])])
    train_x = np.vstack([x1[t1], x2[t2]])
    train_xy = np.hstack(
        [train_x, np.concatenate([y1[t1], y2[t2]]).reshape(-1, 1)]
    )
    marginal = fit_logistic(train_x, labels, l2=l2)
    joint = fit_logistic(train_xy, labels, l2=l2)

    ratio1 = conditional_density_ratio_scores(joint, marginal, x1[c1], y1[c1])
    ratio2 = conditional_density_ratio_scores(joint, marginal, x2[c2], y2[c2])
    # score direction: f1/f2 (reciprocal of the fitted f2/f1 ratio)
    xi = rng.uniform(size=n_cal)
    return weighted_statistic(
        x1[c1], x2[c2], 1.0 / ratio1, 1.0 / ratio2, kernel, xi=xi, alpha=alpha
    )
