"""Weighted conformal p-value primitives.

The localized conformal p-value of a test point with score ``v`` against a
calibration set with scores ``V_i`` and weighting covariates ``X_i`` is

    p = [ sum_i H(X_i, Xt) 1{v <= V_i} + xi * H(x, Xt) ]
        / [ sum_i H(X_i, Xt) + H(x, Xt) ]

where ``Xt`` is sampled from the kernel density ``H(x, .)`` and
``xi ~ U[0, 1]``.  Every stochastic operation takes an explicit generator and
accepts forced draws (``xi=``, ``x_tilde=``) so that reductions and hand
examples are reproducible exactly.

A score equal to ``-inf`` is a sentinel for "max over an empty set" (used by
label screening): it contributes zero to the numerator indicator but full
weight to the denominator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec

NEG_INF = float("-inf")


class DegenerateWeightsError(ValueError):
    """All kernel weights vanished; the p-value denominator is zero."""


@dataclass(frozen=True)
class CalibrationSet:
    """Calibration covariates (weighting coordinates only) and scores.

    ``scores`` must be finite, except that ``-inf`` entries are allowed as
    empty-max sentinels.
    """

    covariates: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        sc = np.asarray(self.scores, dtype=float)
        if cov.shape[0] != sc.shape[0]:
            raise ValueError(
                f"covariate rows ({cov.shape[0]}) must match scores length ({sc.shape[0]})"
            )
        if sc.shape[0] == 0:
            raise ValueError("calibration set is empty")
        bad = ~(np.isfinite(sc) | (sc == NEG_INF))
        if bad.any():
            raise ValueError("calibration scores must be finite or -inf")
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "scores", sc)

    def __len__(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class LocalizedPValue:
    """A localized conformal p-value together with the draws that produced it."""

    value: float
    xi: float
    x_tilde: np.ndarray
    numerator_weight_sum: float
    denominator_weight_sum: float

    def __float__(self) -> float:
        return self.value


def _draws(kernel, test_x, rng, xi, x_tilde):
    if x_tilde is None:
        if rng is None:
            raise ValueError("need a generator when x_tilde is not forced")
        x_tilde = kernel.sample(test_x, rng)
    else:
        x_tilde = np.asarray(x_tilde, dtype=float)
    if xi is None:
        if rng is None:
            raise ValueError("need a generator when xi is not forced")
        xi = float(rng.uniform())
    return float(xi), x_tilde


def _assemble(num: float, den: float, xi: float, x_tilde) -> LocalizedPValue:
    if den <= 0.0:
        raise DegenerateWeightsError(
            "kernel weight denominator is zero (all calibration and test weights vanished)"
        )
    return LocalizedPValue(
        value=num / den,
        xi=xi,
        x_tilde=np.asarray(x_tilde, dtype=float),
        numerator_weight_sum=num,
        denominator_weight_sum=den,
    )


def localized_p_value(
    calib: CalibrationSet,
    test_x,
    test_score: float,
    kernel: KernelSpec,
    rng: np.random.Generator | None = None,
    *,
    xi: float | None = None,
    x_tilde=None,
) -> LocalizedPValue:
    """Localized conformal p-value of one test point.

    Ties between the test score and a calibration score count fully toward
    the numerator (``<=`` indicator); see
    :func:`localized_p_value_tiebreak` for the tie-randomized variant.
    """
    test_x = np.asarray(test_x, dtype=float)
    xi, x_tilde = _draws(kernel, test_x, rng, xi, x_tilde)
    w = kernel.weights_to_point(calib.covariates, x_tilde)
    w_test = kernel.weight(test_x, x_tilde)
    num = float(w @ (test_score <= calib.scores)) + xi * w_test
    den = float(w.sum()) + w_test
    return _assemble(num, den, xi, x_tilde)


def localized_p_value_tiebreak(
    calib: CalibrationSet,
    test_x,
    test_score: float,
    kernel: KernelSpec,
    rng: np.random.Generator | None = None,
    *,
    xi: float | None = None,
    x_tilde=None,
) -> LocalizedPValue:
    """Tie-randomized localized p-value.

    Identical to :func:`localized_p_value` except that a calibration score
    tied with the test score contributes ``xi * weight`` instead of full
    weight; with continuous scores the two variants coincide almost surely.
    """
    test_x = np.asarray(test_x, dtype=float)
    xi, x_tilde = _draws(kernel, test_x, rng, xi, x_tilde)
    w = kernel.weights_to_point(calib.covariates, x_tilde)
    w_test = kernel.weight(test_x, x_tilde)
    num = (
        float(w @ (test_score < calib.scores))
        + xi * float(w @ (test_score == calib.scores))
        + xi * w_test
    )
    den = float(w.sum()) + w_test
    return _assemble(num, den, xi, x_tilde)


def simplified_localized_p_value(
    calib: CalibrationSet,
    test_x,
    test_score: float,
    kernel: KernelSpec,
    rng: np.random.Generator | None = None,
    *,
    xi: float | None = None,
) -> LocalizedPValue:
    """Simplified localized p-value: weights centered at the test point itself.

    No localization point is sampled; the randomization term ``xi * H(x, x)``
    is retained.
    """
    test_x = np.asarray(test_x, dtype=float)
    if xi is None:
        if rng is None:
            raise ValueError("need a generator when xi is not forced")
        xi = float(rng.uniform())
    w = kernel.weights_to_point(calib.covariates, test_x)
    w_test = kernel.self_weight()
    num = float(w @ (test_score <= calib.scores)) + xi * w_test
    den = float(w.sum()) + w_test
    return _assemble(num, float(den), float(xi), test_x)


def unweighted_conformal_p_value(
    calib_scores,
    test_score: float,
    rng: np.random.Generator | None = None,
    *,
    xi: float | None = None,
    randomized: bool = True,
) -> float:
    """Classical (unweighted) conformal p-value.

    Deterministic form: ``(#{V_i >= v} + 1) / (n + 1)``.  Randomized form
    (the default) replaces the ``+1`` by ``+xi`` with ``xi ~ U[0, 1]``, which
    makes it the exact constant-kernel reduction of the localized p-value.
    """
    scores = np.asarray(calib_scores, dtype=float)
    if scores.shape[0] == 0:
        raise ValueError("calibration scores are empty")
    count = np.sum(test_score <= scores)
    n = scores.shape[0]
    if not randomized:
        return float((count + 1) / (n + 1))
    if xi is None:
        if rng is None:
            raise ValueError("need a generator when xi is not forced")
        xi = float(rng.uniform())
    return float((count + xi) / (n + 1))


# -- batch machinery shared by the testing procedures ----------------------


@dataclass(frozen=True)
class BatchPValues:
    """Per-test-point localized p-values plus the cached pieces they are made of.

    ``cal_num[j] = sum_i H(X_1i, Xt_j) 1{V_2j <= V_1i}`` is the calibration
    part of the numerator, ``w_test[j] = H(X_2j, Xt_j)`` the test-point
    weight, ``denom[j]`` the full denominator.  ``p = (cal_num + xi*w_test) /
    denom`` and ``p_reduced = cal_num / denom`` (the value the p-value drops
    to when the randomization indicator is zero).
    """

    p: np.ndarray
    p_reduced: np.ndarray
    xi: np.ndarray
    x_tilde: np.ndarray
    cal_num: np.ndarray
    w_test: np.ndarray
    denom: np.ndarray


def batch_localized_p_values(
    calib: CalibrationSet,
    test_x: np.ndarray,
    test_scores: np.ndarray,
    kernel: KernelSpec,
    rng: np.random.Generator,
) -> BatchPValues:
    """Localized p-values for a batch of test points.

    Draw order: all localization points first (via
    :meth:`KernelSpec.sample_many`), then one uniform ``xi`` per test point.
    """
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    test_scores = np.asarray(test_scores, dtype=float)
    m = test_x.shape[0]
    x_tilde = kernel.sample_many(test_x, rng)
    xi = rng.uniform(size=m)
    w = kernel.cross_weights(calib.covariates, x_tilde)  # (n_c, m)
    w_test = kernel.pair_weights(test_x, x_tilde)  # (m,)
    indic = calib.scores[:, None] >= test_scores[None, :]
    cal_num = np.einsum("ij,ij->j", w, indic.astype(float))
    denom = w.sum(axis=0) + w_test
    if np.any(denom <= 0.0):
        raise DegenerateWeightsError("zero weight denominator for at least one test point")
    return BatchPValues(
        p=(cal_num + xi * w_test) / denom,
        p_reduced=cal_num / denom,
        xi=xi,
        x_tilde=x_tilde,
        cal_num=cal_num,
        w_test=w_test,
        denom=denom,
    )
