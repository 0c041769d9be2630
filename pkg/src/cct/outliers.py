"""Conditional outlier detection with finite-sample FDR control.

The procedure computes localized conformal p-values for the test points,
forms per-point auxiliary p-value vectors (each differing from the base
p-values only in the randomization indicator), applies the BH procedure to
every auxiliary vector, and prunes the resulting candidate set with
independent uniform draws so that FDR control survives the dependence
introduced by the kernel weighting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .kernels import KernelSpec
from .pvalues import BatchPValues, CalibrationSet, batch_localized_p_values


@dataclass(frozen=True)
class OutlierRun:
    """Full record of one detection run."""

    p_values: np.ndarray
    xi: np.ndarray
    x_tilde: np.ndarray
    aux_set_sizes: np.ndarray
    initial_set: np.ndarray
    final_set: np.ndarray
    zeta: np.ndarray
    r_star: int


def bh_procedure(p_values, alpha: float) -> np.ndarray:
    """Benjamini-Hochberg rejection set.

    Returns the (sorted) indices ``{j : p_j <= alpha * r* / m}`` where
    ``r* = max{r >= 0 : #{j : p_j <= alpha * r / m} >= r}``; empty when
    ``r* = 0``.
    """
    p = np.asarray(p_values, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    m = p.shape[0]
    sp = np.sort(p)
    thr = alpha * np.arange(1, m + 1) / m
    ok = np.nonzero(sp <= thr)[0]
    if ok.size == 0:
        return np.empty(0, dtype=np.int64)
    r_star = int(ok[-1]) + 1
    return np.nonzero(p <= alpha * r_star / m)[0].astype(np.int64)


def auxiliary_p_value(
    calib: CalibrationSet,
    test_x,
    test_score: float,
    other_score: float,
    kernel: KernelSpec,
    xi: float,
    x_tilde,
) -> float:
    """Auxiliary p-value of a test point against another test point's score.

    Identical to the localized p-value with the same draws except that the
    randomization term carries the extra indicator
    ``1{test_score <= other_score}``.
    """
    test_x = np.asarray(test_x, dtype=float)
    x_tilde = np.asarray(x_tilde, dtype=float)
    w = kernel.weights_to_point(calib.covariates, x_tilde)
    w_test = kernel.weight(test_x, x_tilde)
    num = float(w @ (test_score <= calib.scores))
    if test_score <= other_score:
        num += xi * w_test
    return num / (float(w.sum()) + w_test)


def _prune(p: np.ndarray, rhat: np.ndarray, zeta: np.ndarray, alpha: float):
    """Final pruning step: keep j with ``p_j <= alpha*rhat_j/m`` and
    ``zeta_j * rhat_j <= r*`` where ``r*`` is the largest self-consistent
    count."""
    m = p.shape[0]
    init = p <= alpha * rhat / m
    t = zeta[init] * rhat[init]
    t_sorted = np.sort(t)
    counts = np.searchsorted(t_sorted, np.arange(m + 1), side="right")
    feasible = np.nonzero(counts >= np.arange(m + 1))[0]
    r_star = int(feasible[-1])
    final = init & (zeta * rhat <= r_star)
    return np.nonzero(init)[0].astype(np.int64), np.nonzero(final)[0].astype(np.int64), r_star


def detect_outliers_from_scores(
    calib: CalibrationSet,
    test_w: np.ndarray,
    test_scores: np.ndarray,
    alpha: float,
    kernel: KernelSpec,
    rng: np.random.Generator,
) -> OutlierRun:
    """Run the detection procedure given already-computed scores.

    ``test_w`` holds the weighting coordinates of the test points.  Draw
    order: localization points, then xi (one per test point), then zeta.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    batch: BatchPValues = batch_localized_p_values(calib, test_w, test_scores, kernel, rng)
    m = batch.p.shape[0]
    zeta = rng.uniform(size=m)
    rhat = _backend.aux_rhat_sizes(
        batch.p, batch.p_reduced, np.asarray(test_scores, dtype=float), alpha
    )
    initial, final, r_star = _prune(batch.p, rhat, zeta, alpha)
    return OutlierRun(
        p_values=batch.p,
        xi=batch.xi,
        x_tilde=batch.x_tilde,
        aux_set_sizes=rhat,
        initial_set=initial,
        final_set=final,
        zeta=zeta,
        r_star=r_star,
    )


def detect_outliers(
    clean_x: np.ndarray,
    clean_y,
    test_x: np.ndarray,
    test_y,
    alpha: float,
    kernel: KernelSpec,
    score_family,
    rng: np.random.Generator,
    split_ratio: float = 0.5,
    weight_cols=None,
) -> OutlierRun:
    """Split the clean data, fit the score model, and run outlier detection.

    ``score_family`` is an object with ``fit(x, y) -> model`` where the model
    has ``score_many(x, y)`` (or ``score_many(x)`` for label-free scores with
    ``clean_y=None``).  ``weight_cols`` selects the covariate columns the
    kernel acts on (default: all).
    """
    clean_x = np.asarray(clean_x, dtype=float)
    test_x = np.asarray(test_x, dtype=float)
    n = clean_x.shape[0]
    perm = rng.permutation(n)
    n_train = int(round(split_ratio * n))
    train_idx, cal_idx = perm[:n_train], perm[n_train:]
    if cal_idx.size == 0 or train_idx.size == 0:
        raise ValueError("empty train or calibration split")
    cols = slice(None) if weight_cols is None else list(weight_cols)

    if clean_y is None:
        model = score_family.fit(clean_x[train_idx])
        cal_scores = model.score_many(clean_x[cal_idx])
        test_scores = model.score_many(test_x)
    else:
        clean_y = np.asarray(clean_y, dtype=float)
        model = score_family.fit(clean_x[train_idx], clean_y[train_idx])
        cal_scores = model.score_many(clean_x[cal_idx], clean_y[cal_idx])
        test_scores = model.score_many(test_x, np.asarray(test_y, dtype=float))

    calib = CalibrationSet(clean_x[cal_idx][:, cols], cal_scores)
    return detect_outliers_from_scores(
        calib, test_x[:, cols], test_scores, alpha, kernel, rng
    )


def fdp_and_power(run: OutlierRun, outlier_truth) -> tuple[float, float]:
    """False discovery proportion and power of the final rejection set.

    ``outlier_truth`` is a boolean array (True = outlier).
    """
    truth = np.asarray(outlier_truth, dtype=bool)
    rejected = np.zeros(truth.shape[0], dtype=bool)
    rejected[run.final_set] = True
    n_rej = int(rejected.sum())
    n_out = int(truth.sum())
    false_rej = int((rejected & ~truth).sum())
    true_rej = int((rejected & truth).sum())
    fdp = false_rej / max(n_rej, 1)
    power = true_rej / max(n_out, 1)
    return fdp, power
