"""Balanced data selection with per-selection error rate control.

A test point is selected as likely rule-satisfying when its localized
conformal p-value, calibrated on the *rule-violating* calibration subset,
falls below ``alpha``.  The kernel weighting keeps the per-selection error
rate balanced across covariate regions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec
from .pvalues import CalibrationSet, batch_localized_p_values
from .screening import UndefinedMetricError
from .scores import fit_logistic


@dataclass(frozen=True)
class SelectionResult:
    """Per-test-point selection p-values, decisions, and randomization draws."""

    p_values: np.ndarray
    decisions: np.ndarray
    xi: np.ndarray
    x_tilde: np.ndarray
    alpha: float


def select(
    labeled_x: np.ndarray,
    labeled_y,
    test_x: np.ndarray,
    alpha: float,
    rule,
    kernel: KernelSpec,
    rng: np.random.Generator,
    score_model=None,
    split_ratio: float = 0.5,
    weight_cols=None,
    localized: bool = True,
) -> SelectionResult:
    """Select test points whose response likely satisfies ``rule``.

    The labeled data is split into a train half (fits a logistic probability
    model for the event ``Y in rule`` unless ``score_model`` is supplied)
    and a calibration half, of which only the rule-violating points enter
    the calibration sum.  ``localized=False`` switches to the randomized
    unweighted conformal p-value baseline with an identical draw sequence.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    labeled_x = np.atleast_2d(np.asarray(labeled_x, dtype=float))
    labeled_y = np.asarray(labeled_y, dtype=float)
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    n = labeled_x.shape[0]
    perm = rng.permutation(n)
    n_train = int(round(split_ratio * n))
    train_idx, cal_idx = perm[:n_train], perm[n_train:]
    if train_idx.size == 0 or cal_idx.size == 0:
        raise ValueError("empty train or calibration split")

    if score_model is None:
        labels = rule.contains(labeled_y[train_idx]).astype(float)
        logit = fit_logistic(labeled_x[train_idx], labels)
        score_model = logit.predict_proba

    violating = ~rule.contains(labeled_y[cal_idx])
    if not violating.any():
        raise ValueError("no rule-violating calibration points to calibrate on")
    cal_keep = cal_idx[violating]
    cal_scores = np.asarray(score_model(labeled_x[cal_keep]), dtype=float)
    test_scores = np.asarray(score_model(test_x), dtype=float)

    cols = slice(None) if weight_cols is None else list(weight_cols)
    test_w = test_x[:, cols]
    calib = CalibrationSet(labeled_x[cal_keep][:, cols], cal_scores)

    if localized:
        batch = batch_localized_p_values(calib, test_w, test_scores, kernel, rng)
        p, xi, x_tilde = batch.p, batch.xi, batch.x_tilde
    else:
        m = test_w.shape[0]
        x_tilde = kernel.sample_many(test_w, rng)  # drawn to keep streams paired
        xi = rng.uniform(size=m)
        counts = (calib.scores[:, None] >= test_scores[None, :]).sum(axis=0)
        p = (counts + xi) / (len(calib) + 1)

    return SelectionResult(
        p_values=p, decisions=p <= alpha, xi=xi, x_tilde=x_tilde, alpha=alpha
    )


def pser_metrics(result: SelectionResult, truth_y, rule, condition=None) -> float:
    """Fraction of truly rule-violating (conditioned) test points selected."""
    violating = ~rule.contains(np.asarray(truth_y, dtype=float))
    mask = violating if condition is None else violating & np.asarray(condition, dtype=bool)
    denom = int(mask.sum())
    if denom == 0:
        raise UndefinedMetricError("no rule-violating test points under the condition")
    return float(result.decisions[mask].sum() / denom)
