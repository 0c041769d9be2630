"""Conditional label screening with FWER control.

Each test point carries a vector of response components and a per-component
rule; the procedure retains component ``s`` when its localized p-value
against the calibration *summary scores* (max score over rule-violating
components, ``-inf`` when none violate) falls below ``alpha``.  One
localization point and one uniform draw are shared by all components of a
test point.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import KernelSpec
from .pvalues import NEG_INF, CalibrationSet
from .scores import LogisticModel, fit_logistic


class UndefinedMetricError(ValueError):
    """The conditioning event selects no test points."""


# -- rules -------------------------------------------------------------------


@dataclass(frozen=True)
class GreaterEqualRule:
    """Rule ``y in [threshold, inf)``."""

    threshold: float

    def contains(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float) >= self.threshold


@dataclass(frozen=True)
class MemberRule:
    """Rule ``y in values`` (e.g. the binary-label rule ``{1}``)."""

    values: frozenset

    def contains(self, y) -> np.ndarray:
        arr = np.asarray(y)
        return np.isin(arr, list(self.values))


@dataclass(frozen=True)
class MultiLabelDataset:
    """Covariates with per-row response vectors and per-component rules.

    ``responses`` may be a rectangular ``(n, S)`` array or a list of 1-d
    arrays of varying lengths; ``rules`` must cover the longest row.
    """

    covariates: np.ndarray
    responses: Sequence
    rules: Sequence

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        object.__setattr__(self, "covariates", cov)
        rows = [np.atleast_1d(np.asarray(r, dtype=float)) for r in self.responses]
        if len(rows) != cov.shape[0]:
            raise ValueError("responses row count must match covariates")
        if any(r.shape[0] < 1 for r in rows):
            raise ValueError("every response row needs at least one component")
        if max(r.shape[0] for r in rows) > len(self.rules):
            raise ValueError("not enough rules for the longest response row")
        object.__setattr__(self, "responses", rows)

    def violation_flags(self) -> list:
        """Per-row boolean arrays, True where a component violates its rule."""
        return [
            ~np.asarray(
                [self.rules[s].contains(row[s]) for s in range(row.shape[0])], dtype=bool
            )
            for row in self.responses
        ]


@dataclass(frozen=True)
class ScreeningResult:
    """Per-test-point, per-component p-values and retain decisions.

    With a constant component count the matrices are ``(m, S)`` arrays; all
    components of test point ``j`` share ``xi[j]`` and ``x_tilde[j]``.
    """

    p_matrix: np.ndarray
    decisions: np.ndarray
    xi: np.ndarray
    x_tilde: np.ndarray
    alpha: float


def summary_score(score_vector, labels, rules) -> float:
    """Max score over rule-violating components; ``-inf`` when none violate."""
    scores = np.atleast_1d(np.asarray(score_vector, dtype=float))
    labels = np.atleast_1d(np.asarray(labels))
    if scores.shape[0] != labels.shape[0]:
        raise ValueError("score vector and labels must have the same length")
    violating = ~np.asarray(
        [rules[s].contains(labels[s]) for s in range(labels.shape[0])], dtype=bool
    )
    if not violating.any():
        return NEG_INF
    return float(scores[violating].max())


@dataclass(frozen=True)
class PerComponentLogistic:
    """One logistic probability model per response component (constant S)."""

    models: tuple

    def component_scores(self, x) -> np.ndarray:
        return np.column_stack([m.predict_proba(x) for m in self.models])


def fit_component_models(train_x, train_responses, rules, l2: float = 1e-4) -> PerComponentLogistic:
    """Fit one logistic classifier per component for the event ``Y_s in A_s``."""
    resp = np.atleast_2d(np.asarray(train_responses, dtype=float))
    models = []
    for s in range(resp.shape[1]):
        labels = rules[s].contains(resp[:, s]).astype(float)
        models.append(fit_logistic(train_x, labels, l2=l2))
    return PerComponentLogistic(models=tuple(models))


def screen(
    labeled: MultiLabelDataset,
    test_x: np.ndarray,
    alpha: float,
    kernel: KernelSpec,
    rng: np.random.Generator,
    score_model=None,
    split_ratio: float = 0.5,
    weight_cols=None,
    localized: bool = True,
) -> ScreeningResult:
    """Run the label screening procedure.

    ``score_model`` is an object with ``component_scores(x) -> (n, S)``; when
    None, per-component logistic models are fitted on the train split.  With
    ``localized=False`` the p-values are randomized unweighted conformal
    p-values (the thresholding baseline); the draw sequence is unchanged so
    the two variants are exactly paired under a common seed.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    test_x = np.atleast_2d(np.asarray(test_x, dtype=float))
    n = labeled.covariates.shape[0]
    perm = rng.permutation(n)
    n_train = int(round(split_ratio * n))
    train_idx, cal_idx = perm[:n_train], perm[n_train:]
    if train_idx.size == 0 or cal_idx.size == 0:
        raise ValueError("empty train or calibration split")

    if score_model is None:
        train_resp = np.vstack([labeled.responses[i] for i in train_idx])
        score_model = fit_component_models(labeled.covariates[train_idx], train_resp, labeled.rules)

    cal_scores_mat = score_model.component_scores(labeled.covariates[cal_idx])
    summaries = np.array(
        [
            summary_score(cal_scores_mat[r], labeled.responses[i], labeled.rules)
            for r, i in enumerate(cal_idx)
        ]
    )
    test_scores_mat = score_model.component_scores(test_x)

    cols = slice(None) if weight_cols is None else list(weight_cols)
    calib = CalibrationSet(labeled.covariates[cal_idx][:, cols], summaries)
    test_w = test_x[:, cols]

    m = test_x.shape[0]
    x_tilde = kernel.sample_many(test_w, rng)
    xi = rng.uniform(size=m)
    n_c = len(calib)

    n_components = test_scores_mat.shape[1]
    p_mat = np.empty((m, n_components))
    if localized:
        w = kernel.cross_weights(calib.covariates, x_tilde)  # (n_c, m)
        w_test = kernel.pair_weights(test_w, x_tilde)
        denom = w.sum(axis=0) + w_test
        for s in range(n_components):
            indic = calib.scores[:, None] >= test_scores_mat[None, :, s]
            cal_num = np.einsum("ij,ij->j", w, indic.astype(float))
            p_mat[:, s] = (cal_num + xi * w_test) / denom
    else:
        for s in range(n_components):
            counts = (calib.scores[:, None] >= test_scores_mat[None, :, s]).sum(axis=0)
            p_mat[:, s] = (counts + xi) / (n_c + 1)

    return ScreeningResult(
        p_matrix=p_mat, decisions=p_mat <= alpha, xi=xi, x_tilde=x_tilde, alpha=alpha
    )


def fwer_metrics(
    result: ScreeningResult,
    truth_responses: Sequence,
    rules: Sequence,
    condition=None,
) -> float:
    """Fraction of (conditioned) test points with at least one retained
    rule-violating component.

    ``condition`` is an optional boolean mask over test points.
    """
    m = len(result.decisions)
    mask = np.ones(m, dtype=bool) if condition is None else np.asarray(condition, dtype=bool)
    if mask.sum() == 0:
        raise UndefinedMetricError("conditioning event selects zero test points")
    errors = 0
    for j in np.nonzero(mask)[0]:
        row = np.atleast_1d(np.asarray(truth_responses[j], dtype=float))
        s_count = row.shape[0]
        violating = ~np.asarray(
            [rules[s].contains(row[s]) for s in range(s_count)], dtype=bool
        )
        if np.any(violating & result.decisions[j][:s_count]):
            errors += 1
    return errors / int(mask.sum())
