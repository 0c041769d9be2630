import math

import numpy as np
import pytest

from cct.kernels import KernelSpec
from cct.pvalues import NEG_INF, CalibrationSet, localized_p_value
from cct.scenarios import A2_THRESHOLDS, gen_a2
from cct.screening import (
    GreaterEqualRule,
    MemberRule,
    MultiLabelDataset,
    UndefinedMetricError,
    fit_component_models,
    fwer_metrics,
    screen,
    summary_score,
)

ONES_RULES = [MemberRule(frozenset({1})) for _ in range(3)]


def test_summary_score_single_violation():
    v = [0.2, 0.9, 0.4]
    y = [1, 0, 1]
    assert summary_score(v, y, ONES_RULES) == pytest.approx(0.9)


def test_summary_score_all_satisfy_gives_neg_inf():
    assert summary_score([0.5, 0.6], [1, 1], ONES_RULES) == NEG_INF


def test_summary_score_hand_max_over_violations():
    assert summary_score([0.3, 0.7], [0, 0], ONES_RULES) == pytest.approx(0.7)


def test_summary_score_length_mismatch():
    with pytest.raises(ValueError):
        summary_score([0.1], [1, 0], ONES_RULES)


def test_rules():
    r = GreaterEqualRule(2.0)
    assert r.contains(np.array([1.0, 2.0, 3.0])).tolist() == [False, True, True]
    m = MemberRule(frozenset({1}))
    assert m.contains(np.array([0, 1, 1])).tolist() == [False, True, True]


def test_multilabel_dataset_validation():
    rules = [GreaterEqualRule(0.0)] * 2
    with pytest.raises(ValueError):
        MultiLabelDataset(np.zeros((2, 1)), [np.zeros(1)], rules)
    with pytest.raises(ValueError):
        MultiLabelDataset(np.zeros((1, 1)), [np.zeros(3)], rules)
    ds = MultiLabelDataset(np.zeros((2, 1)), [np.array([1.0, -1.0]), np.array([-2.0])], rules)
    flags = ds.violation_flags()
    assert flags[0].tolist() == [False, True]
    assert flags[1].tolist() == [True]


class FixedScores:
    """Score model double returning preset per-component scores."""

    def __init__(self, table):
        self.table = table

    def component_scores(self, x):
        x = np.atleast_2d(x)
        key = np.round(x[:, 0], 6)
        return np.vstack([self.table[k] for k in key])


GAUSS1 = KernelSpec("gaussian", 1.0, 1)


def _hand_dataset():
    # calibration rows at x=0 and x=2 with summary scores 0.4 and -inf
    cov = np.array([[0.0], [0.0], [2.0], [2.0]])
    resp = [np.array([0.0, 1.0]), np.array([0.0, 1.0]),
            np.array([1.0, 1.0]), np.array([1.0, 1.0])]
    rules = [MemberRule(frozenset({1})), MemberRule(frozenset({1}))]
    table = {0.0: np.array([0.4, 0.9]), 2.0: np.array([0.1, 0.2]), 1.0: np.array([0.3, 0.5])}
    return MultiLabelDataset(cov, resp, rules), FixedScores(table), rules


def test_screen_hand_instance_matches_formula():
    dataset, model, rules = _hand_dataset()
    rng = np.random.default_rng(0)
    result = screen(
        dataset, np.array([[1.0]]), 0.5, GAUSS1, rng,
        score_model=model, split_ratio=0.5,
    )
    # two calibration points survive the split; recompute the formula directly
    # from the draws recorded in the result
    xi, xt = result.xi[0], result.x_tilde[0]
    perm = np.random.default_rng(0).permutation(4)
    cal_idx = perm[2:]
    w = GAUSS1.weights_to_point(dataset.covariates[cal_idx], xt)
    w_test = GAUSS1.weight(np.array([1.0]), xt)
    summaries = np.array([
        summary_score(model.component_scores(dataset.covariates[i : i + 1])[0],
                      dataset.responses[i], rules)
        for i in cal_idx
    ])
    for s, v in enumerate([0.3, 0.5]):
        num = float(w @ (v <= summaries)) + xi * w_test
        den = float(w.sum()) + w_test
        assert result.p_matrix[0, s] == pytest.approx(num / den, rel=1e-12)


def test_screen_equal_scores_share_p_value():
    dataset, model, rules = _hand_dataset()
    model.table[1.0] = np.array([0.3, 0.3])
    result = screen(dataset, np.array([[1.0]]), 0.5, GAUSS1, np.random.default_rng(1),
                    score_model=model)
    assert result.p_matrix[0, 0] == result.p_matrix[0, 1]


def test_screen_dominant_scores_all_retained():
    dataset, model, rules = _hand_dataset()
    model.table[1.0] = np.array([50.0, 60.0])  # exceeds every finite summary
    result = screen(dataset, np.array([[1.0]]), 0.5, GAUSS1, np.random.default_rng(2),
                    score_model=model)
    # only the xi term remains in the numerator
    assert np.all(result.p_matrix[0] < 0.5)
    assert np.all(result.decisions[0])


def test_screen_min_violating_p_equals_oracle_summary_p():
    # the smallest violating-component p-value equals the p-value of the
    # max violating score, with shared draws
    rng = np.random.default_rng(3)
    labeled = gen_a2(120, rng)
    test = gen_a2(40, rng)
    rules = [GreaterEqualRule(t) for t in A2_THRESHOLDS]
    dataset = MultiLabelDataset(labeled.covariates, labeled.responses, rules)
    kernel = KernelSpec("gaussian", 0.6, 4)
    run_rng = np.random.default_rng(7)
    result = screen(dataset, test.covariates, 0.1, kernel, run_rng)

    # rebuild the calibration summary table exactly as screen() does
    perm = np.random.default_rng(7).permutation(120)
    cal_idx = perm[60:]
    model = fit_component_models(
        labeled.covariates[perm[:60]],
        np.vstack([labeled.responses[i] for i in perm[:60]]),
        rules,
    )
    cal_scores = model.component_scores(labeled.covariates[cal_idx])
    summaries = np.array([
        summary_score(cal_scores[r], labeled.responses[i], rules)
        for r, i in enumerate(cal_idx)
    ])
    calib = CalibrationSet(labeled.covariates[cal_idx], summaries)
    test_scores = model.component_scores(test.covariates)
    for j in range(40):
        viol = test.violations[j]
        if not viol.any():
            continue
        vbar = test_scores[j][viol].max()
        oracle = localized_p_value(
            calib, test.covariates[j], vbar, kernel,
            xi=result.xi[j], x_tilde=result.x_tilde[j],
        )
        assert min(result.p_matrix[j][viol]) == pytest.approx(oracle.value, rel=1e-12)


def test_screen_p_monotone_in_component_score():
    dataset, model, rules = _hand_dataset()
    model.table[1.0] = np.array([0.15, 0.45])
    result = screen(dataset, np.array([[1.0]]), 0.5, GAUSS1, np.random.default_rng(4),
                    score_model=model)
    assert result.p_matrix[0, 1] <= result.p_matrix[0, 0]


def test_fwer_metrics_counts():
    class R:
        def __init__(self, decisions):
            self.decisions = decisions

    rules = [MemberRule(frozenset({1}))] * 2
    truth = [np.array([0.0, 1.0]), np.array([1.0, 1.0]), np.array([0.0, 0.0])]
    # point 0: component 0 violates; point 2: both violate
    no_retain = R(np.zeros((3, 2), dtype=bool))
    assert fwer_metrics(no_retain, truth, rules) == 0.0
    all_retain = R(np.ones((3, 2), dtype=bool))
    assert fwer_metrics(all_retain, truth, rules) == pytest.approx(2.0 / 3.0)
    mixed = R(np.array([[True, False], [True, True], [False, False]]))
    assert fwer_metrics(mixed, truth, rules) == pytest.approx(1.0 / 3.0)
    with pytest.raises(UndefinedMetricError):
        fwer_metrics(mixed, truth, rules, condition=np.zeros(3, dtype=bool))
    cond = np.array([True, False, False])
    assert fwer_metrics(mixed, truth, rules, condition=cond) == pytest.approx(1.0)


def test_screen_baseline_uses_unweighted_p():
    dataset, model, rules = _hand_dataset()
    result = screen(dataset, np.array([[1.0]]), 0.5, GAUSS1, np.random.default_rng(5),
                    score_model=model, localized=False)
    xi = result.xi[0]
    # two calibration points: count of summaries >= each component score
    perm = np.random.default_rng(5).permutation(4)
    cal_idx = perm[2:]
    summaries = np.array([
        summary_score(model.component_scores(dataset.covariates[i : i + 1])[0],
                      dataset.responses[i], rules)
        for i in cal_idx
    ])
    for s, v in enumerate(model.table[1.0]):
        count = int((summaries >= v).sum())
        assert result.p_matrix[0, s] == pytest.approx((count + xi) / 3.0, rel=1e-12)
