import numpy as np
import pytest

from cct.kernels import KernelSpec
from cct.outliers import (
    OutlierRun,
    auxiliary_p_value,
    bh_procedure,
    detect_outliers,
    detect_outliers_from_scores,
    fdp_and_power,
)
from cct.pvalues import CalibrationSet, batch_localized_p_values
from cct.harness import CqrScoreFamily, OneClassScoreFamily
from cct.scenarios import gen_a1


def bh_bruteforce(p, alpha):
    """Definitional BH: try every candidate rejection count."""
    p = np.asarray(p, dtype=float)
    m = len(p)
    r_star = 0
    for r in range(m + 1):
        if np.sum(p <= alpha * r / m) >= r:
            r_star = max(r_star, r)
    return set(np.nonzero(p <= alpha * r_star / m)[0]) if r_star > 0 else set()


def test_bh_hand_instance():
    rejected = bh_procedure([0.01, 0.02, 0.5], 0.15)
    assert set(rejected) == {0, 1}


def test_bh_all_ones_empty():
    assert bh_procedure(np.ones(10), 0.1).size == 0


def test_bh_all_zeros_full():
    assert set(bh_procedure(np.zeros(7), 0.1)) == set(range(7))


def test_bh_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = int(rng.integers(1, 51))
        p = rng.uniform(size=m)
        if rng.uniform() < 0.3:  # inject small p-values so rejections happen
            p[: int(rng.integers(0, m + 1))] *= 0.05
        alpha = float(rng.uniform(0.02, 0.4))
        assert set(bh_procedure(p, alpha)) == bh_bruteforce(p, alpha)


def test_bh_validation():
    with pytest.raises(ValueError):
        bh_procedure([0.5, 1.5], 0.1)
    with pytest.raises(ValueError):
        bh_procedure([0.5], 1.2)


GAUSS1 = KernelSpec("gaussian", 0.5, 1)


def _toy_batch(seed, n_cal=30, m=25):
    rng = np.random.default_rng(seed)
    cal = CalibrationSet(rng.uniform(0, 1, (n_cal, 1)), rng.standard_normal(n_cal))
    test_x = rng.uniform(0, 1, (m, 1))
    test_v = rng.standard_normal(m)
    return cal, test_x, test_v


def test_auxiliary_matches_direct_formula():
    cal, test_x, test_v = _toy_batch(1)
    rng = np.random.default_rng(11)
    batch = batch_localized_p_values(cal, test_x, test_v, GAUSS1, rng)
    m = len(test_v)
    for j in range(0, m, 5):
        for l in range(m):
            if l == j:
                continue
            direct = auxiliary_p_value(
                cal, test_x[j], test_v[j], test_v[l], GAUSS1, batch.xi[j], batch.x_tilde[j]
            )
            cached = batch.p[j] if test_v[j] <= test_v[l] else batch.p_reduced[j]
            assert direct == pytest.approx(cached, rel=1e-12)


def test_auxiliary_never_exceeds_base():
    cal, test_x, test_v = _toy_batch(2)
    rng = np.random.default_rng(12)
    batch = batch_localized_p_values(cal, test_x, test_v, GAUSS1, rng)
    for j in range(len(test_v)):
        for l in range(len(test_v)):
            if l == j:
                continue
            aux = auxiliary_p_value(
                cal, test_x[j], test_v[j], test_v[l], GAUSS1, batch.xi[j], batch.x_tilde[j]
            )
            assert aux <= batch.p[j] + 1e-15
            if test_v[j] <= test_v[l]:
                assert aux == pytest.approx(batch.p[j], rel=1e-14)
            else:
                assert aux < batch.p[j]


def test_detect_outliers_pruning_fixed_point():
    cal, test_x, test_v = _toy_batch(3, n_cal=60, m=40)
    run = detect_outliers_from_scores(cal, test_x, test_v, 0.3, GAUSS1, np.random.default_rng(5))
    m = len(test_v)
    sel = np.zeros(m, dtype=bool)
    sel[run.final_set] = True
    # every final member satisfies both conditions
    for j in run.final_set:
        assert run.p_values[j] <= 0.3 * run.aux_set_sizes[j] / m
        assert run.zeta[j] * run.aux_set_sizes[j] <= run.r_star
    # r* is the largest self-consistent count (brute force over r)
    init = run.p_values <= 0.3 * run.aux_set_sizes / m
    best = 0
    for r in range(m + 1):
        if np.sum(init & (run.zeta * run.aux_set_sizes <= r)) >= r:
            best = max(best, r)
    assert run.r_star == best
    assert len(run.final_set) >= run.r_star
    assert set(run.final_set) <= set(run.initial_set)


def test_detect_outliers_m_equals_one():
    cal, _, _ = _toy_batch(4)
    run = detect_outliers_from_scores(
        cal, np.array([[0.5]]), np.array([10.0]), 0.2, GAUSS1, np.random.default_rng(6)
    )
    # single hypothesis: aux set is {1}, decision reduces to p <= alpha and zeta <= r*
    assert run.aux_set_sizes.tolist() == [1]
    assert run.p_values[0] <= 0.2
    assert run.final_set.tolist() == [0]


def test_rhat_sizes_match_per_j_bh_on_aux_vectors():
    cal, test_x, test_v = _toy_batch(7, n_cal=40, m=30)
    rng = np.random.default_rng(8)
    batch = batch_localized_p_values(cal, test_x, test_v, GAUSS1, rng)
    run = detect_outliers_from_scores(
        cal, test_x, test_v, 0.25, GAUSS1, np.random.default_rng(8)
    )
    m = len(test_v)
    for j in range(m):
        vec = np.where(test_v <= test_v[j], batch.p, batch.p_reduced)
        vec[j] = 0.0
        assert run.aux_set_sizes[j] == len(bh_bruteforce(vec, 0.25))


def test_detect_outliers_deterministic():
    sample = gen_a1(200, False, np.random.default_rng(0))
    test = gen_a1(80, True, np.random.default_rng(1))
    kernel = KernelSpec("gaussian", 0.3, 1)
    runs = [
        detect_outliers(
            sample.covariates, sample.responses, test.covariates, test.responses,
            0.2, kernel, CqrScoreFamily(k=20), np.random.default_rng(99), weight_cols=(9,),
        )
        for _ in range(2)
    ]
    assert np.array_equal(runs[0].final_set, runs[1].final_set)
    assert np.array_equal(runs[0].p_values, runs[1].p_values)


def test_detect_outliers_label_free_path():
    rng = np.random.default_rng(10)
    clean = rng.standard_normal((100, 3))
    test = np.vstack([rng.standard_normal((40, 3)), rng.standard_normal((10, 3)) * 6])
    kernel = KernelSpec("gaussian", 0.5, 3)
    run = detect_outliers(
        clean, None, test, None, 0.2, kernel, OneClassScoreFamily(k=3),
        np.random.default_rng(2),
    )
    assert isinstance(run, OutlierRun)
    assert run.p_values.shape == (50,)


def test_fdp_and_power():
    run = OutlierRun(
        p_values=np.zeros(4), xi=np.zeros(4), x_tilde=np.zeros((4, 1)),
        aux_set_sizes=np.ones(4, dtype=int), initial_set=np.array([0, 1]),
        final_set=np.array([0, 1]), zeta=np.zeros(4), r_star=2,
    )
    truth = np.array([False, True, True, False])  # index 1, 2 are outliers
    fdp, power = fdp_and_power(run, truth)
    assert fdp == pytest.approx(0.5)
    assert power == pytest.approx(0.5)

    empty = OutlierRun(
        p_values=np.zeros(4), xi=np.zeros(4), x_tilde=np.zeros((4, 1)),
        aux_set_sizes=np.ones(4, dtype=int), initial_set=np.array([], dtype=int),
        final_set=np.array([], dtype=int), zeta=np.zeros(4), r_star=0,
    )
    fdp, power = fdp_and_power(empty, truth)
    assert fdp == 0.0 and power == 0.0

    exact = OutlierRun(
        p_values=np.zeros(4), xi=np.zeros(4), x_tilde=np.zeros((4, 1)),
        aux_set_sizes=np.ones(4, dtype=int), initial_set=np.array([1, 2]),
        final_set=np.array([1, 2]), zeta=np.zeros(4), r_star=2,
    )
    fdp, power = fdp_and_power(exact, truth)
    assert fdp == 0.0 and power == 1.0
