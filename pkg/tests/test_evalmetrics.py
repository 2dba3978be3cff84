import itertools
import math

import numpy as np
import pytest

from ptgan import evalmetrics as em


def w1_brute_force(a, b):
    """Minimum mean pairing cost over all permutations; the oracle for the
    assignment solver."""
    a = np.atleast_2d(a)
    b = np.atleast_2d(b)
    n = a.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(n)):
        cost = np.linalg.norm(a - b[list(perm)], axis=1).mean()
        best = min(best, cost)
    return best


def test_w1_identical_sets_zero():
    x = np.random.default_rng(0).normal(size=(10, 3))
    assert em.w1_distance(x, x.copy()).value == 0.0


def test_w1_1d_sorted_example():
    res = em.w1_distance(np.array([0.0, 2.0]), np.array([1.0, 3.0]))
    assert res.value == 1.0
    assert res.method == "sorted-1d"


def test_w1_small_2d_matches_brute_force():
    rng = np.random.default_rng(42)
    for _ in range(25):
        n = int(rng.integers(2, 7))
        d = int(rng.integers(2, 4))
        a = rng.normal(size=(n, d))
        b = rng.normal(size=(n, d))
        got = em.w1_distance(a, b)
        assert got.method == "exact-assignment"
        assert got.value == pytest.approx(w1_brute_force(a, b), abs=1e-9)


def test_w1_symmetry_and_triangle():
    rng = np.random.default_rng(7)
    for _ in range(10):
        a = rng.normal(size=(16, 2))
        b = rng.normal(size=(16, 2))
        c = rng.normal(size=(16, 2))
        ab = em.w1_distance(a, b).value
        ba = em.w1_distance(b, a).value
        assert ab == pytest.approx(ba, abs=1e-12)
        ac = em.w1_distance(a, c).value
        bc = em.w1_distance(b, c).value
        assert ac <= ab + bc + 1e-9


def test_w1_unequal_1d_matches_lcm_expansion():
    rng = np.random.default_rng(3)
    for _ in range(10):
        na, nb = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        a = rng.normal(size=na)
        b = rng.normal(size=nb)
        got = em.w1_distance(a, b).value
        m = math.lcm(na, nb)
        expanded = em.w1_distance(np.repeat(a, m // na), np.repeat(b, m // nb))
        assert got == pytest.approx(expanded.value, abs=1e-12)


def test_w1_subsamples_large_inputs():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(2000, 2))
    b = rng.normal(size=(2000, 2))
    res = em.w1_distance(a, b)
    assert res.method == "subsampled"
    assert res.value >= 0
    # Deterministic: same inputs, same value.
    assert em.w1_distance(a, b).value == res.value


def test_w1_rejects_empty():
    with pytest.raises(ValueError):
        em.w1_distance(np.empty((0, 1)), np.ones((3, 1)))


def test_mode_coverage_all_centers():
    centers = np.random.default_rng(1).normal(size=(8, 2)) * 3
    samples = np.repeat(centers, 50, axis=0)
    covered, fractions = em.mode_coverage(samples, centers, radius=0.1)
    assert covered == 8
    assert np.allclose(fractions, 1 / 8)


def test_mode_coverage_single_cluster():
    centers = np.array([[0.0, 0.0], [5.0, 5.0]])
    samples = np.zeros((100, 2))
    covered, fractions = em.mode_coverage(samples, centers, radius=0.5)
    assert covered == 1
    assert fractions[1] == 0.0


def test_mode_coverage_ground_truth_mixture():
    rng = np.random.default_rng(11)
    angles = 2 * np.pi * np.arange(8) / 8
    centers = 1.5 * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    comp = rng.integers(0, 8, size=20_000)
    samples = centers[comp] + 0.1 * rng.standard_normal((20_000, 2))
    covered, fractions = em.mode_coverage(samples, centers, radius=0.4)
    assert covered == 8
    assert fractions.sum() >= 0.99


def test_prop3_gap_small_run():
    gap, sigma_star = em.check_prop3_moments(-1.5, 1.5, 0.1, n_mc=200_000, seed=1)
    assert gap == pytest.approx(2.25, abs=0.02)
    assert sigma_star == pytest.approx(0.49, abs=0.02)


def test_prop3_equal_means_degenerate():
    gap, _ = em.check_prop3_moments(1.0, 1.0, 0.5, n_mc=100_000, seed=2)
    assert abs(gap) < 0.02


def test_prop3_validates_inputs():
    with pytest.raises(ValueError):
        em.check_prop3_moments(0, 1, -1.0, n_mc=200_000)
    with pytest.raises(ValueError):
        em.check_prop3_moments(0, 1, 1.0, n_mc=10)


def test_logistic_separable_auc_one():
    rng = np.random.default_rng(4)
    x_train = np.concatenate([rng.uniform(-2, -1, 200), rng.uniform(1, 2, 200)])
    y_train = np.concatenate([np.zeros(200), np.ones(200)])
    x_test = np.concatenate([rng.uniform(-2, -1, 100), rng.uniform(1, 2, 100)])
    y_test = np.concatenate([np.zeros(100), np.ones(100)])
    scores = em.logistic_fit_predict(x_train, y_train, x_test)
    assert em.auc(scores, y_test) == 1.0


def test_logistic_null_auc_near_half():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(10_000, 3))
    y = rng.integers(0, 2, size=10_000)
    scores = em.logistic_fit_predict(x[:8000], y[:8000], x[8000:])
    assert 0.45 <= em.auc(scores, y[8000:]) <= 0.55


def test_logistic_duplication_invariance():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(100, 2))
    y = (x[:, 0] + rng.normal(size=100) > 0).astype(float)
    m1 = em.logistic_fit(x, y)
    m2 = em.logistic_fit(np.vstack([x, x]), np.concatenate([y, y]))
    assert np.allclose(m1.coef, m2.coef, atol=1e-12)


def test_logistic_rejects_single_class():
    with pytest.raises(ValueError, match="single class"):
        em.logistic_fit(np.ones((5, 1)), np.ones(5))


def test_auc_perfect_ordering():
    assert em.auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auc_monotone_invariance():
    rng = np.random.default_rng(10)
    scores = rng.normal(size=200)
    labels = rng.integers(0, 2, size=200)
    base = em.auc(scores, labels)
    assert em.auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
    assert em.auc(3 * scores + 7, labels) == pytest.approx(base, abs=1e-12)


def test_auc_rejects_one_class():
    with pytest.raises(ValueError):
        em.auc([0.5, 0.6], [1, 1])


def test_statistical_parity_basics():
    scores = np.array([0.9, 0.8, 0.1, 0.2])
    groups = np.array([1, 1, 0, 0])
    assert em.statistical_parity(scores, groups, tau=0.5) == 1.0
    # All predicted positive: no gap.
    assert em.statistical_parity(scores, groups, tau=0.0) == 0.0
    with pytest.raises(ValueError):
        em.statistical_parity(scores, np.ones(4), tau=0.5)


def test_statistical_parity_independent_scores():
    rng = np.random.default_rng(12)
    scores = rng.random(20_000)
    groups = rng.integers(0, 2, size=20_000)
    assert em.statistical_parity(scores, groups, 0.5) < 0.03


def test_best_accuracy_threshold():
    scores = np.array([0.1, 0.4, 0.6, 0.9])
    labels = np.array([0, 0, 1, 1])
    tau = em.best_accuracy_threshold(scores, labels)
    assert 0.4 <= tau < 0.6
    hard = scores > tau
    assert np.array_equal(hard, labels.astype(bool))


def test_s_t_score_examples():
    assert em.s_t_score(0.8, [0.8, 0.8, 0.8, 0.8]) == 0.0
    assert em.s_t_score(0.8, [0.5, 0.6, 0.7, 0.7]) == pytest.approx(0.05)
    # Constant offset: score = delta * count / (count + 2).
    t_c, delta = 10, 0.3
    series = [0.5 - delta] * t_c
    count = t_c - math.ceil(t_c / 2)
    want = delta * count / (count + 2)
    assert em.s_t_score(0.5, series) == pytest.approx(want)


def test_s_t_score_needs_two_points():
    with pytest.raises(ValueError):
        em.s_t_score(0.5, [0.5])


def test_pareto_frontier_dominance_example():
    assert em.pareto_frontier([(0.8, 0.4), (0.7, 0.7)]) == [(0.8, 0.4)]
    # (0.6, 0.6) does not dominate (0.7, 0.7): its auc is lower even though
    # its sp is lower, so the two form an anti-chain.
    assert em.pareto_frontier([(0.7, 0.7), (0.6, 0.6)]) == [(0.6, 0.6), (0.7, 0.7)]


def test_pareto_frontier_single_and_antichain():
    assert em.pareto_frontier([(0.5, 0.5)]) == [(0.5, 0.5)]
    anti = [(0.6, 0.1), (0.7, 0.2), (0.8, 0.3)]
    assert em.pareto_frontier(anti) == sorted(anti)


def test_pareto_frontier_is_antichain_and_covers_inputs():
    rng = np.random.default_rng(13)
    pts = [(float(a), float(s)) for a, s in rng.random((50, 2))]
    front = em.pareto_frontier(pts)
    for p in front:
        for q in front:
            if p != q:
                assert not (q[0] >= p[0] and q[1] <= p[1]
                            and (q[0] > p[0] or q[1] < p[1]))
    for p in pts:
        assert p in front or any(
            q[0] >= p[0] and q[1] <= p[1] and (q[0] > p[0] or q[1] < p[1])
            for q in front
        )


def test_geo_repair_identity_at_zero():
    rng = np.random.default_rng(14)
    col = rng.normal(size=40)
    groups = rng.integers(0, 2, size=40)
    groups[:2] = [0, 1]
    out = em.geo_repair(col, groups, 0.0)
    assert np.array_equal(out, col)


def test_geo_repair_full_strength_aligns_quantiles():
    rng = np.random.default_rng(15)
    col = np.concatenate([rng.normal(0, 1, 64), rng.normal(5, 2, 64)])
    groups = np.concatenate([np.zeros(64), np.ones(64)])
    out = em.geo_repair(col, groups, 1.0)
    w1 = em.w1_distance(out[groups == 0], out[groups == 1]).value
    assert w1 < 1e-12


def test_geo_repair_two_value_example():
    col = np.array([0.0, 2.0, 10.0, 12.0])
    groups = np.array([0, 0, 1, 1])
    out = em.geo_repair(col, groups, 1.0)
    assert set(np.round(out, 12)) == {5.0, 7.0}


def test_geo_repair_validates():
    with pytest.raises(ValueError):
        em.geo_repair([1.0, 2.0], [0, 0], 0.5)
    with pytest.raises(ValueError):
        em.geo_repair([1.0, 2.0], [0, 1], 1.5)
