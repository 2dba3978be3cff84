"""Distribution and downstream-task evaluation.

1-Wasserstein distances are exact: sorted quantile integration in 1-D and an
optimal-assignment solve on the Euclidean cost matrix in higher dimension
(deterministically subsampled to 1024 rows per side above that size).  The
downstream model is an in-core logistic regression; richer external models
can consume the CSV exports instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

EXACT_ASSIGNMENT_CAP = 1024
_SUBSAMPLE_SEED = 0x57A7


@dataclass
class W1Result:
    value: float
    method: str  # sorted-1d | exact-assignment | subsampled


@dataclass
class DownstreamScore:
    auc: float
    sp: float
    model: str = "logreg"


def _as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    return a


def w1_distance(samples_a, samples_b) -> W1Result:
    """Exact 1-Wasserstein distance between two empirical distributions."""
    a = _as_matrix(samples_a)
    b = _as_matrix(samples_b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("w1_distance: empty sample set")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"w1_distance: dimensions differ {a.shape} vs {b.shape}")

    if a.shape[1] == 1:
        return W1Result(_w1_sorted_1d(a.ravel(), b.ravel()), "sorted-1d")

    method = "exact-assignment"
    if a.shape[0] > EXACT_ASSIGNMENT_CAP or b.shape[0] > EXACT_ASSIGNMENT_CAP:
        a = _deterministic_subsample(a, EXACT_ASSIGNMENT_CAP)
        b = _deterministic_subsample(b, EXACT_ASSIGNMENT_CAP)
        method = "subsampled"
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            "w1_distance: exact assignment needs equal sample counts, got "
            f"{a.shape[0]} vs {b.shape[0]}"
        )
    cost = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    rows, cols = linear_sum_assignment(cost)
    return W1Result(float(cost[rows, cols].mean()), method)


def _w1_sorted_1d(a: np.ndarray, b: np.ndarray) -> float:
    a = np.sort(a)
    b = np.sort(b)
    if a.size == b.size:
        return float(np.abs(a - b).mean())
    # Unequal counts: integrate |F_a^{-1}(q) - F_b^{-1}(q)| over the merged
    # quantile grid.
    na, nb = a.size, b.size
    edges = np.union1d(np.arange(1, na + 1) / na, np.arange(1, nb + 1) / nb)
    widths = np.diff(np.concatenate([[0.0], edges]))
    ia = np.ceil(edges * na - 1e-12).astype(int) - 1
    ib = np.ceil(edges * nb - 1e-12).astype(int) - 1
    return float((widths * np.abs(a[ia] - b[ib])).sum())


def _deterministic_subsample(x: np.ndarray, k: int) -> np.ndarray:
    if x.shape[0] <= k:
        return x
    rng = np.random.default_rng(_SUBSAMPLE_SEED)
    idx = rng.choice(x.shape[0], size=k, replace=False)
    return x[np.sort(idx)]


def mode_coverage(samples, centers, radius: float, min_fraction: float = 0.02):
    """Count modes receiving at least min_fraction of all samples within
    radius of their center.  Returns (covered, per-mode fractions)."""
    if radius <= 0:
        raise ValueError("mode_coverage: radius must be positive")
    s = _as_matrix(samples)
    c = _as_matrix(centers)
    d2 = ((s[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    within = d2[np.arange(s.shape[0]), nearest] <= radius * radius
    counts = np.bincount(nearest[within], minlength=c.shape[0])
    fractions = counts / s.shape[0]
    return int((fractions >= min_fraction).sum()), fractions


def check_prop3_moments(mu1: float, mu2: float, sigma: float, n_mc: int,
                        seed: int = 0):
    """Monte-Carlo moments of the interpolated two-component mixture.

    Each component blends one base component with an independent draw of the
    full mixture at a weight drawn from Unif(0.5, 1).  Returns the estimated
    between-component mean gap and the average component standard deviation.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if n_mc < 10**5:
        raise ValueError("n_mc must be at least 1e5")
    rng = np.random.default_rng(seed)

    def component(mu_base):
        alpha = rng.uniform(0.5, 1.0, size=n_mc)
        u = rng.normal(mu_base, sigma, size=n_mc)
        pick = rng.integers(0, 2, size=n_mc)
        x2 = rng.normal(np.where(pick == 0, mu1, mu2), sigma)
        return alpha * u + (1.0 - alpha) * x2

    c1 = component(mu1)
    c2 = component(mu2)
    gap = abs(float(c1.mean()) - float(c2.mean()))
    sigma_star = 0.5 * (float(c1.std(ddof=1)) + float(c2.std(ddof=1)))
    return gap, sigma_star


# ---------------------------------------------------------------------------
# downstream classification


def logistic_fit(features, labels, l2: float = 1e-4, iterations: int = 400,
                 lr: float = 2.0):
    """Full-batch gradient-ascent logistic regression; deterministic.

    Features are standardized internally (duplication-invariant), so the
    returned model closes over its own scaling.
    """
    x = _as_matrix(features)
    y = np.asarray(labels, dtype=np.float64).ravel()
    if x.shape[0] != y.size:
        raise ValueError("logistic_fit: feature/label length mismatch")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("logistic_fit: training labels contain a single class")
    if not set(classes) <= {0.0, 1.0}:
        raise ValueError("logistic_fit: labels must be binary 0/1")

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0.0] = 1.0
    xs = (x - mean) / std
    xs = np.hstack([np.ones((xs.shape[0], 1)), xs])
    w = np.zeros(xs.shape[1])
    n = xs.shape[0]
    for _ in range(iterations):
        p = 1.0 / (1.0 + np.exp(-(xs @ w)))
        grad = xs.T @ (y - p) / n
        grad[1:] -= l2 * w[1:]
        w += lr * grad

    def predict(test_features):
        t = _as_matrix(test_features)
        ts = (t - mean) / std
        ts = np.hstack([np.ones((ts.shape[0], 1)), ts])
        return 1.0 / (1.0 + np.exp(-(ts @ w)))

    predict.coef = w
    return predict


def logistic_fit_predict(train_features, train_labels, test_features,
                         **kwargs) -> np.ndarray:
    """Fit on the training split, return scores in [0, 1] for the test."""
    model = logistic_fit(train_features, train_labels, **kwargs)
    return model(test_features)


def auc(scores, labels) -> float:
    """Rank-statistic AUC with ties averaged."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc: needs both classes present")
    ranks = rankdata(s)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


def statistical_parity(scores, groups, tau: float) -> float:
    """|P(score > tau | A=1) - P(score > tau | A=0)|."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    a = np.asarray(groups).ravel()
    hard = s > tau
    m1 = a == 1
    m0 = a == 0
    if m1.sum() == 0 or m0.sum() == 0:
        raise ValueError("statistical_parity: a group is empty")
    return float(abs(hard[m1].mean() - hard[m0].mean()))


def best_accuracy_threshold(scores, labels) -> float:
    """Operating point: threshold maximizing training accuracy (smallest on
    ties)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    order = np.argsort(s, kind="stable")
    uniq = np.unique(s[order])
    candidates = np.concatenate([[uniq[0] - 1.0],
                                 (uniq[:-1] + uniq[1:]) / 2.0])
    best_tau, best_acc = candidates[0], -1.0
    for tau in candidates:
        acc = float(((s > tau) == (y == 1)).mean())
        if acc > best_acc + 1e-15:
            best_acc, best_tau = acc, tau
    return float(best_tau)


def downstream_scores(train_features, train_labels, test_features,
                      test_labels, test_groups, model: str = "logreg"
                      ) -> DownstreamScore:
    """Train on (usually synthetic) data, evaluate AUC and SP on real data."""
    fitted = logistic_fit(train_features, train_labels)
    train_scores = fitted(train_features)
    tau = best_accuracy_threshold(train_scores, train_labels)
    test_scores = fitted(test_features)
    return DownstreamScore(
        auc=auc(test_scores, test_labels),
        sp=statistical_parity(test_scores, test_groups, tau),
        model=model,
    )


# ---------------------------------------------------------------------------
# convergence score and fairness frontier


def s_t_score(s_train: float, series) -> float:
    """Late-half average gap between the reference score and the checkpoint
    series: sum over the second half of |s_train - s_t|, divided by
    (count + 2)."""
    s = list(series)
    t_c = len(s)
    if t_c < 2:
        raise ValueError("s_t_score: need at least 2 checkpoints")
    start = math.ceil(t_c / 2) + 1  # 1-indexed
    gaps = [abs(s_train - s[t - 1]) for t in range(start, t_c + 1)]
    return float(sum(gaps) / (t_c - math.ceil(t_c / 2) + 2))


def pareto_frontier(points):
    """Non-dominated (auc, sp) pairs; higher auc and lower sp dominates.
    Output is sorted by auc ascending (stable)."""
    pts = [(float(a), float(s)) for a, s in points]
    out = []
    for p in pts:
        dominated = any(
            (q[0] >= p[0] and q[1] <= p[1] and (q[0] > p[0] or q[1] < p[1]))
            for q in pts
        )
        if not dominated:
            out.append(p)
    out.sort(key=lambda t: (t[0], t[1]))
    return out


def geo_repair(column, groups, lam_p: float) -> np.ndarray:
    """Quantile repair of a single column toward the cross-group midpoint
    quantile function, with strength lam_p in [0, 1]."""
    if not (0.0 <= lam_p <= 1.0):
        raise ValueError("geo_repair: lam_p must be in [0, 1]")
    c = np.asarray(column, dtype=np.float64).ravel()
    a = np.asarray(groups).ravel()
    if c.size != a.size:
        raise ValueError("geo_repair: column/group length mismatch")
    m0 = a == 0
    m1 = a == 1
    if m0.sum() == 0 or m1.sum() == 0:
        raise ValueError("geo_repair: both groups must be non-empty")

    sorted0 = np.sort(c[m0])
    sorted1 = np.sort(c[m1])

    def quantile(sorted_vals, q):
        idx = np.ceil(q * sorted_vals.size - 1e-12).astype(int) - 1
        return sorted_vals[np.clip(idx, 0, sorted_vals.size - 1)]

    out = c.copy()
    for mask, own in ((m0, sorted0), (m1, sorted1)):
        vals = c[mask]
        # Empirical CDF position of each value inside its own group.
        q = np.searchsorted(own, vals, side="right") / own.size
        pooled = 0.5 * (quantile(sorted0, q) + quantile(sorted1, q))
        out[mask] = (1.0 - lam_p) * quantile(own, q) + lam_p * pooled
    return out
