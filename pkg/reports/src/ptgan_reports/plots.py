"""Figure rendering over run bundles and fairness tables."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bundles import RunBundle

_LOG_FLOOR = 1e-300


def plot_variance(bundles: list[RunBundle], out_path: str,
                  field: str = "loss_var", title: str | None = None) -> str:
    """Log of a variance metric over iterations; replicates are averaged
    with a one-standard-deviation band."""
    if not bundles:
        raise ValueError("plot_variance: no runs given")
    series = []
    for b in bundles:
        iters, vals = b.metric_series(field)
        series.append((iters, np.log(np.maximum(vals, _LOG_FLOOR))))

    common = series[0][0]
    for iters, _ in series[1:]:
        common = np.intersect1d(common, iters)
    if common.size == 0:
        raise ValueError("plot_variance: runs share no checkpoint iterations")
    aligned = []
    for iters, vals in series:
        idx = np.searchsorted(iters, common)
        aligned.append(vals[idx])
    stack = np.vstack(aligned)

    fig, ax = plt.subplots(figsize=(6, 4))
    mean = stack.mean(axis=0)
    ax.plot(common, mean, lw=1.5,
            label=f"{field} ({stack.shape[0]} runs)")
    if stack.shape[0] > 1:
        std = stack.std(axis=0, ddof=1)
        ax.fill_between(common, mean - std, mean + std, alpha=0.3)
    ax.set_xlabel("iteration")
    ax.set_ylabel(f"log {field}")
    ax.set_title(title or f"log {field} over training")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path


def read_fairgen_table(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        rows = []
        for row in csv.DictReader(fh):
            if not row.get("auc"):
                continue
            rows.append({
                "alpha": float(row["alpha"]) if row.get("alpha") else None,
                "model": row.get("model") or "model",
                "auc": float(row["auc"]),
                "sp": float(row["sp"]),
            })
    return rows


def pareto_front(points: list[tuple]) -> list[tuple]:
    """Non-dominated (auc, sp) pairs, sorted by auc (higher auc and lower
    sp dominates)."""

    def dominates(q, p):
        return q[0] >= p[0] and q[1] <= p[1] and (q[0] > p[0] or q[1] < p[1])

    out = [p for p in points if not any(dominates(q, p) for q in points)]
    return sorted(set(out))


def plot_frontier(table, out_path: str, title: str | None = None) -> dict:
    """Scatter of all (auc, sp) rows plus the frontier polyline per model.
    Accepts a fairgen table path or pre-parsed row dicts.  Returns the
    frontier per model."""
    rows = read_fairgen_table(table) if isinstance(table, str) else list(table)
    if not rows:
        raise ValueError("plot_frontier: empty table")
    by_model: dict[str, list] = {}
    for row in rows:
        by_model.setdefault(row.get("model", "model"), []).append(
            (row["auc"], row["sp"]))

    fig, ax = plt.subplots(figsize=(5, 4))
    frontiers = {}
    for model, pts in sorted(by_model.items()):
        pts_arr = np.array(pts)
        ax.scatter(pts_arr[:, 1], pts_arr[:, 0], s=18, alpha=0.6, label=model)
        front = pareto_front(pts)
        frontiers[model] = front
        fr = np.array(front)
        ax.plot(fr[:, 1], fr[:, 0], lw=1.5, marker="o", ms=4)
    ax.set_xlabel("statistical parity gap")
    ax.set_ylabel("AUC")
    ax.set_title(title or "utility/fairness trade-off")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return frontiers


def plot_density(samples: np.ndarray, centers, out_path: str,
                 title: str | None = None) -> str:
    """Scatter (2-D) or histogram-density (1-D) panel with target centers
    overlaid."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples.reshape(-1, 1)
    if samples.size == 0:
        raise ValueError("plot_density: no samples")
    d = samples.shape[1]
    if d > 2:
        raise ValueError(f"plot_density: dimension {d} > 2 not drawable")
    centers = None if centers is None else np.atleast_2d(
        np.asarray(centers, dtype=float))

    fig, ax = plt.subplots(figsize=(5, 4.5))
    if d == 1:
        ax.hist(samples.ravel(), bins=min(80, max(5, samples.shape[0] // 10)),
                density=True, alpha=0.6, label="samples")
        if centers is not None:
            for c in centers.ravel():
                ax.axvline(c, color="crimson", lw=1.0, ls="--")
        ax.set_xlabel("x")
        ax.set_ylabel("density")
    else:
        ax.scatter(samples[:, 0], samples[:, 1], s=6, alpha=0.4,
                   label="samples")
        if centers is not None:
            ax.scatter(centers[:, 0], centers[:, 1], marker="x", s=80,
                       color="crimson", label="targets")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
        ax.legend()
    ax.set_title(title or "generated vs target")
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path
