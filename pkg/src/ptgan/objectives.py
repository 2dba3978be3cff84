"""Divergence losses and critic/generator regularizers.

All three critic losses are oriented so the critic ascends them; the
matching generator losses are descended.  Input-gradient penalties (the
coherency penalty and the MP/GP baselines) differentiate the critic with
respect to its data coordinates only, never the temperature input, and stay
differentiable with respect to the critic parameters via the second-order
graph.
"""

from __future__ import annotations

import logging

import numpy as np

from . import autodiff as ad
from . import nets
from .tempering import TemperedBatch

log = logging.getLogger(__name__)

LOSS_KINDS = ("nd", "jsd", "pd")
PENALTY_KINDS = ("cp", "mp", "gp", "none")

DEFAULT_CP_LAMBDA = 100.0
DEFAULT_MP_LAMBDA = 1.0
DEFAULT_GP_LAMBDA = 10.0
DEFAULT_FAIR_LAMBDA = 10.0

# Keeps the gradient of the row norm finite when a critic's input gradient
# vanishes exactly; three orders below any tested tolerance.
_NORM_EPS = 1e-24


def head_for_loss(kind: str) -> str:
    if kind == "jsd":
        return "sigmoid"
    if kind in ("nd", "pd"):
        return "linear"
    raise ValueError(f"unknown loss kind {kind!r}")


def critic_loss(kind: str, d_real: ad.Tensor, d_fake: ad.Tensor) -> ad.Tensor:
    """Batch critic objective (ascended by the critic)."""
    if d_real.shape[1] != 1 or d_fake.shape[1] != 1:
        raise ValueError("critic_loss: scores must be column vectors")
    if kind == "nd":
        return ad.sub(ad.mean_all(d_real), ad.mean_all(d_fake))
    if kind == "jsd":
        _require_unit_interval(d_real)
        _require_unit_interval(d_fake)
        ones = ad.constant(np.ones(d_fake.shape))
        return ad.add(ad.mean_all(ad.log(d_real)),
                      ad.mean_all(ad.log(ad.sub(ones, d_fake))))
    if kind == "pd":
        ones = ad.constant(np.ones(d_real.shape))
        real_term = ad.mean_all(ad.square(ad.sub(d_real, ones)))
        fake_term = ad.mean_all(ad.square(d_fake))
        return ad.neg(ad.scale(ad.add(real_term, fake_term), 0.5))
    raise ValueError(f"unknown loss kind {kind!r}")


def generator_loss(kind: str, d_fake: ad.Tensor) -> ad.Tensor:
    """Generator objective (descended).  JSD uses the non-saturating form
    and PD targets the real label, the conventions that keep early
    gradients alive."""
    if kind == "nd":
        return ad.neg(ad.mean_all(d_fake))
    if kind == "jsd":
        _require_unit_interval(d_fake)
        return ad.neg(ad.mean_all(ad.log(d_fake)))
    if kind == "pd":
        ones = ad.constant(np.ones(d_fake.shape))
        return ad.scale(ad.mean_all(ad.square(ad.sub(d_fake, ones))), 0.5)
    raise ValueError(f"unknown loss kind {kind!r}")


def _require_unit_interval(t: ad.Tensor):
    if np.any(t.data <= 0.0) or np.any(t.data >= 1.0):
        raise ValueError("jsd loss needs sigmoid critic outputs in (0, 1)")


def input_gradients(params: nets.MlpParams, points: np.ndarray, alpha,
                     head: str) -> ad.Tensor:
    """Row-wise gradients of the critic with respect to its data input,
    as differentiable graph nodes."""
    x = ad.tensor(np.asarray(points, dtype=np.float64))
    out = nets.critic_forward(params, x, alpha, head=head)
    (gx,) = ad.backward(ad.sum_all(out), [x], create_graph=True)
    return gx


def coherency_penalty(params: nets.MlpParams, batch: TemperedBatch,
                      lam: float = DEFAULT_CP_LAMBDA,
                      head: str = "linear") -> ad.Tensor:
    """Mean squared directional derivative of the critic at the blended
    rows along q1 - q2; synchronizes learning pace across temperatures."""
    if lam < 0:
        raise ValueError("coherency_penalty: lam must be >= 0")
    gx = input_gradients(params, batch.q_tilde, batch.alpha_tilde, head)
    direction = ad.constant(batch.q1 - batch.q2)
    dots = ad.dot_rows(gx, direction)
    return ad.scale(ad.mean_all(ad.square(dots)), lam)


def mp_penalty(params: nets.MlpParams, interp_points, lam: float = DEFAULT_MP_LAMBDA,
               alpha=1.0, head: str = "linear") -> ad.Tensor:
    """Largest squared input-gradient norm over the interpolated points."""
    gx = input_gradients(params, interp_points, alpha, head)
    sq_norms = ad.sum_cols(ad.square(gx))
    return ad.scale(ad.max_all(sq_norms), lam)


def gp_penalty(params: nets.MlpParams, interp_points, lam: float = DEFAULT_GP_LAMBDA,
               alpha=1.0, head: str = "linear") -> ad.Tensor:
    """Mean squared deviation of the input-gradient norm from 1."""
    gx = input_gradients(params, interp_points, alpha, head)
    sq = ad.add(ad.sum_cols(ad.square(gx)),
                ad.constant(np.full((1, 1), _NORM_EPS)))
    norms = ad.sqrt(sq)
    ones = ad.constant(np.ones(norms.shape))
    return ad.scale(ad.mean_all(ad.square(ad.sub(norms, ones))), lam)


def make_interp_points(x_real: np.ndarray, x_fake: np.ndarray, rng) -> np.ndarray:
    """Per-row random blend of real and generated rows for MP/GP."""
    if x_real.shape != x_fake.shape:
        raise ValueError("make_interp_points: shapes differ")
    nu = rng.random(x_real.shape[0])[:, None]
    return nu * x_real + (1.0 - nu) * x_fake


def fairness_penalty(gen_output: ad.Tensor, y_col: int, a_col: int,
                     lam_f: float = DEFAULT_FAIR_LAMBDA) -> ad.Tensor:
    """Soft statistical-parity gap of the generated batch: absolute
    difference of the soft-weighted conditional means of the outcome column
    given each side of the sensitive column."""
    n, width = gen_output.shape
    if not (0 <= y_col < width and 0 <= a_col < width):
        raise ValueError("fairness_penalty: column index out of range")
    y = ad.slice_cols(gen_output, y_col, y_col + 1)
    a = ad.slice_cols(gen_output, a_col, a_col + 1)
    a_mean = float(np.mean(a.data))
    if a_mean < 1e-6 or (1.0 - a_mean) < 1e-6:
        log.warning("fairness_penalty: degenerate sensitive column "
                    "(mean %.2g), returning 0", a_mean)
        return ad.constant(np.zeros((1, 1)))
    ones = ad.constant(np.ones((n, 1)))
    not_a = ad.sub(ones, a)
    mean_pos = ad.div(ad.mean_all(ad.mul(y, a)), ad.mean_all(a))
    mean_neg = ad.div(ad.mean_all(ad.mul(y, not_a)), ad.mean_all(not_a))
    return ad.scale(ad.abs_(ad.sub(mean_pos, mean_neg)), lam_f)
