"""Alternating critic/generator optimization with Adam, plus the
gradient-variance diagnostics.

Random draws per outer iteration happen in a fixed order (minibatch
construction, then Gumbel noise for tabular heads, then penalty
interpolation weights per critic step, then gradient noise), so a run is
fully reproducible from its seed and an external reimplementation can
replay the exact stream.

Any non-finite loss aborts the run with a TrainDivergence naming the
iteration: divergence is a finding here, never something to skip over.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import nets, objectives
from .nets import MlpParams
from .tempering import (
    AlphaDist,
    GroupedData,
    make_batch,
    make_fair_batch,
    sample_alpha,
)


class TrainDivergence(RuntimeError):
    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class TrainConfig:
    loss: str = "nd"
    penalty: str = "cp"  # cp | mp | gp | none
    lam: float | None = None  # penalty weight; per-kind default when None
    r: float = 0.9
    n_b: int = 100
    iterations: int = 20_000
    critic_steps: int = 1
    lr_d: float = 1e-4
    lr_g: float = 1e-4
    beta1: float = 0.0
    beta2: float = 0.9
    eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int | None = None  # default: iterations // 50
    use_interpolated_z: bool = True
    d_z: int = 4
    fairness_lambda: float | None = None
    fair_y_col: int | None = None
    fair_a_col: int | None = None
    grad_noise_sigma: float = 0.0
    grad_var_full: bool = False

    def __post_init__(self):
        if self.loss not in objectives.LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.penalty not in objectives.PENALTY_KINDS:
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if self.n_b < 2:
            raise ValueError("n_b must be >= 2")
        if self.critic_steps < 1:
            raise ValueError("critic_steps must be >= 1")
        if self.lr_d <= 0 or self.lr_g <= 0:
            raise ValueError("learning rates must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must be in [0, 1)")
        if not (0.0 <= self.r <= 1.0):
            raise ValueError("r must be in [0, 1]")
        if (self.fairness_lambda is not None) and (
            self.fair_y_col is None or self.fair_a_col is None
        ):
            raise ValueError("fairness penalty needs fair_y_col and fair_a_col")

    @property
    def penalty_weight(self) -> float:
        if self.lam is not None:
            return self.lam
        return {
            "cp": objectives.DEFAULT_CP_LAMBDA,
            "mp": objectives.DEFAULT_MP_LAMBDA,
            "gp": objectives.DEFAULT_GP_LAMBDA,
            "none": 0.0,
        }[self.penalty]

    @property
    def stride(self) -> int:
        if self.checkpoint_every is not None:
            return max(1, self.checkpoint_every)
        return max(1, self.iterations // 50)


@dataclass
class MetricsRecord:
    iteration: int
    loss_mean: float
    loss_var: float
    grad_var_last: float
    critic_norms: list[float]
    gen_norms: list[float]
    wall_time: float
    grad_var_total: float | None = None
    extras: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        """Deterministic fields only; timing is reported separately so a
        rerun reproduces the metrics stream byte for byte."""
        row = {
            "schema": "v1",
            "iteration": self.iteration,
            "loss_mean": self.loss_mean,
            "loss_var": self.loss_var,
            "grad_var_last": self.grad_var_last,
            "critic_norms": self.critic_norms,
            "gen_norms": self.gen_norms,
        }
        if self.grad_var_total is not None:
            row["grad_var_total"] = self.grad_var_total
        row.update(self.extras)
        return row


class AdamState:
    """First/second moment accumulators for one parameter list."""

    def __init__(self, params: list[np.ndarray]):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray], lr: float, beta1: float, beta2: float,
              eps: float):
    """Standard bias-corrected Adam update, in place (descends grads)."""
    state.t += 1
    t = state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def inject_gradient_noise(grads: list[np.ndarray], sigma: float, rng
                          ) -> list[np.ndarray]:
    """Add i.i.d. N(0, sigma^2) to every gradient entry."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0.0:
        return grads
    return [g + rng.normal(0.0, sigma, size=g.shape) for g in grads]


@dataclass
class TrainResult:
    critic: MlpParams
    generator: MlpParams
    metrics: list[MetricsRecord]


def _grad_arrays(root: ad.Tensor, targets: list[ad.Tensor]) -> list[np.ndarray]:
    return [g.data for g in ad.backward(root, targets)]


def _check_finite(value: float, iteration: int, what: str):
    if not np.isfinite(value):
        raise TrainDivergence(iteration, f"non-finite {what} ({value})")


def _draw_gumbel_u(head, n: int, rng):
    if not isinstance(head, nets.TabularHeadSpec):
        return None
    return [rng.uniform(1e-12, 1.0, size=(n, k)) for k in head.discrete_groups]


def train(cfg: TrainConfig, data=None, groups: GroupedData | None = None,
          critic: MlpParams | None = None, generator: MlpParams | None = None,
          gen_head="linear", eval_fn=None) -> TrainResult:
    """Run the alternating optimization described in the module docstring.

    Exactly one of data/groups must be given; groups selects the fair
    minibatch construction.  eval_fn(iteration, critic, generator), when
    given, is called at checkpoints and its dict is merged into the record.
    """
    if (data is None) == (groups is None):
        raise ValueError("train: pass exactly one of data or groups")
    if critic is None or generator is None:
        raise ValueError("train: critic and generator params are required")
    head = objectives.head_for_loss(cfg.loss)

    rng = np.random.default_rng(cfg.seed)
    dist = AlphaDist(cfg.r)
    adam_d = AdamState([t.data for t in critic.tensors()])
    adam_g = AdamState([t.data for t in generator.tensors()])
    metrics: list[MetricsRecord] = []
    started = time.perf_counter()

    for it in range(1, cfg.iterations + 1):
        if groups is not None:
            batch = make_fair_batch(groups, cfg.n_b, dist, cfg.d_z, rng)
        else:
            batch = make_batch(data, cfg.n_b, dist, cfg.d_z, rng)
        z_in = batch.z_alpha if cfg.use_interpolated_z else batch.z
        gumbel_u = _draw_gumbel_u(gen_head, cfg.n_b, rng)

        # Critic ascent steps (generator frozen, its output detached).
        fake_rows = None
        for _ in range(cfg.critic_steps):
            gen_out = nets.generator_forward(generator, z_in, batch.alpha1,
                                             head=gen_head, rng=rng,
                                             gumbel_u=gumbel_u)
            fake_rows = gen_out.data
            d_real = nets.critic_forward(critic, batch.q1, batch.alpha1, head)
            d_fake = nets.critic_forward(critic, ad.constant(fake_rows),
                                         batch.alpha1, head)
            loss = objectives.critic_loss(cfg.loss, d_real, d_fake)
            obj = loss
            if cfg.penalty == "cp":
                obj = ad.sub(obj, objectives.coherency_penalty(
                    critic, batch, cfg.penalty_weight, head))
            elif cfg.penalty in ("mp", "gp"):
                pts = objectives.make_interp_points(batch.q1, fake_rows, rng)
                pen_fn = (objectives.mp_penalty if cfg.penalty == "mp"
                          else objectives.gp_penalty)
                obj = ad.sub(obj, pen_fn(critic, pts, cfg.penalty_weight,
                                         alpha=batch.alpha1, head=head))
            _check_finite(obj.item(), it, "critic objective")
            grads = _grad_arrays(ad.neg(obj), critic.tensors())
            grads = inject_gradient_noise(grads, cfg.grad_noise_sigma, rng)
            adam_step(adam_d, [t.data for t in critic.tensors()], grads,
                      cfg.lr_d, cfg.beta1, cfg.beta2, cfg.eps)

        # Generator descent step against the updated critic.
        gen_out = nets.generator_forward(generator, z_in, batch.alpha1,
                                         head=gen_head, rng=rng,
                                         gumbel_u=gumbel_u)
        d_fake = nets.critic_forward(critic, gen_out, batch.alpha1, head)
        gen_obj = objectives.generator_loss(cfg.loss, d_fake)
        if cfg.fairness_lambda is not None:
            gen_obj = ad.add(gen_obj, objectives.fairness_penalty(
                gen_out, cfg.fair_y_col, cfg.fair_a_col, cfg.fairness_lambda))
        _check_finite(gen_obj.item(), it, "generator objective")
        g_grads = _grad_arrays(gen_obj, generator.tensors())
        adam_step(adam_g, [t.data for t in generator.tensors()], g_grads,
                  cfg.lr_g, cfg.beta1, cfg.beta2, cfg.eps)

        if it % cfg.stride == 0:
            record = _make_record(cfg, it, critic, generator, head, batch,
                                  gen_out.data, started)
            if eval_fn is not None:
                record.extras.update(eval_fn(it, critic, generator))
            metrics.append(record)

    return TrainResult(critic, generator, metrics)


def _make_record(cfg: TrainConfig, it: int, critic: MlpParams,
                 generator: MlpParams, head: str, batch, fake_rows,
                 started: float) -> MetricsRecord:
    items, var_last, var_total = nets.per_sample_critic_stats(
        critic, batch.q1, batch.alpha1, fake_rows, batch.alpha1, head=head)
    return MetricsRecord(
        iteration=it,
        loss_mean=float(items.mean()),
        loss_var=float(items.var(ddof=1)) if items.size > 1 else 0.0,
        grad_var_last=var_last,
        grad_var_total=var_total if cfg.grad_var_full else None,
        critic_norms=critic.frobenius_norms(),
        gen_norms=generator.frobenius_norms(),
        wall_time=time.perf_counter() - started,
    )


def generate_samples(generator: MlpParams, n: int, alpha: float, d_z: int,
                     rng, gen_head="linear", interpolated: bool = True
                     ) -> np.ndarray:
    """Sample the generator at one temperature level."""
    z = rng.uniform(-1.0, 1.0, size=(n, d_z))
    if interpolated and alpha != 1.0:
        z2 = rng.uniform(-1.0, 1.0, size=(n, d_z))
        z = alpha * z + (1.0 - alpha) * z2
    out = nets.generator_forward(generator, z, np.full(n, alpha),
                                 head=gen_head, rng=rng)
    return out.data


# ---------------------------------------------------------------------------
# diagnostics: fixed-generator critic probe


def _real_gradient_norm_penalty(critic: MlpParams, points, alpha, head: str,
                                lam: float) -> ad.Tensor:
    """Squared input-gradient norm on real rows; the weight-norm control
    used by the fixed-generator probe."""
    gx = objectives.input_gradients(critic, points, alpha, head)
    return ad.scale(ad.mean_all(ad.sum_cols(ad.square(gx))), lam / 2.0)


def probe_fixed_generator(cfg: TrainConfig, data, critic: MlpParams,
                          fake_sampler) -> list[MetricsRecord]:
    """Train only the critic against a frozen sampler and log per-sample
    loss and full-parameter gradient-variance statistics.

    fake_sampler(n, rng) must return an (n, d) array; it stands in for a
    generator collapsed onto part of the target support.
    """
    rng = np.random.default_rng(cfg.seed)
    dist = AlphaDist(cfg.r)
    adam_d = AdamState([t.data for t in critic.tensors()])
    head = objectives.head_for_loss(cfg.loss)
    metrics: list[MetricsRecord] = []
    started = time.perf_counter()

    for it in range(1, cfg.iterations + 1):
        batch = make_batch(data, cfg.n_b, dist, cfg.d_z, rng)
        fake_rows = fake_sampler(cfg.n_b, rng)
        d_real = nets.critic_forward(critic, batch.q1, batch.alpha1, head)
        d_fake = nets.critic_forward(critic, fake_rows, batch.alpha1, head)
        loss = objectives.critic_loss(cfg.loss, d_real, d_fake)
        pen = _real_gradient_norm_penalty(critic, batch.q1, batch.alpha1,
                                          head, cfg.penalty_weight)
        obj = ad.sub(loss, pen)
        _check_finite(obj.item(), it, "critic objective")
        grads = _grad_arrays(ad.neg(obj), critic.tensors())
        grads = inject_gradient_noise(grads, cfg.grad_noise_sigma, rng)
        adam_step(adam_d, [t.data for t in critic.tensors()], grads,
                  cfg.lr_d, cfg.beta1, cfg.beta2, cfg.eps)

        if it % cfg.stride == 0:
            items, var_last, var_total = nets.per_sample_critic_stats(
                critic, batch.q1, batch.alpha1, fake_rows, batch.alpha1,
                head=head)
            metrics.append(MetricsRecord(
                iteration=it,
                loss_mean=float(items.mean()),
                loss_var=float(items.var(ddof=1)) if items.size > 1 else 0.0,
                grad_var_last=var_last,
                grad_var_total=var_total,
                critic_norms=critic.frobenius_norms(),
                gen_norms=[],
                wall_time=time.perf_counter() - started,
            ))
    return metrics


def probe_variance_reduction(cfg: TrainConfig, data, critic_init,
                             fake_sampler, r_pair=(1.0, 0.99)):
    """Run the fixed-generator probe once per mixture weight with identical
    seeds and initial critics; returns {r: metrics list}."""
    out = {}
    for r in r_pair:
        arm_cfg = TrainConfig(**{**cfg.__dict__, "r": r})
        out[r] = probe_fixed_generator(arm_cfg, data, critic_init.copy(),
                                       fake_sampler)
    return out


# ---------------------------------------------------------------------------
# diagnostics: linear-critic gradient covariance identity


@dataclass
class TraceIdentityResult:
    r: float
    trace_tempered: float
    trace_vanilla: float
    predicted: float
    residual_mean: float
    residual_se: float

    @property
    def within(self) -> float:
        """Residual size in standard-error units."""
        return abs(self.residual_mean) / max(self.residual_se, 1e-300)


def linear_critic_trace_identity(r: float, n_b: int = 100, m_b: int = 100,
                                 n_batches: int = 100_000, seed: int = 0,
                                 data_sampler=None, base_gen_sampler=None,
                                 n_groups: int = 20) -> TraceIdentityResult:
    """Monte-Carlo check of the tempered gradient-covariance trace for a
    linear critic D(x, a) = w . [x, a] and a generator that mixes linearly
    across temperatures: G(a z1 + (1-a) z2, a) = a G0(z1) + (1-a) G0(z2).

    The tempered trace should equal (2/3 + r/3) * vanilla trace +
    Var(a) * (1/n_b + 1/m_b).  Batches are split into groups to attach a
    standard error to the residual.
    """
    rng = np.random.default_rng(seed)
    if data_sampler is None:
        def data_sampler(n, rng):
            centers = np.where(rng.integers(0, 2, size=n) == 0, -1.5, 1.5)
            return (centers + 0.1 * rng.standard_normal(n)).reshape(n, 1)
    if base_gen_sampler is None:
        def base_gen_sampler(n, rng):
            return (0.8 * rng.uniform(-1, 1, size=n) + 0.1).reshape(n, 1)

    dist = AlphaDist(r)
    var_alpha = dist.variance()
    per_group = n_batches // n_groups
    traces_t, traces_v = [], []

    for _ in range(n_groups):
        grads_t, grads_v = [], []
        for _ in range(per_group):
            a_real = sample_alpha(dist, n_b, rng)
            x1 = data_sampler(n_b, rng)
            x2 = data_sampler(n_b, rng)
            q = a_real[:, None] * x1 + (1 - a_real[:, None]) * x2
            a_fake = sample_alpha(dist, m_b, rng)
            g1 = base_gen_sampler(m_b, rng)
            g2 = base_gen_sampler(m_b, rng)
            g = a_fake[:, None] * g1 + (1 - a_fake[:, None]) * g2
            grads_t.append(np.concatenate([
                q.mean(axis=0) - g.mean(axis=0),
                [a_real.mean() - a_fake.mean()],
            ]))
            xv = data_sampler(n_b, rng)
            gv = base_gen_sampler(m_b, rng)
            grads_v.append(np.concatenate([
                xv.mean(axis=0) - gv.mean(axis=0), [0.0],
            ]))
        traces_t.append(np.cov(np.array(grads_t).T).trace())
        traces_v.append(np.cov(np.array(grads_v).T).trace())

    traces_t = np.array(traces_t)
    traces_v = np.array(traces_v)
    factor = 2.0 / 3.0 + r / 3.0
    extra = var_alpha * (1.0 / n_b + 1.0 / m_b)
    residuals = traces_t - factor * traces_v - extra
    return TraceIdentityResult(
        r=r,
        trace_tempered=float(traces_t.mean()),
        trace_vanilla=float(traces_v.mean()),
        predicted=float(factor * traces_v.mean() + extra),
        residual_mean=float(residuals.mean()),
        residual_se=float(residuals.std(ddof=1) / np.sqrt(n_groups)),
    )
