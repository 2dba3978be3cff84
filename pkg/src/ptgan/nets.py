"""Conditional critic and generator MLPs with a temperature input.

Both networks receive the interpolation weight through the symmetric
transform t(a) = -2|a - 0.5| + 1 concatenated to the input, which makes
D(x, a) and G(z, a) exactly invariant under a -> 1 - a.  The generator
optionally ends in a tabular head: a linear (or tanh) block for continuous
columns plus one Gumbel-softmax block per discrete column group.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

CHECKPOINT_MAGIC = "PTGAN-CKPT-1"

_ACTIVATIONS = {
    "relu": ad.relu,
    "lrelu": lambda t: ad.lrelu(t, 0.1),
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
}


def temp_transform(alpha):
    """Symmetric temperature transform: 0 and 1 map to 0, 0.5 maps to 1.

    The output is quantized to a 1e-12 grid so that pairs (a, 1 - a) built
    with floating-point complement arithmetic, whose transforms can differ
    by a few ulps, map to bit-identical conditioning values.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a < 0) or np.any(a > 1):
        raise ValueError(f"temp_transform: alpha outside [0, 1]: {a}")
    out = np.round(-2.0 * np.abs(a - 0.5) + 1.0, 12)
    return float(out) if np.isscalar(alpha) else out


@dataclass
class MlpSpec:
    input_dim: int
    hidden_widths: list[int]
    output_dim: int
    activation: str = "relu"
    head: str = "linear"  # linear | sigmoid | tanh | tabular

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("MlpSpec: dimensions must be >= 1")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("MlpSpec: hidden widths must be >= 1")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"MlpSpec: unsupported activation {self.activation!r}")


@dataclass
class TabularHeadSpec:
    """Output layout for tabular generators: continuous block first, then
    one soft one-hot block per discrete group."""

    continuous_dim: int
    discrete_groups: list[int]
    gumbel_tau: float = 0.5
    continuous_activation: str = "linear"  # linear | tanh

    def __post_init__(self):
        if self.gumbel_tau <= 0:
            raise ValueError("TabularHeadSpec: gumbel_tau must be > 0")
        if any(k < 2 for k in self.discrete_groups):
            raise ValueError("TabularHeadSpec: each discrete group needs >= 2 levels")

    @property
    def total_dim(self) -> int:
        return self.continuous_dim + sum(self.discrete_groups)


class MlpParams:
    """Per-layer weight matrices (in x out) and bias rows (1 x out).

    The first weight matrix already accounts for the extra conditioning
    column, i.e. its input dimension is spec.input_dim + 1.
    """

    def __init__(self, spec: MlpSpec, weights, biases):
        self.spec = spec
        self.weights = [ad.tensor(w) for w in weights]
        self.biases = [ad.tensor(b) for b in biases]
        dims = [spec.input_dim + 1] + list(spec.hidden_widths) + [spec.output_dim]
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (dims[i], dims[i + 1])
            if w.shape != want or b.shape != (1, dims[i + 1]):
                raise ValueError(
                    f"MlpParams: layer {i} shapes {w.shape}/{b.shape}, want {want}"
                )

    def tensors(self) -> list[ad.Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def arrays(self) -> list[np.ndarray]:
        return [t.data for t in self.tensors()]

    def frobenius_norms(self) -> list[float]:
        return [float(np.linalg.norm(w.data)) for w in self.weights]

    def copy(self) -> "MlpParams":
        ws = [w.data.copy() for w in self.weights]
        bs = [b.data.copy() for b in self.biases]
        return MlpParams(self.spec, ws, bs)


def init_params(spec: MlpSpec, seed) -> MlpParams:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    dims = [spec.input_dim + 1] + list(spec.hidden_widths) + [spec.output_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros((1, fan_out)))
    return MlpParams(spec, weights, biases)


def _as_alpha_column(alpha, n_rows: int) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64).reshape(-1)
    if a.size == 1:
        a = np.full(n_rows, a[0])
    if a.size != n_rows:
        raise ValueError(f"alpha has {a.size} entries for {n_rows} rows")
    return a


def mlp_hidden(params: MlpParams, x: ad.Tensor, alpha) -> ad.Tensor:
    """Shared trunk: concatenate t(alpha), apply all hidden layers, and the
    final affine map.  Head activations are applied by the callers."""
    n = x.shape[0]
    if x.shape[1] != params.spec.input_dim:
        raise ValueError(
            f"input width {x.shape[1]} != spec input_dim {params.spec.input_dim}"
        )
    tcol = ad.constant(temp_transform(_as_alpha_column(alpha, n)).reshape(n, 1))
    h = ad.concat_cols(x, tcol)
    act = _ACTIVATIONS[params.spec.activation]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = ad.add(ad.matmul(h, w), b)
        if i < last:
            h = act(h)
    return h


def critic_forward(params: MlpParams, x, alpha, head: str = "linear") -> ad.Tensor:
    """D(x, t(alpha)): one score per row; sigmoid head for JSD critics."""
    x = x if isinstance(x, ad.Tensor) else ad.constant(x)
    out = mlp_hidden(params, x, alpha)
    if out.shape[1] != 1:
        raise ValueError(f"critic output width must be 1, got {out.shape[1]}")
    if head == "sigmoid":
        return ad.sigmoid(out)
    if head != "linear":
        raise ValueError(f"unknown critic head {head!r}")
    return out


def gumbel_noise(rng, shape) -> np.ndarray:
    u = rng.uniform(1e-12, 1.0, size=shape)
    return -np.log(-np.log(u))


def generator_forward(params: MlpParams, z, alpha,
                      head: TabularHeadSpec | str = "linear",
                      rng=None, gumbel_u=None) -> ad.Tensor:
    """G(z, t(alpha)).  With a tabular head, each discrete group goes
    through a Gumbel-softmax (soft samples, rows of each group summing
    to 1); the noise comes from rng, or from gumbel_u, a list of uniform
    arrays per group, when a caller needs to reuse one draw across passes."""
    z = z if isinstance(z, ad.Tensor) else ad.constant(z)
    out = mlp_hidden(params, z, alpha)
    if isinstance(head, str):
        if head == "linear":
            return out
        if head == "tanh":
            return ad.tanh(out)
        raise ValueError(f"unknown generator head {head!r}")

    if out.shape[1] != head.total_dim:
        raise ValueError(
            f"generator output width {out.shape[1]} != head layout {head.total_dim}"
        )
    if rng is None and gumbel_u is None:
        raise ValueError("tabular head needs an rng or gumbel_u noise")
    parts = []
    if head.continuous_dim:
        cont = ad.slice_cols(out, 0, head.continuous_dim)
        if head.continuous_activation == "tanh":
            cont = ad.tanh(cont)
        parts.append(cont)
    j = head.continuous_dim
    n = out.shape[0]
    for gi, k in enumerate(head.discrete_groups):
        logits = ad.slice_cols(out, j, j + k)
        if gumbel_u is not None:
            noise = -np.log(-np.log(gumbel_u[gi]))
        else:
            noise = gumbel_noise(rng, (n, k))
        noisy = ad.add(logits, ad.constant(noise))
        parts.append(ad.softmax_rows(ad.scale(noisy, 1.0 / head.gumbel_tau)))
        j += k
    result = parts[0]
    for p in parts[1:]:
        result = ad.concat_cols(result, p)
    return result


# ---------------------------------------------------------------------------
# per-sample critic statistics (manual backprop; used by the variance probes)


def per_sample_critic_stats(params: MlpParams, x_real: np.ndarray, alpha_real,
                            x_fake: np.ndarray, alpha_fake,
                            head: str = "linear"):
    """Per-item losses L_i = D(x_i) - D(g_i) and the elementwise variance of
    their parameter gradients, without building a graph.

    Uses the closed-form layer structure: the per-sample gradient of a weight
    matrix is an outer product delta_i (x) a_i, so E[g] and E[g^2] reduce to
    matrix products of deltas and activations and no per-sample gradient is
    ever materialised.

    Returns (loss_items, var_last_layer_sum, var_total_sum) where each var is
    the summed elementwise variance across that parameter block, computed
    over batch items.  A single-row batch returns zero variances.
    """
    acts_r, deltas_r = _forward_backward_stats(params, x_real, alpha_real, head)
    acts_f, deltas_f = _forward_backward_stats(params, x_fake, alpha_fake, head)
    n = x_real.shape[0]
    if x_fake.shape[0] != n:
        raise ValueError("per_sample_critic_stats: real/fake batch sizes differ")

    loss_items = (acts_r[-1] - acts_f[-1]).ravel()

    def block_var(dr, ar, df, af):
        # g_i = dr_i (x) ar_i - df_i (x) af_i; mean and second moment are
        # separable, so Var sums come out of plain matrix products.
        mean = (ar.T @ dr - af.T @ df) / n
        sq = (
            (ar**2).T @ dr**2
            - 2.0 * (ar * af).T @ (dr * df)
            + (af**2).T @ df**2
        ) / n
        var = sq - mean**2
        bias_mean = (dr - df).mean(axis=0)
        bias_sq = ((dr - df) ** 2).mean(axis=0)
        return float(var.sum() + (bias_sq - bias_mean**2).sum())

    if n < 2:
        return loss_items, 0.0, 0.0

    per_layer = [
        block_var(deltas_r[i], acts_r[i], deltas_f[i], acts_f[i])
        for i in range(len(params.weights))
    ]
    return loss_items, per_layer[-1], float(sum(per_layer))


def _forward_backward_stats(params: MlpParams, x: np.ndarray, alpha, head: str):
    """Manual forward and backprop for the critic MLP on raw arrays.

    Returns (activations, deltas): activations[l] feeds weight l (n x in_l),
    with the final entry being the head output (n x 1); deltas[l] is
    dD/d(pre-activation of layer l) (n x out_l).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    tcol = temp_transform(_as_alpha_column(alpha, n)).reshape(n, 1)
    h = np.hstack([x, tcol])
    act_name = params.spec.activation
    last = len(params.weights) - 1

    acts = [h]
    pres = []
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        pre = h @ w.data + b.data
        pres.append(pre)
        if i < last:
            h = _act_np(act_name, pre)
            acts.append(h)
        else:
            h = pre
    out = h
    if head == "sigmoid":
        out = 1.0 / (1.0 + np.exp(-out))
        d_out = out * (1.0 - out)
    elif head == "linear":
        d_out = np.ones_like(out)
    else:
        raise ValueError(f"unknown critic head {head!r}")

    deltas = [None] * len(params.weights)
    deltas[last] = d_out
    for i in range(last - 1, -1, -1):
        upstream = deltas[i + 1] @ params.weights[i + 1].data.T
        deltas[i] = upstream * _act_np_deriv(act_name, pres[i])
    acts.append(out)
    return acts, deltas


def _act_np(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "lrelu":
        return np.where(x > 0, x, 0.1 * x)
    if name == "tanh":
        return np.tanh(x)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-x))
    raise ValueError(name)


def _act_np_deriv(name: str, x: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (x > 0).astype(np.float64)
    if name == "lrelu":
        return np.where(x > 0, 1.0, np.where(x < 0, 0.1, 0.0))
    if name == "tanh":
        return 1.0 - np.tanh(x) ** 2
    if name == "sigmoid":
        s = 1.0 / (1.0 + np.exp(-x))
        return s * (1.0 - s)
    raise ValueError(name)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, params: MlpParams, extra: dict | None = None):
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "spec": {
            "input_dim": params.spec.input_dim,
            "hidden_widths": list(params.spec.hidden_widths),
            "output_dim": params.spec.output_dim,
            "activation": params.spec.activation,
            "head": params.spec.head,
        },
        "layers": [
            {"shape": list(w.shape), "w": w.data.ravel().tolist(),
             "b": b.data.ravel().tolist()}
            for w, b in zip(params.weights, params.biases)
        ],
    }
    if extra:
        payload["extra"] = extra
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path) -> MlpParams:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
    spec = MlpSpec(**payload["spec"])
    weights, biases = [], []
    for layer in payload["layers"]:
        rows, cols = layer["shape"]
        weights.append(np.array(layer["w"], dtype=np.float64).reshape(rows, cols))
        biases.append(np.array(layer["b"], dtype=np.float64).reshape(1, cols))
    return MlpParams(spec, weights, biases)
