"""Temperature sampling and convex-interpolation minibatch construction.

A minibatch interpolates independently resampled data pairs with a random
weight a1 drawn from a mixture that places probability r on exactly 1 and
the rest on Unif(0,1).  Alongside the primary rows q1 it carries a second
interpolation q2 of the same pairs at a2 ~ Unif(0,1) and the blend q_tilde
at nu ~ Unif(0,1), which feed the coherency penalty.  Reference noise is
drawn from Unif(-1,1)^d_z, optionally interpolated with the same a1.

The fair variant draws the pair across the two sensitive groups and emits
both interpolation directions, so the batch is an equal mixture of
a*x0 + (1-a)*x1 and (1-a)*x0 + a*x1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AlphaDist:
    """Mixture for the interpolation weight: point mass r at 1, else
    Unif(0,1)."""

    r: float

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0):
            raise ValueError(f"AlphaDist: r must be in [0, 1], got {self.r}")

    def variance(self) -> float:
        """Analytic Var(alpha): E[a^2] - E[a]^2 for the mixture."""
        e1 = self.r + (1.0 - self.r) * 0.5
        e2 = self.r + (1.0 - self.r) / 3.0
        return e2 - e1 * e1


@dataclass
class TemperedBatch:
    q1: np.ndarray        # n_b x d, interpolation at alpha1
    q2: np.ndarray        # n_b x d, same pairs at alpha2
    q_tilde: np.ndarray   # n_b x d, nu-blend of q1 and q2
    alpha1: np.ndarray    # n_b
    alpha2: np.ndarray    # n_b
    alpha_tilde: np.ndarray  # n_b
    nu: np.ndarray        # n_b
    z: np.ndarray         # n_b x d_z
    z_alpha: np.ndarray   # n_b x d_z, alpha1-interpolated reference noise

    @property
    def size(self) -> int:
        return self.q1.shape[0]


@dataclass
class GroupedData:
    """Sample rows partitioned by a binary sensitive attribute."""

    rows_a0: np.ndarray
    rows_a1: np.ndarray

    def __post_init__(self):
        self.rows_a0 = np.asarray(self.rows_a0, dtype=np.float64)
        self.rows_a1 = np.asarray(self.rows_a1, dtype=np.float64)
        if self.rows_a0.shape[0] == 0 or self.rows_a1.shape[0] == 0:
            raise ValueError("GroupedData: both groups must be non-empty")
        if self.rows_a0.shape[1] != self.rows_a1.shape[1]:
            raise ValueError("GroupedData: group widths differ")


def sample_alpha(dist: AlphaDist, n: int, rng) -> np.ndarray:
    """Draw n weights: 1 with probability r, otherwise Unif(0,1)."""
    if n < 1:
        raise ValueError("sample_alpha: n must be >= 1")
    take_one = rng.random(n) < dist.r
    uniform = rng.random(n)
    return np.where(take_one, 1.0, uniform)


def sample_reference_noise(n: int, d_z: int, rng) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, d_z))


def make_batch(data: np.ndarray, n_b: int, dist: AlphaDist, d_z: int,
               rng) -> TemperedBatch:
    """Tempered minibatch from i.i.d. pair draws (with replacement)."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] < 2:
        raise ValueError("make_batch: need at least 2 data rows")
    if n_b < 1:
        raise ValueError("make_batch: n_b must be >= 1")

    x = data[rng.integers(0, data.shape[0], size=n_b)]
    x_prime = data[rng.integers(0, data.shape[0], size=n_b)]
    alpha1 = sample_alpha(dist, n_b, rng)
    alpha2 = rng.random(n_b)
    nu = rng.random(n_b)

    a1 = alpha1[:, None]
    a2 = alpha2[:, None]
    nv = nu[:, None]
    q1 = a1 * x + (1.0 - a1) * x_prime
    q2 = a2 * x + (1.0 - a2) * x_prime
    q_tilde = nv * q1 + (1.0 - nv) * q2
    alpha_tilde = nu * alpha1 + (1.0 - nu) * alpha2

    z = sample_reference_noise(n_b, d_z, rng)
    z_prime = sample_reference_noise(n_b, d_z, rng)
    z_alpha = a1 * z + (1.0 - a1) * z_prime
    return TemperedBatch(q1, q2, q_tilde, alpha1, alpha2, alpha_tilde, nu,
                         z, z_alpha)


def make_fair_batch(groups: GroupedData, n_b: int, dist: AlphaDist, d_z: int,
                    rng) -> TemperedBatch:
    """Group-crossing minibatch: each pair joins one row per group, and both
    interpolation directions enter the batch (equal mixture)."""
    if n_b % 2 != 0:
        raise ValueError("make_fair_batch: n_b must be even")
    half = n_b // 2
    n0 = groups.rows_a0.shape[0]
    n1 = groups.rows_a1.shape[0]
    if half > n0 or half > n1:
        raise ValueError(
            f"make_fair_batch: n_b/2={half} exceeds a group size ({n0}, {n1})"
        )

    x0 = groups.rows_a0[rng.integers(0, n0, size=half)]
    x0p = groups.rows_a0[rng.integers(0, n0, size=half)]
    x1 = groups.rows_a1[rng.integers(0, n1, size=half)]
    x1p = groups.rows_a1[rng.integers(0, n1, size=half)]

    alpha1_h = sample_alpha(dist, half, rng)
    alpha2_h = rng.random(half)
    nu_h = rng.random(half)

    a1 = alpha1_h[:, None]
    a2 = alpha2_h[:, None]
    check_fwd = a1 * x0 + (1.0 - a1) * x1
    check_rev = (1.0 - a1) * x0 + a1 * x1
    hat_fwd = a2 * x0p + (1.0 - a2) * x1p
    hat_rev = (1.0 - a2) * x0p + a2 * x1p

    q1 = np.vstack([check_fwd, check_rev])
    q2 = np.vstack([hat_fwd, hat_rev])
    alpha1 = np.concatenate([alpha1_h, alpha1_h])
    alpha2 = np.concatenate([alpha2_h, alpha2_h])
    nu = np.concatenate([nu_h, nu_h])
    nv = nu[:, None]
    q_tilde = nv * q1 + (1.0 - nv) * q2
    alpha_tilde = nu * alpha1 + (1.0 - nu) * alpha2

    z = sample_reference_noise(n_b, d_z, rng)
    z_prime = sample_reference_noise(n_b, d_z, rng)
    z_alpha = alpha1[:, None] * z + (1.0 - alpha1[:, None]) * z_prime
    return TemperedBatch(q1, q2, q_tilde, alpha1, alpha2, alpha_tilde, nu,
                         z, z_alpha)
