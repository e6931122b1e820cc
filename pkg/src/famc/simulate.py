"""Ground-truth generation and observation sampling for simulation studies."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .link import probs_from_values
from .model import ObservationSet

RANK5_SPECTRUM = (2.0, 1.0, 0.5, 0.25, 0.1)


@dataclass(frozen=True)
class SamplingDistribution:
    """Entry-sampling law pi over the grid, in product form.

    pi_{k,l} = row_weights[k] * col_weights[l] with both weight vectors
    normalized to sum one; the uniform law is the special case of constant
    weights. mu and l_c report how far the law is from uniform: every
    entry has probability at least 1/(mu * m1 * m2), and no row or column
    marginal exceeds l_c / min(m1, m2).
    """

    kind: str
    row_weights: np.ndarray
    col_weights: np.ndarray

    def __post_init__(self):
        if self.kind not in ("uniform", "product"):
            raise ValueError(f"unknown sampling kind {self.kind!r}")
        r = np.asarray(self.row_weights, dtype=np.float64)
        c = np.asarray(self.col_weights, dtype=np.float64)
        if r.ndim != 1 or c.ndim != 1 or r.size == 0 or c.size == 0:
            raise ValueError("weights must be nonempty 1-d arrays")
        if r.min() <= 0 or c.min() <= 0:
            raise ValueError("weights must be strictly positive")
        if abs(r.sum() - 1.0) > 1e-12 or abs(c.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to one")
        r.flags.writeable = False
        c.flags.writeable = False
        object.__setattr__(self, "row_weights", r)
        object.__setattr__(self, "col_weights", c)

    @property
    def rows(self) -> int:
        return self.row_weights.size

    @property
    def cols(self) -> int:
        return self.col_weights.size

    def pi(self) -> np.ndarray:
        """Dense entry probabilities (desk scale)."""
        return np.outer(self.row_weights, self.col_weights)

    @property
    def min_pi(self) -> float:
        return float(self.row_weights.min() * self.col_weights.min())

    @property
    def mu(self) -> float:
        return 1.0 / (self.rows * self.cols * self.min_pi)

    @property
    def l_c(self) -> float:
        worst = max(float(self.row_weights.max()), float(self.col_weights.max()))
        return worst * min(self.rows, self.cols)


def make_sampling(kind: str, m1: int, m2: int, skew: float = 1.0,
                  seed: int = 0) -> SamplingDistribution:
    """Build a sampling law: uniform, or a product law with log-uniform
    row/col weights drawn from [1, skew] and then normalized."""
    if kind == "uniform":
        return SamplingDistribution("uniform", np.full(m1, 1.0 / m1),
                                    np.full(m2, 1.0 / m2))
    if kind != "product":
        raise ValueError(f"unknown sampling kind {kind!r}")
    if skew < 1.0:
        raise ValueError("skew must be at least 1")
    rng = np.random.default_rng(seed)
    r = np.exp(rng.uniform(0.0, np.log(skew), size=m1))
    c = np.exp(rng.uniform(0.0, np.log(skew), size=m2))
    return SamplingDistribution("product", r / r.sum(), c / c.sum())


def spectrum(rank: int) -> np.ndarray:
    """Singular-value profile of generated truths.

    rank 5 uses the fixed profile (2, 1, 0.5, 0.25, 0.1); other ranks fall
    back to the dyadic profile 2^(1-k), k = 1..rank.
    """
    if rank == 5:
        return np.asarray(RANK5_SPECTRUM)
    return 2.0 ** (1.0 - np.arange(1, rank + 1, dtype=float))


def make_ground_truth(m1: int, m2: int, p: int, rank: int = 5,
                      gamma_scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """Random rank-`rank` class parameter matrices, shape (p-1, m1, m2).

    Each class matrix is gamma_scale * sqrt(m1 m2) * sum_k alpha_k u_k v_k^T
    with orthonormalized Gaussian factors, so the generated rank is exactly
    `rank` and the expected sup-norm does not depend on the matrix size.
    """
    if rank < 1 or rank > min(m1, m2):
        raise ValueError("rank must lie in [1, min(m1, m2)]")
    if p < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    alphas = spectrum(rank)
    out = np.empty((p - 1, m1, m2))
    scale = gamma_scale * np.sqrt(m1 * m2)
    for j in range(p - 1):
        u, _ = np.linalg.qr(rng.standard_normal((m1, rank)))
        v, _ = np.linalg.qr(rng.standard_normal((m2, rank)))
        out[j] = scale * ((u * alphas) @ v.T)
    return out


def sample_observations(truth: np.ndarray, dist: SamplingDistribution,
                        n: int, seed: int = 0) -> ObservationSet:
    """Draw n iid entries from the sampling law (with replacement) and
    label each one from the multinomial logit at the true parameters."""
    truth = np.asarray(truth, dtype=np.float64)
    if truth.ndim == 2:
        truth = truth[None, :, :]
    q, m1, m2 = truth.shape
    if (m1, m2) != (dist.rows, dist.cols):
        raise ValueError("truth and sampling law have mismatched shapes")
    if n < 1:
        raise ValueError("need at least one observation")
    rng = np.random.default_rng(seed)
    rows = rng.choice(m1, size=n, p=dist.row_weights)
    cols = rng.choice(m2, size=n, p=dist.col_weights)
    probs = probs_from_values(truth[:, rows, cols].T)  # (n, p)
    u = rng.random(n)
    labels = (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1) + 1
    labels = np.minimum(labels, q + 1)  # guard the top edge of the cdf
    return ObservationSet(m1, m2, q + 1, rows, cols, labels)
