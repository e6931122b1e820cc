"""Multinomial logit link: probabilities, likelihood, sparse gradient, constants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AtomicModel, ObservationSet, ProbabilityField, evaluate_entries
from .topsvd import SparseMatrix


def log_probs_from_values(x: np.ndarray) -> np.ndarray:
    """Log class probabilities for rows of parameter values.

    x has shape (n, p-1); returns (n, p) where column j < p-1 is
    log exp(x_j)/(1 + sum_c exp(x_c)) and the last column is the implicit
    reference class log 1/(1 + sum_c exp(x_c)). The reference logit is 0,
    and the running max is subtracted for overflow safety.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    z = np.concatenate([x, np.zeros((n, 1))], axis=1)
    m = z.max(axis=1, keepdims=True)
    logz = m + np.log(np.exp(z - m).sum(axis=1, keepdims=True))
    return z - logz


def probs_from_values(x: np.ndarray) -> np.ndarray:
    """Class probabilities for rows of parameter values, shape (n, p)."""
    return np.exp(log_probs_from_values(x))


def logit_probs(x) -> np.ndarray:
    """Multinomial logit link for one parameter vector of length p-1.

    Component j is exp(x_j)/(1 + sum_c exp(x_c)); the last component is
    the reference-class remainder 1/(1 + sum_c exp(x_c)).
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if np.isnan(x).any():
        raise ValueError("NaN parameter value")
    return probs_from_values(x[None, :])[0]


def compress_observations(obs: ObservationSet):
    """Group samples by entry.

    Returns (rows_e, cols_e, counts) where counts[e, y-1] is the number of
    samples at unique entry e with label y. Repeated samples accumulate.
    """
    key = obs.row_idx * obs.cols + obs.col_idx
    uniq, inv = np.unique(key, return_inverse=True)
    counts = np.zeros((uniq.size, obs.classes))
    np.add.at(counts, (inv, obs.labels - 1), 1.0)
    return uniq // obs.cols, uniq % obs.cols, counts


def nll_from_values(x: np.ndarray, counts: np.ndarray) -> float:
    """Average negative log-likelihood given parameter values at the
    unique observed entries (x: (E, p-1)) and per-entry label counts."""
    n = counts.sum()
    return float(-(counts * log_probs_from_values(x)).sum() / n)


def gradient_from_values(x: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Entry-wise likelihood gradient (E, p-1): (1/n) (N_e f^j(x_e) - counts[e,j])."""
    n = counts.sum()
    probs = probs_from_values(x)[:, :-1]
    return (counts.sum(axis=1, keepdims=True) * probs - counts[:, :-1]) / n


def _check_compatible(model: AtomicModel, obs: ObservationSet):
    if (model.rows, model.cols, model.classes) != (obs.rows, obs.cols, obs.classes):
        raise ValueError(
            f"model shape {(model.rows, model.cols, model.classes)} does not match "
            f"observations {(obs.rows, obs.cols, obs.classes)}"
        )


def negative_log_likelihood(model: AtomicModel, obs: ObservationSet) -> float:
    """Normalized negative log-likelihood of the observations under the model.

    Evaluates the parameters only at observed entries.
    """
    _check_compatible(model, obs)
    if obs.n == 0:
        raise ValueError("empty observation set")
    rows_e, cols_e, counts = compress_observations(obs)
    x = evaluate_entries(model, np.column_stack([rows_e, cols_e]))
    return nll_from_values(x, counts)


def sparse_gradient(model: AtomicModel, obs: ObservationSet) -> list[SparseMatrix]:
    """Gradient of the negative log-likelihood, one sparse matrix per class.

    Entry (k, l) of the class-j matrix is (1/n) sum over samples at (k, l)
    of f^j(X_{k,l}) - 1{Y=j}. Support is contained in the observed entries.
    """
    _check_compatible(model, obs)
    if obs.n == 0:
        raise ValueError("empty observation set")
    rows_e, cols_e, counts = compress_observations(obs)
    x = evaluate_entries(model, np.column_stack([rows_e, cols_e]))
    g = gradient_from_values(x, counts)
    return [
        SparseMatrix(obs.rows, obs.cols, rows_e, cols_e, g[:, j].copy())
        for j in range(obs.classes - 1)
    ]


def probability_field(model: AtomicModel) -> ProbabilityField:
    """Dense per-entry class probabilities implied by the model (desk scale)."""
    from .model import densify

    x = densify(model)  # (p-1, m1, m2)
    flat = x.reshape(model.classes - 1, -1).T
    probs = probs_from_values(flat).reshape(model.rows, model.cols, model.classes)
    return ProbabilityField(model.rows, model.cols, model.classes, probs)


def field_from_dense(mats: np.ndarray) -> ProbabilityField:
    """Per-entry class probabilities for dense parameter matrices (p-1, m1, m2)."""
    mats = np.asarray(mats, dtype=np.float64)
    if mats.ndim == 2:
        mats = mats[None, :, :]
    q, m1, m2 = mats.shape
    probs = probs_from_values(mats.reshape(q, -1).T).reshape(m1, m2, q + 1)
    return ProbabilityField(m1, m2, q + 1, probs)


@dataclass(frozen=True)
class LinkConstants:
    """Binary-logit curvature/Lipschitz constants over parameter range [-gamma, gamma]."""

    gamma: float
    m_gamma: float
    l_gamma: float
    k_gamma: float


def link_constants(gamma: float, p: int = 2) -> LinkConstants:
    """Closed-form link constants for the binary logit over |x| <= gamma.

    With f the sigmoid: the sup of 2|log f| is attained at -gamma, both
    ratio sups at the endpoints, and the curvature inf at the endpoints,
    giving m = 2 log(1 + e^gamma), l = f(gamma), k = f(gamma)(1-f(gamma))/8.
    """
    if p != 2:
        raise ValueError("link constants are defined for the binary case (p=2) only")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    f_g = 1.0 / (1.0 + np.exp(-gamma))  # f(gamma)
    f_mg = 1.0 / (1.0 + np.exp(gamma))  # f(-gamma) = 1 - f(gamma)
    m = 2.0 * float(np.logaddexp(0.0, gamma))
    l = float(f_g)
    k = float(f_g * f_mg) / 8.0
    return LinkConstants(float(gamma), m, l, k)
