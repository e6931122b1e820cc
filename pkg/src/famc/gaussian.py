"""Gaussian completion baseline: squared loss fit, residual variance, CDF bins."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .model import Atom, ObservationSet, ProbabilityField
from .solver import FitConfig, FitReport, SquaredLoss, _lifted_solve

SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class GaussianModel:
    """Single real-valued completion matrix with a residual scale estimate.

    atoms give X = sum_k weight_k * left_k @ right_k.T; label_values[y-1] is
    the real encoding of label y used during fitting (defaults to 1..p).
    """

    rows: int
    cols: int
    classes: int
    atoms: tuple[Atom, ...]
    sigma_hat: float
    label_values: tuple[float, ...]

    def __post_init__(self):
        if self.sigma_hat < SIGMA_FLOOR:
            raise ValueError(f"sigma_hat must be >= {SIGMA_FLOOR}")
        if len(self.label_values) != self.classes:
            raise ValueError("label_values must have one real per class")
        vals = np.asarray(self.label_values, dtype=float)
        if not np.all(np.diff(vals) > 0):
            raise ValueError("label_values must be strictly increasing")
        object.__setattr__(self, "atoms", tuple(self.atoms))
        object.__setattr__(self, "label_values", tuple(float(v) for v in vals))


def default_label_values(classes: int) -> tuple[float, ...]:
    return tuple(float(j) for j in range(1, classes + 1))


def evaluate_gaussian(model: GaussianModel, pairs) -> np.ndarray:
    """X values at the given (row, col) pairs, shape (len(pairs),)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    ri, ci = pairs[:, 0], pairs[:, 1]
    if pairs.size:
        if ri.min() < 0 or ri.max() >= model.rows:
            raise IndexError("row index out of bounds")
        if ci.min() < 0 or ci.max() >= model.cols:
            raise IndexError("col index out of bounds")
    out = np.zeros(pairs.shape[0])
    for a in model.atoms:
        out += a.weight * a.left[ri] * a.right[ci]
    return out


def densify_gaussian(model: GaussianModel) -> np.ndarray:
    """Materialize X as a dense (rows, cols) matrix (desk scale)."""
    out = np.zeros((model.rows, model.cols))
    for a in model.atoms:
        out += a.weight * np.outer(a.left, a.right)
    return out


def fit_gaussian(obs: ObservationSet, cfg: FitConfig,
                 label_values=None) -> tuple[GaussianModel, FitReport]:
    """Fit the squared-loss nuclear-norm completion with the lifted solver.

    Labels are encoded as reals through label_values (default: label j is
    the real j). The residual scale is the root mean squared training
    residual, floored at 1e-6. Unlike the multinomial fit, lam = 0 is
    accepted (plain unpenalized least squares).
    """
    if obs.n == 0:
        raise ValueError("empty observation set")
    vals = (np.asarray(default_label_values(obs.classes))
            if label_values is None else np.asarray(label_values, dtype=float))
    loss = SquaredLoss(obs, vals)
    support, report = _lifted_solve(loss, cfg.lam, cfg, obs.rows, obs.cols)
    xs = support.predictions()
    sigma = max(float(np.sqrt(2.0 * loss.value(xs))), SIGMA_FLOOR)
    atoms = tuple(Atom(w, u, v)
                  for w, u, v in zip(support.weights, support.us, support.vs))
    model = GaussianModel(obs.rows, obs.cols, obs.classes, atoms, sigma,
                          tuple(float(v) for v in vals))
    return model, report


def _bin_probs(x: np.ndarray, sigma: float, label_values) -> np.ndarray:
    """CDF mass of N(x, sigma^2) between consecutive label midpoints.

    Boundaries are -inf, the midpoints of consecutive encoded labels, +inf;
    with the default integer encoding the inner boundaries are j + 0.5.
    """
    vals = np.asarray(label_values, dtype=float)
    bounds = 0.5 * (vals[:-1] + vals[1:])  # (p-1,)
    sigma = max(float(sigma), SIGMA_FLOOR)
    c = ndtr((bounds[None, :] - x[:, None]) / sigma)  # (n, p-1), increasing per row
    n = x.size
    probs = np.empty((n, vals.size))
    probs[:, 0] = c[:, 0]
    probs[:, 1:-1] = np.diff(c, axis=1)
    probs[:, -1] = 1.0 - c[:, -1]
    return probs


def gaussian_class_probs(model: GaussianModel, pairs) -> np.ndarray:
    """Per-entry class probabilities implied by the Gaussian completion.

    P(Y = j) is the standard normal CDF mass of (X_hat, sigma_hat) falling
    in the bin of the j-th encoded label; the bins tile the real line, so
    each row sums to one.
    """
    x = evaluate_gaussian(model, pairs)
    return _bin_probs(x, model.sigma_hat, model.label_values)


def gaussian_probability_field(model: GaussianModel) -> ProbabilityField:
    """Dense per-entry class probabilities (desk scale)."""
    x = densify_gaussian(model).reshape(-1)
    probs = _bin_probs(x, model.sigma_hat, model.label_values)
    return ProbabilityField(model.rows, model.cols, model.classes,
                            probs.reshape(model.rows, model.cols, model.classes))
