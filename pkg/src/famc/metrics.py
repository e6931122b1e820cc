"""Divergences between probability fields, errors, and the rate-bound value."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .link import LinkConstants
from .model import ObservationSet, ProbabilityField

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class EvalReport:
    """Evaluation summary for one fitted model against a reference."""

    kl: float
    hellinger_sq: float
    frobenius_sq_normalized: float
    prediction_error: float | None = None

    def __post_init__(self):
        if min(self.kl, self.hellinger_sq, self.frobenius_sq_normalized) < 0:
            raise ValueError("divergences must be nonnegative")
        if self.hellinger_sq > self.kl + 1e-9:
            raise ValueError("squared Hellinger cannot exceed KL")

    def to_kv_lines(self) -> list[str]:
        lines = [
            f"kl={self.kl:.17g}",
            f"hellinger_sq={self.hellinger_sq:.17g}",
            f"frobenius_sq_normalized={self.frobenius_sq_normalized:.17g}",
        ]
        if self.prediction_error is not None:
            lines.append(f"prediction_error={self.prediction_error:.17g}")
        return lines

    @staticmethod
    def csv_header() -> str:
        return "kl,hellinger_sq,frobenius_sq_normalized,prediction_error"

    def to_csv_row(self) -> str:
        pe = "" if self.prediction_error is None else f"{self.prediction_error:.17g}"
        return (f"{self.kl:.17g},{self.hellinger_sq:.17g},"
                f"{self.frobenius_sq_normalized:.17g},{pe}")


def _check_fields(truth: ProbabilityField, est: ProbabilityField):
    if (truth.rows, truth.cols, truth.classes) != (est.rows, est.cols, est.classes):
        raise ValueError("probability fields have mismatched shapes")


def kl_divergence(truth: ProbabilityField, est: ProbabilityField) -> float:
    """Entry-averaged Kullback-Leibler divergence KL(truth || est).

    Both fields are clamped to [1e-12, 1 - 1e-12] before the logs, so the
    value is finite even for degenerate estimates and exactly zero for
    identical fields.
    """
    _check_fields(truth, est)
    t = np.clip(truth.probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    e = np.clip(est.probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    total = float((t * (np.log(t) - np.log(e))).sum())
    return total / (truth.rows * truth.cols)


def hellinger_sq(truth: ProbabilityField, est: ProbabilityField) -> float:
    """Entry-averaged square Hellinger distance (symmetric in its arguments)."""
    _check_fields(truth, est)
    d = np.sqrt(truth.probs) - np.sqrt(est.probs)
    return float((d * d).sum()) / (truth.rows * truth.cols)


def frobenius_error(truth_params: np.ndarray, est_params: np.ndarray) -> float:
    """Summed squared Frobenius distance of the class parameter matrices,
    normalized by the number of entries."""
    t = np.atleast_3d(np.asarray(truth_params, dtype=float))
    e = np.atleast_3d(np.asarray(est_params, dtype=float))
    if t.shape != e.shape:
        raise ValueError("parameter stacks have mismatched shapes")
    d = t - e
    return float((d * d).sum()) / (t.shape[-2] * t.shape[-1])


def prediction_error(model_probs: ProbabilityField, test: ObservationSet) -> float:
    """Fraction of test samples mislabeled by the most probable class.

    Ties break toward the smaller label index.
    """
    if (model_probs.rows, model_probs.cols) != (test.rows, test.cols):
        raise ValueError("field and test set have mismatched shapes")
    if model_probs.classes != test.classes:
        raise ValueError("field and test set have mismatched class counts")
    if test.n == 0:
        raise ValueError("empty test set")
    probs = model_probs.probs[test.row_idx, test.col_idx]  # (n, p)
    predicted = probs.argmax(axis=1) + 1
    return float((predicted != test.labels).mean())


def theorem2_bound(m1: int, m2: int, n: int, rank: int,
                   constants: LinkConstants, mu: float = 1.0,
                   l_c: float = 1.0) -> float:
    """Value of the binary-case KL rate bound with unit universal constants.

    Returns max(mu^2 L^2/K * max(m1,m2) * rank * log(d) / n,
                8 mu e M * sqrt(log d) / n) with d = m1 + m2. Unknown
    universal constants are set to 1, so only ratios and slopes across
    runs carry meaning, never the absolute value. l_c enters the regime
    assumption (n large enough) and the penalty rule, not the bound value.
    """
    d = m1 + m2
    logd = np.log(d)
    first = (mu**2 * constants.l_gamma**2 / constants.k_gamma
             * max(m1, m2) * rank * logd / n)
    second = 8.0 * mu * np.e * constants.m_gamma * np.sqrt(logd) / n
    return float(max(first, second))


def theorem2_lambda(m1: int, m2: int, n: int, l_gamma: float,
                    l_c: float = 1.0, scale: float = 6.0) -> float:
    """Penalty rule matching the rate bound: scale * L * sqrt(2 Lc log(d) / (m n))."""
    m = min(m1, m2)
    d = m1 + m2
    return float(scale * l_gamma * np.sqrt(2.0 * l_c * np.log(d) / (m * n)))
