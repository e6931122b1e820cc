"""Shared fixtures-in-spirit: random instances and independent oracles."""

import math

import numpy as np

from famc import Atom, AtomicModel, ObservationSet


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def e_vec(size, k):
    v = np.zeros(size)
    v[k] = 1.0
    return v


def random_model(rng, rows=6, cols=4, classes=3, atoms_per_class=5, max_weight=2.0):
    per_class = []
    for _ in range(classes - 1):
        atoms = tuple(
            Atom(float(rng.uniform(0.1, max_weight)),
                 unit(rng.standard_normal(rows)),
                 unit(rng.standard_normal(cols)))
            for _ in range(atoms_per_class)
        )
        per_class.append(atoms)
    return AtomicModel(rows, cols, classes, tuple(per_class))


def random_obs(rng, rows, cols, classes, n):
    return ObservationSet(
        rows, cols, classes,
        rng.integers(0, rows, n),
        rng.integers(0, cols, n),
        rng.integers(1, classes + 1, n),
    )


def brute_force_dense(model):
    """Elementwise-accumulation oracle for densify/evaluate_entries."""
    out = np.zeros((model.classes - 1, model.rows, model.cols))
    for j, atoms in enumerate(model.per_class_atoms):
        for a in atoms:
            for k in range(model.rows):
                for l in range(model.cols):
                    out[j, k, l] += a.weight * a.left[k] * a.right[l]
    return out


def naive_nll(dense, obs):
    """Per-sample scalar oracle for the average negative log-likelihood."""
    total = 0.0
    for r, c, y in zip(obs.row_idx, obs.col_idx, obs.labels):
        x = [dense[j, r, c] for j in range(obs.classes - 1)]
        denom = 1.0 + sum(math.exp(t) for t in x)
        if y < obs.classes:
            total -= math.log(math.exp(x[y - 1]) / denom)
        else:
            total -= math.log(1.0 / denom)
    return total / obs.n


def golden_section_min(f, lo, hi, tol=1e-12, max_iter=500):
    """Scalar minimizer oracle on [lo, hi] for unimodal f.

    Comparisons run in 50-digit arithmetic (f must accept mpmath values),
    since double-precision function comparisons cannot resolve a quadratic
    minimum below ~sqrt(ulp/curvature) ~ 1e-8.
    """
    import mpmath as mp

    with mp.workdps(50):
        invphi = (mp.sqrt(5) - 1) / 2
        a, b = mp.mpf(lo), mp.mpf(hi)
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd = f(c), f(d)
        for _ in range(max_iter):
            if b - a < tol:
                break
            if fc < fd:
                b, d, fd = d, c, fc
                c = b - invphi * (b - a)
                fc = f(c)
            else:
                a, c, fc = c, d, fd
                d = a + invphi * (b - a)
                fd = f(d)
        return float((a + b) / 2)
