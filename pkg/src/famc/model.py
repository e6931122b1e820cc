"""Shared domain types: observations, rank-one atoms, models, probability fields."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

UNIT_NORM_TOL = 1e-10


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ObservationSet:
    """Sparse multiset of (row, col, label) samples on an m1 x m2 grid.

    Labels live in [1, classes]; indices are 0-based. Samples may repeat:
    each one is an independent draw, so duplicates are kept, not merged.
    """

    rows: int
    cols: int
    classes: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("matrix dimensions must be positive")
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        ri = _as_readonly(np.asarray(self.row_idx, dtype=np.int64))
        ci = _as_readonly(np.asarray(self.col_idx, dtype=np.int64))
        lb = _as_readonly(np.asarray(self.labels, dtype=np.int64))
        if not (ri.shape == ci.shape == lb.shape) or ri.ndim != 1:
            raise ValueError("row_idx, col_idx, labels must be 1-d of equal length")
        if ri.size and (ri.min() < 0 or ri.max() >= self.rows):
            raise ValueError("row index out of bounds")
        if ci.size and (ci.min() < 0 or ci.max() >= self.cols):
            raise ValueError("col index out of bounds")
        if lb.size and (lb.min() < 1 or lb.max() > self.classes):
            raise ValueError(f"labels must lie in [1, {self.classes}]")
        object.__setattr__(self, "row_idx", ri)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "labels", lb)

    @property
    def n(self) -> int:
        return self.row_idx.size

    def __len__(self) -> int:
        return self.n

    @classmethod
    def from_samples(cls, rows, cols, classes, samples) -> "ObservationSet":
        """Build from an iterable of (row, col, label) triples."""
        arr = np.asarray(list(samples), dtype=np.int64).reshape(-1, 3)
        return cls(rows, cols, classes, arr[:, 0], arr[:, 1], arr[:, 2])

    def samples(self) -> list[tuple[int, int, int]]:
        return list(zip(self.row_idx.tolist(), self.col_idx.tolist(), self.labels.tolist()))


@dataclass(frozen=True)
class Atom:
    """Weighted rank-one matrix weight * left @ right.T with unit factors."""

    weight: float
    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        u = _as_readonly(np.asarray(self.left, dtype=np.float64))
        v = _as_readonly(np.asarray(self.right, dtype=np.float64))
        if self.weight < 0:
            raise ValueError("atom weight must be nonnegative")
        if abs(np.linalg.norm(u) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("left factor is not unit norm")
        if abs(np.linalg.norm(v) - 1.0) > UNIT_NORM_TOL:
            raise ValueError("right factor is not unit norm")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "left", u)
        object.__setattr__(self, "right", v)


@dataclass(frozen=True)
class AtomicModel:
    """Per-class nonnegative combinations of rank-one atoms.

    Classes 1..p-1 carry a parameter matrix; class p is the implicit
    reference class and has none. The class-j parameter is
    sum_k weight_k * left_k @ right_k.T over per_class_atoms[j-1].
    """

    rows: int
    cols: int
    classes: int
    per_class_atoms: tuple[tuple[Atom, ...], ...]

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least 2 classes")
        pca = tuple(tuple(atoms) for atoms in self.per_class_atoms)
        if len(pca) != self.classes - 1:
            raise ValueError(f"expected {self.classes - 1} atom lists, got {len(pca)}")
        for atoms in pca:
            for a in atoms:
                if a.left.size != self.rows or a.right.size != self.cols:
                    raise ValueError("atom factor length does not match model shape")
        object.__setattr__(self, "per_class_atoms", pca)

    @classmethod
    def zero(cls, rows: int, cols: int, classes: int) -> "AtomicModel":
        return cls(rows, cols, classes, tuple(() for _ in range(classes - 1)))

    @property
    def n_atoms(self) -> int:
        return sum(len(atoms) for atoms in self.per_class_atoms)

    @property
    def total_mass(self) -> float:
        """Atomic l1 mass: upper bound on the summed nuclear norms."""
        return float(sum(a.weight for atoms in self.per_class_atoms for a in atoms))


@dataclass(frozen=True)
class ProbabilityField:
    """Dense per-entry probability vectors over all p classes (desk scale)."""

    rows: int
    cols: int
    classes: int
    probs: np.ndarray

    def __post_init__(self):
        pr = _as_readonly(np.asarray(self.probs, dtype=np.float64))
        if pr.shape != (self.rows, self.cols, self.classes):
            raise ValueError(f"probs must have shape {(self.rows, self.cols, self.classes)}")
        if pr.size:
            if pr.min() < 0:
                raise ValueError("probabilities must be nonnegative")
            if np.abs(pr.sum(axis=2) - 1.0).max() > 1e-9:
                raise ValueError("per-entry probabilities must sum to 1")
        object.__setattr__(self, "probs", pr)


@dataclass(frozen=True)
class FitConfig:
    """Solver configuration: penalty, stopping tolerance, iteration caps, seed."""

    lam: float
    epsilon: float = 1e-4
    max_iters: int = 500
    seed: int = 0
    # line-search subproblem (projected Newton with Armijo backtracking)
    ls_tol: float = 1e-10
    ls_max_iter: int = 50
    armijo_c: float = 1e-4
    # support-restricted weight re-optimization (accelerated projected gradient)
    corr_tol: float = 1e-9
    corr_max_iter: int = 500

    def __post_init__(self):
        # lam == 0 is accepted so the unpenalized oracle runs can share this config
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


def evaluate_entries(model: AtomicModel, pairs) -> np.ndarray:
    """Evaluate the per-class parameters at the given (row, col) pairs.

    Returns an array of shape (len(pairs), classes - 1); column j-1 holds
    X^j at each pair. Cost is O(len(pairs) * total atoms); no dense
    materialization.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    ri, ci = pairs[:, 0], pairs[:, 1]
    if pairs.size:
        if ri.min() < 0 or ri.max() >= model.rows:
            raise IndexError("row index out of bounds")
        if ci.min() < 0 or ci.max() >= model.cols:
            raise IndexError("col index out of bounds")
    out = np.zeros((pairs.shape[0], model.classes - 1))
    for j, atoms in enumerate(model.per_class_atoms):
        for a in atoms:
            out[:, j] += a.weight * a.left[ri] * a.right[ci]
    return out


def densify(model: AtomicModel) -> np.ndarray:
    """Materialize the p-1 class matrices as a (p-1, rows, cols) array.

    Desk scale only: the caller is responsible for rows*cols being small
    enough to hold in memory.
    """
    out = np.zeros((model.classes - 1, model.rows, model.cols))
    for j, atoms in enumerate(model.per_class_atoms):
        for a in atoms:
            out[j] += a.weight * np.outer(a.left, a.right)
    return out


def model_from_dense(mats: np.ndarray, classes: int | None = None,
                     sv_floor: float = 1e-12) -> AtomicModel:
    """Build an AtomicModel from dense class matrices via their SVDs.

    The resulting representation is the canonical one: its atomic l1 mass
    equals the summed nuclear norms (singular values below sv_floor are
    dropped). Desk scale only.
    """
    mats = np.asarray(mats, dtype=np.float64)
    if mats.ndim == 2:
        mats = mats[None, :, :]
    q, m1, m2 = mats.shape
    p = classes if classes is not None else q + 1
    if p - 1 != q:
        raise ValueError("class count does not match number of matrices")
    per_class = []
    for j in range(q):
        u, s, vt = np.linalg.svd(mats[j], full_matrices=False)
        atoms = tuple(
            Atom(float(s[k]), u[:, k], vt[k, :]) for k in range(s.size) if s[k] > sv_floor
        )
        per_class.append(atoms)
    return AtomicModel(m1, m2, p, tuple(per_class))


def svd_canonicalized(model: AtomicModel) -> AtomicModel:
    """Re-express a model through the SVDs of its densified class matrices."""
    return model_from_dense(densify(model), model.classes)
