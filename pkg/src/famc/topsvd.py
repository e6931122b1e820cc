"""Leading singular triple of a sparse matrix by power iteration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class SparseMatrix:
    """Coordinate-format sparse matrix with unique, in-bounds coordinates."""

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ri = np.asarray(self.row_idx, dtype=np.int64)
        ci = np.asarray(self.col_idx, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if not (ri.shape == ci.shape == vals.shape) or ri.ndim != 1:
            raise ValueError("row_idx, col_idx, values must be 1-d of equal length")
        if ri.size:
            if ri.min() < 0 or ri.max() >= self.rows:
                raise ValueError("row index out of bounds")
            if ci.min() < 0 or ci.max() >= self.cols:
                raise ValueError("col index out of bounds")
            key = ri * self.cols + ci
            if np.unique(key).size != key.size:
                raise ValueError("duplicate coordinates")
        for a in (ri, ci, vals):
            a.flags.writeable = False
        object.__setattr__(self, "row_idx", ri)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", vals)
        csr = sp.csr_matrix((vals, (ri, ci)), shape=(self.rows, self.cols))
        object.__setattr__(self, "_csr", csr)

    @classmethod
    def from_coo(cls, rows, cols, row_idx, col_idx, values) -> "SparseMatrix":
        """Build from coordinates, accumulating duplicates by summation."""
        coo = sp.coo_matrix((values, (row_idx, col_idx)), shape=(rows, cols))
        coo.sum_duplicates()
        return cls(rows, cols, coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data)

    @property
    def nnz(self) -> int:
        return self.values.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self._csr @ v

    def rmatvec(self, u: np.ndarray) -> np.ndarray:
        return self._csr.T @ u

    def densify(self) -> np.ndarray:
        return self._csr.toarray()

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        """Frobenius inner product with the rank-one matrix u v^T."""
        return float(np.dot(self.values, u[self.row_idx] * v[self.col_idx]))


class TopPair(NamedTuple):
    sigma: float
    u: np.ndarray
    v: np.ndarray
    converged: bool


def _seeded_unit(seed: int, size: int) -> np.ndarray:
    v = np.random.default_rng(seed).standard_normal(size)
    return v / np.linalg.norm(v)


def top_singular_pair(g: SparseMatrix, seed: int = 0, tol: float = 1e-10,
                      max_iter: int = 1000) -> TopPair:
    """Largest singular value and vectors of g via power iteration.

    Iterates v <- normalized g^T(g v) without forming g^T g; stops when
    the relative change of the sigma estimate falls below tol. Output is
    deterministic given (g, seed): the start vector is a seeded Gaussian
    draw and the sign is fixed by making the first nonzero component of
    u positive.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if g.nnz == 0 or not np.any(g.values):
        raise ValueError("zero matrix has no top singular pair")

    attempt = 0
    v = _seeded_unit(seed, g.cols)
    sigma_prev = None
    converged = False
    it = 0
    while it < max_iter:
        w = g.matvec(v)
        sigma = float(np.linalg.norm(w))
        if sigma < 1e-300:
            # start vector fell in the null space; re-draw deterministically
            attempt += 1
            if attempt > 50:
                raise RuntimeError("could not leave the null space of g")
            v = _seeded_unit(seed + attempt, g.cols)
            sigma_prev = None
            continue
        z = g.rmatvec(w)
        zn = float(np.linalg.norm(z))
        if zn < 1e-300:
            attempt += 1
            if attempt > 50:
                raise RuntimeError("could not leave the null space of g")
            v = _seeded_unit(seed + attempt, g.cols)
            sigma_prev = None
            continue
        v = z / zn
        it += 1
        if sigma_prev is not None and abs(sigma - sigma_prev) <= tol * sigma:
            converged = True
            break
        sigma_prev = sigma

    w = g.matvec(v)
    sigma = float(np.linalg.norm(w))
    u = w / sigma
    # reproducible orientation
    nz = np.nonzero(u)[0]
    if nz.size and u[nz[0]] < 0:
        u = -u
        v = -v
    u.flags.writeable = False
    v.flags.writeable = False
    return TopPair(sigma, u, v, converged)
