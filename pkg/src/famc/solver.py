"""Lifted coordinate gradient descent for nuclear-norm penalized likelihoods.

The working objective is lam * ||theta||_1 + loss(W_theta), where theta is a
nonnegative weighting of rank-one atoms per parameter channel (class). Each
outer iteration either adds the atom best aligned with the negative gradient
per channel (with a joint nonnegative line search) or re-optimizes the
weights over the current support. Parameters are only ever stored at the
observed entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .link import (
    compress_observations,
    gradient_from_values,
    nll_from_values,
    probs_from_values,
)
from .model import Atom, AtomicModel, FitConfig, ObservationSet
from .topsvd import SparseMatrix, top_singular_pair

STOP_DUALITY_GAP = "duality_gap_met"
STOP_MAX_ITERS = "max_iters"
STOP_STALLED = "stalled"

WEIGHT_PRUNE_TOL = 1e-12
MERGE_TOL = 1e-10
DESK_SCALE_CELLS = 10_000
_STALL_LIMIT = 3


@dataclass(frozen=True)
class FitReport:
    """Solver trace: objective per iteration, atom counts, stop reason."""

    iterations: int
    objective_trace: tuple[float, ...]
    atom_counts: tuple[int, ...]
    stop_reason: str
    converged: bool


class MultinomialLoss:
    """Average multinomial-logit negative log-likelihood on observed entries."""

    def __init__(self, obs: ObservationSet):
        self.rows_e, self.cols_e, self.counts = compress_observations(obs)
        self.n = float(self.counts.sum())
        self.n_entry = self.counts.sum(axis=1)
        self.q = obs.classes - 1
        self.classes = obs.classes

    def value(self, xs: np.ndarray) -> float:
        return nll_from_values(xs, self.counts)

    def grad(self, xs: np.ndarray) -> np.ndarray:
        return gradient_from_values(xs, self.counts)

    def hess_weight(self, xs: np.ndarray):
        """Per-entry Hessian pieces for quadratic forms: (scale_e, probs_e)."""
        return self.n_entry / self.n, probs_from_values(xs)[:, :-1]

    def curvature(self) -> float:
        """Upper bound on the largest per-entry Hessian eigenvalue."""
        c = 0.25 if self.classes == 2 else 0.5
        return float(self.n_entry.max() / self.n) * c


class SquaredLoss:
    """Average half squared error on observed entries (single channel)."""

    def __init__(self, obs: ObservationSet, label_values: np.ndarray):
        self.rows_e, self.cols_e, counts = compress_observations(obs)
        vals = np.asarray(label_values, dtype=np.float64)
        if vals.shape != (obs.classes,):
            raise ValueError("label_values must have one real per class")
        self.n = float(counts.sum())
        self.n_entry = counts.sum(axis=1)
        self.sum_y = counts @ vals
        self.sum_y2 = counts @ (vals**2)
        self.q = 1

    def value(self, xs: np.ndarray) -> float:
        x = xs[:, 0]
        return float((self.n_entry * x * x - 2.0 * self.sum_y * x + self.sum_y2).sum()
                     / (2.0 * self.n))

    def grad(self, xs: np.ndarray) -> np.ndarray:
        return ((self.n_entry * xs[:, 0] - self.sum_y) / self.n)[:, None]

    def hess_weight(self, xs: np.ndarray):
        return self.n_entry / self.n, None

    def curvature(self) -> float:
        return float(self.n_entry.max() / self.n)


def _loss_for(obs: ObservationSet, link: str, label_values=None):
    if link == "logit":
        return MultinomialLoss(obs)
    if link == "gaussian":
        vals = (np.arange(1, obs.classes + 1, dtype=float)
                if label_values is None else np.asarray(label_values, dtype=float))
        return SquaredLoss(obs, vals)
    raise ValueError(f"unknown link {link!r}")


def _entry_values(u: np.ndarray, v: np.ndarray, rows_e: np.ndarray,
                  cols_e: np.ndarray) -> np.ndarray:
    return u[rows_e] * v[cols_e]


def _hess_quad(loss, xs: np.ndarray, dirs: np.ndarray, chans) -> np.ndarray:
    """Hessian of b -> loss(xs + sum_r b_r * dirs[:, r] on channel chans[r])."""
    w, probs = loss.hess_weight(xs)
    r = dirs.shape[1]
    if probs is None:  # squared loss: Hessian diagonal per entry
        wd = w[:, None] * dirs
        return wd.T @ dirs
    f_sel = probs[:, chans]  # (E, r)
    c = np.sqrt(w)[:, None] * dirs * f_sel
    h = -(c.T @ c)
    for i in range(r):
        for s in range(r):
            if chans[i] == chans[s]:
                h[i, s] += float((w * dirs[:, i] * dirs[:, s] * f_sel[:, i]).sum())
    return h


def _xs_plus(xs: np.ndarray, chans, dirs: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = xs.copy()
    for r, j in enumerate(chans):
        if b[r] != 0.0:
            out[:, j] += b[r] * dirs[:, r]
    return out


def _line_search(loss, xs: np.ndarray, dirs: np.ndarray, chans, lam: float,
                 cfg: FitConfig):
    """Nonnegative joint step sizes for freshly generated atoms.

    Projected Newton with Armijo backtracking on
    phi(b) = lam * sum(b) + loss(xs + sum_r b_r d_r), b >= 0.
    Returns (b, xs_at_b, phi(b)).
    """
    r = dirs.shape[1]
    b = np.zeros(r)
    xs_cur = xs
    phi = loss.value(xs_cur)
    for _ in range(cfg.ls_max_iter):
        g_entries = loss.grad(xs_cur)
        grad = lam + np.array([float(g_entries[:, chans[i]] @ dirs[:, i])
                               for i in range(r)])
        pg = np.where(b > 0, grad, np.minimum(grad, 0.0))
        if np.linalg.norm(pg) <= cfg.ls_tol:
            break
        h = _hess_quad(loss, xs_cur, dirs, chans)
        h = h + np.eye(r) * max(1e-14, 1e-12 * np.trace(h) / max(r, 1))
        free = ~((b <= 0) & (grad > 0))
        step = np.zeros(r)
        if free.any():
            try:
                step[free] = np.linalg.solve(h[np.ix_(free, free)], grad[free])
            except np.linalg.LinAlgError:
                step[free] = grad[free] / max(float(np.diag(h)[free].max()), 1e-14)
        if not np.any(step):
            break
        t = 1.0
        accepted = False
        for _ in range(60):
            b_try = np.maximum(b - t * step, 0.0)
            delta = b_try - b
            if not np.any(delta):
                break
            xs_try = _xs_plus(xs, chans, dirs, b_try)
            phi_try = lam * float(b_try.sum()) + loss.value(xs_try)
            if phi_try <= phi + cfg.armijo_c * float(grad @ delta) + 1e-15:
                b, xs_cur, phi = b_try, xs_try, phi_try
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return b, xs_cur, phi


class _Support:
    """Mutable atom support: parallel lists of weights, factors, channels."""

    def __init__(self, q: int, rows_e: np.ndarray, cols_e: np.ndarray):
        self.q = q
        self.rows_e = rows_e
        self.cols_e = cols_e
        self.weights: list[float] = []
        self.us: list[np.ndarray] = []
        self.vs: list[np.ndarray] = []
        self.chans: list[int] = []
        self.dirs: list[np.ndarray] = []  # cached entry values per atom

    def __len__(self) -> int:
        return len(self.weights)

    def add(self, weight: float, u: np.ndarray, v: np.ndarray, chan: int,
            d: np.ndarray | None = None) -> None:
        """Append an atom, merging into a same-direction atom when present."""
        for i in range(len(self.weights)):
            if self.chans[i] != chan:
                continue
            du = float(self.us[i] @ u)
            dv = float(self.vs[i] @ v)
            if abs(du) > 1 - MERGE_TOL and abs(dv) > 1 - MERGE_TOL and du * dv > 0:
                self.weights[i] += weight
                return
        self.weights.append(weight)
        self.us.append(u)
        self.vs.append(v)
        self.chans.append(chan)
        self.dirs.append(d if d is not None
                         else _entry_values(u, v, self.rows_e, self.cols_e))

    def prune(self, tol: float = WEIGHT_PRUNE_TOL) -> None:
        keep = [i for i, w in enumerate(self.weights) if w >= tol]
        self.weights = [self.weights[i] for i in keep]
        self.us = [self.us[i] for i in keep]
        self.vs = [self.vs[i] for i in keep]
        self.chans = [self.chans[i] for i in keep]
        self.dirs = [self.dirs[i] for i in keep]

    def predictions(self) -> np.ndarray:
        xs = np.zeros((self.rows_e.size, self.q))
        for i in range(len(self.weights)):
            xs[:, self.chans[i]] += self.weights[i] * self.dirs[i]
        return xs

    def mass(self) -> float:
        return float(sum(self.weights))

    def to_model(self, rows: int, cols: int, classes: int) -> AtomicModel:
        per_class: list[list[Atom]] = [[] for _ in range(self.q)]
        for w, u, v, c in zip(self.weights, self.us, self.vs, self.chans):
            per_class[c].append(Atom(w, u, v))
        return AtomicModel(rows, cols, classes, tuple(tuple(a) for a in per_class))


def _optimize_weights(loss, support: _Support, lam: float, cfg: FitConfig):
    """Re-fit the nonnegative atom weights over the fixed support.

    Accelerated projected gradient with backtracking and restart on
    non-decrease; stops at relative objective change <= cfg.corr_tol or
    after cfg.corr_max_iter iterations. Returns the weight vector.
    """
    k = len(support)
    a = np.column_stack(support.dirs)  # (E, k)
    chans = np.asarray(support.chans)
    by_chan = [np.nonzero(chans == j)[0] for j in range(support.q)]

    def xs_of(w):
        xs = np.zeros((support.rows_e.size, support.q))
        for j, idx in enumerate(by_chan):
            if idx.size:
                xs[:, j] = a[:, idx] @ w[idx]
        return xs

    def f_of(w):
        xs = xs_of(w)
        return lam * float(w.sum()) + loss.value(xs), xs

    def grad_of(xs):
        ge = loss.grad(xs)
        g = np.empty(k)
        for j, idx in enumerate(by_chan):
            if idx.size:
                g[idx] = lam + a[:, idx].T @ ge[:, j]
        return g

    x = np.asarray(support.weights, dtype=np.float64)
    fx, xs_x = f_of(x)
    lip = loss.curvature() * max(float((a * a).sum(axis=0).max()), 1e-12)
    y = x.copy()
    xs_y = xs_x.copy()
    t = 1.0
    tiny_changes = 0
    for _ in range(cfg.corr_max_iter):
        gy = grad_of(xs_y)
        fy = lam * float(y.sum()) + loss.value(xs_y)
        accepted = None
        for _ in range(60):
            z = np.maximum(y - gy / lip, 0.0)
            dz = z - y
            fz, xs_z = f_of(z)
            if fz <= fy + float(gy @ dz) + 0.5 * lip * float(dz @ dz) + 1e-15:
                accepted = (z, fz, xs_z)
                break
            lip *= 2.0
        if accepted is None:
            break
        z, fz, xs_z = accepted
        if fz <= fx:
            change = fx - fz
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = z + ((t - 1.0) / t_new) * (z - x)
            xs_y = xs_of(y)
            x, fx, xs_x = z, fz, xs_z
            t = t_new
            if change <= cfg.corr_tol * max(1.0, abs(fx)):
                tiny_changes += 1
                if tiny_changes >= 2:
                    break
            else:
                tiny_changes = 0
        else:
            if np.array_equal(y, x):
                break  # plain gradient step failed to improve: at tolerance
            t = 1.0
            y = x.copy()
            xs_y = xs_x.copy()
        lip *= 0.95
    return x


def _top_directions(loss, g_entries: np.ndarray, rows: int, cols: int, seed: int):
    """Per-channel top singular pair of the negated gradient.

    Returns (sigmas, pairs); pairs[j] is None for a channel whose gradient
    vanishes identically (its sigma is 0).
    """
    sigmas = np.zeros(loss.q)
    pairs: list[tuple[np.ndarray, np.ndarray] | None] = []
    for j in range(loss.q):
        vals = -g_entries[:, j]
        if not np.any(vals):
            pairs.append(None)
            continue
        m = SparseMatrix(rows, cols, loss.rows_e, loss.cols_e, vals.copy())
        res = top_singular_pair(m, seed=seed + j)
        sigmas[j] = res.sigma
        pairs.append((res.u, res.v))
    return sigmas, pairs


def _lifted_solve(loss, lam: float, cfg: FitConfig, rows: int, cols: int):
    """Core add/correct loop shared by the multinomial and squared losses."""
    support = _Support(loss.q, loss.rows_e, loss.cols_e)
    xs = support.predictions()
    obj = loss.value(xs)
    trace = [obj]
    counts = [0]
    stop_reason = STOP_MAX_ITERS
    converged = False
    stalls = 0
    k = 0
    while k < cfg.max_iters:
        g_entries = loss.grad(xs)
        sigmas, pairs = _top_directions(loss, g_entries, rows, cols,
                                        cfg.seed + k * loss.q)
        gap = lam - float(sigmas.max())
        if gap <= -cfg.epsilon / 2.0:
            active = [j for j in range(loss.q) if pairs[j] is not None]
            dirs = np.column_stack(
                [_entry_values(pairs[j][0], pairs[j][1], loss.rows_e, loss.cols_e)
                 for j in active])
            b, _, _ = _line_search(loss, xs, dirs, np.asarray(active), lam, cfg)
            for r, j in enumerate(active):
                if b[r] > 0.0:
                    support.add(float(b[r]), pairs[j][0], pairs[j][1], j, dirs[:, r])
        else:
            g_max = 0.0
            for i in range(len(support)):
                score = lam + float(g_entries[:, support.chans[i]] @ support.dirs[i])
                g_max = max(g_max, abs(score))
            if g_max <= cfg.epsilon:
                stop_reason = STOP_DUALITY_GAP
                converged = True
                break
            w = _optimize_weights(loss, support, lam, cfg)
            support.weights = list(w)
            support.prune()
        xs = support.predictions()
        new_obj = lam * support.mass() + loss.value(xs)
        k += 1
        trace.append(new_obj)
        counts.append(len(support))
        if obj - new_obj <= 1e-15 * max(1.0, abs(obj)):
            stalls += 1
            if stalls >= _STALL_LIMIT:
                stop_reason = STOP_STALLED
                break
        else:
            stalls = 0
        obj = new_obj
    report = FitReport(k, tuple(trace), tuple(counts), stop_reason, converged)
    return support, report


def fit(obs: ObservationSet, cfg: FitConfig) -> tuple[AtomicModel, FitReport]:
    """Fit the penalized multinomial-logit model by lifted coordinate descent.

    Starts from the zero model and alternates atom additions with
    support-restricted weight re-optimization until the two stopping tests
    hold (gap > -epsilon/2 and every support score within epsilon), the
    iteration cap is reached, or progress stops. Never materializes a
    dense rows x cols matrix.
    """
    if cfg.lam <= 0:
        raise ValueError("fit requires lam > 0")
    if obs.n == 0:
        raise ValueError("empty observation set")
    loss = MultinomialLoss(obs)
    support, report = _lifted_solve(loss, cfg.lam, cfg, obs.rows, obs.cols)
    return support.to_model(obs.rows, obs.cols, obs.classes), report


def _support_from_model(model: AtomicModel, loss) -> _Support:
    support = _Support(loss.q, loss.rows_e, loss.cols_e)
    for j, atoms in enumerate(model.per_class_atoms):
        for atom in atoms:
            support.add(atom.weight, atom.left, atom.right, j)
    return support


def atom_step(model: AtomicModel, obs: ObservationSet, lam: float,
              new_atoms) -> AtomicModel:
    """Append one candidate atom per class with jointly optimized weights.

    new_atoms is a sequence of classes-1 (u, v) unit-vector pairs. Atoms
    whose optimal weight is zero are not appended; the working objective
    never increases (zero weights are always feasible).
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if model.classes != obs.classes:
        raise ValueError("model/observation class mismatch")
    loss = MultinomialLoss(obs)
    new_atoms = [(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
                 for u, v in new_atoms]
    if len(new_atoms) != model.classes - 1:
        raise ValueError("need one (u, v) pair per class")
    support = _support_from_model(model, loss)
    xs = support.predictions()
    dirs = np.column_stack(
        [_entry_values(u, v, loss.rows_e, loss.cols_e) for u, v in new_atoms])
    chans = np.arange(model.classes - 1)
    b, _, _ = _line_search(loss, xs, dirs, chans, lam, FitConfig(lam=lam))
    for r, (u, v) in enumerate(new_atoms):
        if b[r] > 0.0:
            support.add(float(b[r]), u, v, r, dirs[:, r])
    return support.to_model(model.rows, model.cols, model.classes)


def correction_step(model: AtomicModel, obs: ObservationSet, lam: float) -> AtomicModel:
    """Re-optimize all atom weights over the fixed support of the model.

    Near-identical atoms are merged first; weights below the prune
    threshold are dropped afterwards. The factors themselves are unchanged.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if model.n_atoms == 0:
        raise ValueError("correction step requires a nonempty support")
    loss = MultinomialLoss(obs)
    support = _support_from_model(model, loss)
    w = _optimize_weights(loss, support, lam, FitConfig(lam=lam))
    support.weights = list(w)
    support.prune()
    return support.to_model(model.rows, model.cols, model.classes)


def _svt(mat: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
    """Singular value soft-thresholding; returns (matrix, its nuclear norm)."""
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    return (u * s) @ vt, float(s.sum())


def reference_fit(obs: ObservationSet, cfg: FitConfig, link: str = "logit",
                  label_values=None, max_iter: int = 20000):
    """Desk-scale reference solver: accelerated proximal gradient, full SVD.

    Minimizes lam * sum_j ||X^j||_* + loss(X) over dense class matrices by
    singular-value soft-thresholding at step 1/L, with L the per-entry
    curvature bound of the loss. Independent of the lifted solver, which it
    serves as an oracle. Stops when the relative objective change is
    <= 1e-12 (converged, stop_reason "stalled") or at max_iter.
    """
    if obs.rows * obs.cols > DESK_SCALE_CELLS:
        raise ValueError("reference_fit is restricted to rows*cols <= 10^4")
    if obs.n == 0:
        raise ValueError("empty observation set")
    loss = _loss_for(obs, link, label_values)
    q = loss.q
    lam = cfg.lam
    step = 1.0 / loss.curvature()

    def entries_of(x):
        return x[:, loss.rows_e, loss.cols_e].T  # (E, q)

    def objective(x):
        nuc = sum(np.linalg.svd(x[j], compute_uv=False).sum() for j in range(q))
        return lam * float(nuc) + loss.value(entries_of(x))

    x = np.zeros((q, obs.rows, obs.cols))
    y = x.copy()
    t = 1.0
    obj = objective(x)
    trace = [obj]
    stop_reason = STOP_MAX_ITERS
    converged = False
    it = 0
    while it < max_iter:
        ge = loss.grad(entries_of(y))
        z = np.empty_like(y)
        nuc = 0.0
        for j in range(q):
            full = np.zeros((obs.rows, obs.cols))
            full[loss.rows_e, loss.cols_e] = ge[:, j]
            z[j], nucj = _svt(y[j] - step * full, step * lam)
            nuc += nucj
        obj_z = lam * nuc + loss.value(entries_of(z))
        it += 1
        if obj_z <= obj:
            change = obj - obj_z
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = z + ((t - 1.0) / t_new) * (z - x)
            x, obj = z, obj_z
            t = t_new
            trace.append(obj)
            if change <= 1e-12 * max(1.0, abs(obj)):
                stop_reason = STOP_STALLED
                converged = True
                break
        else:
            if np.array_equal(y, x):
                trace.append(obj)
                stop_reason = STOP_STALLED
                converged = True
                break
            t = 1.0  # restart momentum from the best point
            y = x.copy()
    report = FitReport(it, tuple(trace), tuple([0] * len(trace)), stop_reason,
                       converged)
    return x, report


def lambda_max(obs: ObservationSet, link: str = "logit", label_values=None) -> float:
    """Smallest penalty for which the zero model is already stationary.

    Equals the largest per-class spectral norm of the loss gradient at zero.
    """
    loss = _loss_for(obs, link, label_values)
    xs = np.zeros((loss.rows_e.size, loss.q))
    sigmas, _ = _top_directions(loss, loss.grad(xs), obs.rows, obs.cols, seed=0)
    return float(sigmas.max())
