"""File formats, MovieLens ingestion, dataset splitting, model serialization.

Observation CSV: one sample per line, "row,col,label" with 0-based indices
and integer labels starting at 1. MovieLens: the tab-separated u.data
layout "user item rating timestamp" with 1-based ids. Model files use the
FAM v1 plain-text format described in write_model. All files are ASCII
with LF line endings; floats carry 17 significant digits so round-trips
are value-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianModel, default_label_values
from .model import Atom, AtomicModel, ObservationSet


class ParseError(ValueError):
    """Malformed input file; the message carries the offending location."""


@dataclass(frozen=True)
class SplitSpec:
    """Test fraction of the whole, validation fraction of the remainder."""

    test_fraction: float = 0.20
    validation_fraction_of_rest: float = 0.20
    seed: int = 0

    def __post_init__(self):
        for name in ("test_fraction", "validation_fraction_of_rest"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1)")


def _parse_int(token: str, what: str, lineno: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"line {lineno}: {what} {token!r} is not an integer") from None


def read_observations(path, fmt: str = "csv", rows: int | None = None,
                      cols: int | None = None,
                      classes: int | None = None) -> ObservationSet:
    """Read an observation set from a CSV or MovieLens u.data file.

    Dimensions default to max index + 1 and the class count to the largest
    label seen (5 for MovieLens); explicit arguments override inference.
    """
    if fmt == "csv":
        sep, base, fixed_classes = ",", 0, None
    elif fmt == "movielens":
        sep, base, fixed_classes = "\t", 1, 5
    else:
        raise ValueError(f"unknown observation format {fmt!r}")
    ri, ci, lb = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(sep)
            if fmt == "csv" and len(parts) != 3:
                raise ParseError(f"line {lineno}: expected 'row,col,label', got {raw!r}")
            if fmt == "movielens" and len(parts) != 4:
                raise ParseError(
                    f"line {lineno}: expected 'user\\titem\\trating\\ttimestamp', got {raw!r}")
            r = _parse_int(parts[0], "row index", lineno) - base
            c = _parse_int(parts[1], "col index", lineno) - base
            y = _parse_int(parts[2], "label", lineno)
            if r < 0 or c < 0:
                raise ParseError(f"line {lineno}: index out of range")
            if y < 1:
                raise ParseError(f"line {lineno}: label {y} must be at least 1")
            ri.append(r)
            ci.append(c)
            lb.append(y)
    if not ri:
        raise ParseError(f"{path}: no samples")
    ri = np.asarray(ri, dtype=np.int64)
    ci = np.asarray(ci, dtype=np.int64)
    lb = np.asarray(lb, dtype=np.int64)
    m1 = rows if rows is not None else int(ri.max()) + 1
    m2 = cols if cols is not None else int(ci.max()) + 1
    p = classes if classes is not None else (fixed_classes or max(int(lb.max()), 2))
    return ObservationSet(m1, m2, p, ri, ci, lb)


def write_observations(path, obs: ObservationSet) -> None:
    """Write the observation CSV format ("row,col,label" per sample)."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for r, c, y in zip(obs.row_idx, obs.col_idx, obs.labels):
            fh.write(f"{r},{c},{y}\n")


def remap_labels(obs: ObservationSet, mapping: dict[int, int],
                 classes: int | None = None) -> ObservationSet:
    """Apply a label-to-label mapping; labels absent from it are kept.

    The class count defaults to the largest resulting label (at least 2).
    """
    lut = np.arange(obs.classes + 1, dtype=np.int64)
    for src, dst in mapping.items():
        if not 1 <= src <= obs.classes:
            raise ValueError(f"source label {src} outside [1, {obs.classes}]")
        if dst < 1:
            raise ValueError(f"target label {dst} must be at least 1")
        lut[src] = dst
    new_labels = lut[obs.labels]
    p = classes if classes is not None else max(int(new_labels.max()), 2)
    return ObservationSet(obs.rows, obs.cols, p, obs.row_idx, obs.col_idx, new_labels)


def one_vs_rest(obs: ObservationSet, target: int) -> ObservationSet:
    """Binarize: the target label becomes 1, every other label becomes 2."""
    if not 1 <= target <= obs.classes:
        raise ValueError(f"target label {target} outside [1, {obs.classes}]")
    mapping = {y: (1 if y == target else 2) for y in range(1, obs.classes + 1)}
    return remap_labels(obs, mapping, classes=2)


def _take(obs: ObservationSet, idx: np.ndarray) -> ObservationSet:
    return ObservationSet(obs.rows, obs.cols, obs.classes,
                          obs.row_idx[idx], obs.col_idx[idx], obs.labels[idx])


def split(obs: ObservationSet, spec: SplitSpec = SplitSpec()):
    """Seeded disjoint (train, validation, test) partition of the samples."""
    n = obs.n
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_test = int(round(n * spec.test_fraction))
    n_val = int(round((n - n_test) * spec.validation_fraction_of_rest))
    test = perm[:n_test]
    val = perm[n_test:n_test + n_val]
    train = perm[n_test + n_val:]
    return _take(obs, train), _take(obs, val), _take(obs, test)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _fmt_vec(v: np.ndarray) -> str:
    return " ".join(_fmt(x) for x in v)


def write_model(path, model, lam: float = 0.0) -> None:
    """Write an AtomicModel or GaussianModel in the FAM v1 text format.

    Header "FAM v1 rows cols classes lambda"; then one block per parameter
    class: an atom count line, then per atom a weight line, a line of rows
    left-factor values, and a line of cols right-factor values. A
    GaussianModel has a single block followed by a "sigma_hat <value>"
    line. Floats use 17 significant digits.
    """
    if isinstance(model, AtomicModel):
        blocks = model.per_class_atoms
        tail = None
    elif isinstance(model, GaussianModel):
        if model.label_values != default_label_values(model.classes):
            raise ValueError("only the default label encoding can be serialized")
        blocks = (model.atoms,)
        tail = f"sigma_hat {_fmt(model.sigma_hat)}\n"
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"FAM v1 {model.rows} {model.cols} {model.classes} {_fmt(lam)}\n")
        for atoms in blocks:
            fh.write(f"{len(atoms)}\n")
            for a in atoms:
                fh.write(f"{_fmt(a.weight)}\n")
                fh.write(_fmt_vec(a.left) + "\n")
                fh.write(_fmt_vec(a.right) + "\n")
        if tail is not None:
            fh.write(tail)


class _LineReader:
    def __init__(self, path):
        with open(path, "r", encoding="ascii") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise ParseError(f"unexpected end of file: expected {what}")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def peek(self) -> str | None:
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def done(self) -> bool:
        return self.pos >= len(self.lines)


def _parse_float_token(token: str, what: str) -> float:
    try:
        x = float(token)
    except ValueError:
        raise ParseError(f"{what}: {token!r} is not a number") from None
    if not np.isfinite(x):
        raise ParseError(f"{what}: non-finite value {token!r}")
    return x


def _parse_vector(line: str, size: int, what: str) -> np.ndarray:
    parts = line.split()
    if len(parts) != size:
        raise ParseError(f"{what}: expected {size} values, got {len(parts)}")
    return np.asarray([_parse_float_token(t, what) for t in parts])


def _read_atom_block(reader: _LineReader, rows: int, cols: int, block: int):
    what = f"atom count of class block {block}"
    count_line = reader.next(what)
    try:
        count = int(count_line)
    except ValueError:
        raise ParseError(f"{what}: {count_line!r} is not an integer") from None
    if count < 0:
        raise ParseError(f"{what}: negative count")
    atoms = []
    for k in range(1, count + 1):
        w = _parse_float_token(
            reader.next(f"weight of atom {k} in class block {block}"),
            f"weight of atom {k} in class block {block}")
        if w < 0:
            raise ParseError(f"atom {k} in class block {block}: negative weight")
        u = _parse_vector(
            reader.next(f"left factor of atom {k} in class block {block}"),
            rows, f"left factor of atom {k} in class block {block}")
        v = _parse_vector(
            reader.next(f"right factor of atom {k} in class block {block}"),
            cols, f"right factor of atom {k} in class block {block}")
        try:
            atoms.append(Atom(w, u, v))
        except ValueError as exc:
            raise ParseError(f"atom {k} in class block {block}: {exc}") from None
    return tuple(atoms)


def read_model(path):
    """Read a FAM v1 model file; returns an AtomicModel or GaussianModel."""
    reader = _LineReader(path)
    header = reader.next("FAM v1 header").split()
    if len(header) != 6 or header[0] != "FAM" or header[1] != "v1":
        raise ParseError("malformed header: expected 'FAM v1 rows cols classes lambda'")
    rows = _parse_int(header[2], "rows", 1)
    cols = _parse_int(header[3], "cols", 1)
    classes = _parse_int(header[4], "classes", 1)
    _parse_float_token(header[5], "header lambda")
    if rows < 1 or cols < 1 or classes < 2:
        raise ParseError("header dimensions out of range")

    first = _read_atom_block(reader, rows, cols, 1)
    nxt = reader.peek()
    if nxt is not None and nxt.startswith("sigma_hat"):
        parts = reader.next("sigma_hat line").split()
        if len(parts) != 2:
            raise ParseError("malformed sigma_hat line")
        sigma = _parse_float_token(parts[1], "sigma_hat")
        if not reader.done():
            raise ParseError("trailing content after sigma_hat line")
        try:
            return GaussianModel(rows, cols, classes, first, sigma,
                                 default_label_values(classes))
        except ValueError as exc:
            raise ParseError(str(exc)) from None
    blocks = [first]
    for b in range(2, classes):
        blocks.append(_read_atom_block(reader, rows, cols, b))
    if not reader.done():
        raise ParseError(f"trailing content after class block {classes - 1}")
    return AtomicModel(rows, cols, classes, tuple(blocks))


def write_truth(path, mats: np.ndarray) -> None:
    """Write dense class parameter matrices in the FTM v1 text format:
    header "FTM v1 rows cols classes", then rows lines of cols values per
    class block."""
    mats = np.asarray(mats, dtype=np.float64)
    if mats.ndim == 2:
        mats = mats[None, :, :]
    q, m1, m2 = mats.shape
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"FTM v1 {m1} {m2} {q + 1}\n")
        for j in range(q):
            for k in range(m1):
                fh.write(_fmt_vec(mats[j, k]) + "\n")


def read_truth(path) -> np.ndarray:
    """Read an FTM v1 file back into a (classes-1, rows, cols) array."""
    reader = _LineReader(path)
    header = reader.next("FTM v1 header").split()
    if len(header) != 5 or header[0] != "FTM" or header[1] != "v1":
        raise ParseError("malformed header: expected 'FTM v1 rows cols classes'")
    m1 = _parse_int(header[2], "rows", 1)
    m2 = _parse_int(header[3], "cols", 1)
    classes = _parse_int(header[4], "classes", 1)
    if m1 < 1 or m2 < 1 or classes < 2:
        raise ParseError("header dimensions out of range")
    out = np.empty((classes - 1, m1, m2))
    for j in range(classes - 1):
        for k in range(m1):
            what = f"row {k} of class block {j + 1}"
            out[j, k] = _parse_vector(reader.next(what), m2, what)
    if not reader.done():
        raise ParseError("trailing content after the last class block")
    return out
