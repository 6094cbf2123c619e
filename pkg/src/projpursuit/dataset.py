"""Deterministic point clouds and their condition constants.

The three constants summarise how "Gaussian-friendly" a cloud ``x_1..x_n`` in
``R^d`` is:

* ``sigma2``: average squared length per coordinate, ``sum |x_i|^2 = n d sigma2``;
* ``A``: mean absolute deviation of ``|x_i|^2 / sigma2`` from ``d``;
* ``B``: worst-direction mean squared projection, i.e. the spectral norm of
  the second-moment matrix ``(1/n) sum x_i x_i^T``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .randsphere import RngStream, as_generator

__all__ = [
    "Dataset",
    "ConditionSummary",
    "DatasetError",
    "load_csv",
    "save_csv",
    "generate",
    "compute_conditions",
    "second_moment_matrix",
]

CUBE_MAX_DIM = 24
DENSE_EIG_MAX_DIM = 64
_CHUNK = 65536
KINDS = ("cube", "gaussian", "orthobasis", "line", "clustered", "cube_design")


class DatasetError(ValueError):
    """Malformed, degenerate or oversized point cloud."""


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise DatasetError("points must be a 2-d array (n, d)")
        n, d = pts.shape
        if n < 1:
            raise DatasetError("dataset needs at least one point")
        if d < 2:
            raise DatasetError(f"ambient dimension must be >= 2, got {d}")
        if not np.all(np.isfinite(pts)):
            raise DatasetError("all coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def scaled(self, s: float) -> "Dataset":
        return Dataset(self.points * s, label=f"{self.label}*{s:g}")


@dataclass(frozen=True)
class ConditionSummary:
    sigma2: float
    a_const: float
    b_const: float
    b_residual: float
    d: int
    n: int
    b_eigenvalue: float = field(default=float("nan"))
    b_method: str = ""

    def as_dict(self) -> dict:
        return {
            "sigma2": self.sigma2,
            "A": self.a_const,
            "B": self.b_const,
            "B_residual": self.b_residual,
            "B_eigenvalue": self.b_eigenvalue,
            "B_method": self.b_method,
            "d": self.d,
            "n": self.n,
        }


def load_csv(path) -> Dataset:
    """Read one point per row, comma separated, no header."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"{path}: no such file")
    rows = []
    width = None
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DatasetError(f"{path}: row {lineno}: non-numeric cell ({exc})") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DatasetError(
                    f"{path}: row {lineno}: expected {width} columns, found {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: empty file")
    return Dataset(np.array(rows), label=str(path))


def save_csv(ds: Dataset, path) -> None:
    # repr() round-trips doubles exactly
    with Path(path).open("w") as fh:
        for row in ds.points:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def _hadamard_columns(n_rows: int, cols: np.ndarray) -> np.ndarray:
    """Columns ``cols`` of the Sylvester Hadamard matrix of order ``n_rows``."""
    i = np.arange(n_rows, dtype=np.int64)[:, None]
    bits = np.bitwise_and(i, cols[None, :].astype(np.int64))
    parity = np.zeros_like(bits)
    while np.any(bits):
        parity ^= bits & 1
        bits >>= 1
    return 1.0 - 2.0 * parity


def generate(kind: str, d: int, n: int = 0, seed: int = 0) -> Dataset:
    """Synthetic point clouds.

    ``cube``        all ``2^d`` vertices of the unit cube centred at 0 (``n`` ignored).
    ``orthobasis``  ``sqrt(d) e_i`` for ``i = 1..d`` (``n`` ignored).
    ``gaussian``    i.i.d. standard normal coordinates.
    ``line``        ``t_i v`` for a random unit ``v`` and ``t_i`` evenly spaced on ``[-d, d]``.
    ``clustered``   two unit-variance Gaussian clusters at ``+-sqrt(d) e_1``.
    ``cube_design`` ``n`` distinct cube vertices (rows of a Hadamard matrix,
                    ``n`` rounded up to a power of two above ``d``) whose
                    second-moment matrix is exactly ``I/4``, so the
                    constants coincide with the full cube's for any ``d``.
    """
    if kind not in KINDS:
        raise DatasetError(f"unknown kind {kind!r}; choose from {', '.join(KINDS)}")
    if d < 2:
        raise DatasetError(f"ambient dimension must be >= 2, got {d}")
    label = f"{kind}(d={d}"
    if kind == "cube":
        if d > CUBE_MAX_DIM:
            raise DatasetError(f"cube dimension capped at {CUBE_MAX_DIM} (2^d points), got {d}")
        codes = np.arange(2**d, dtype=np.int64)
        bits = (codes[:, None] >> np.arange(d, dtype=np.int64)[None, :]) & 1
        return Dataset(bits - 0.5, label=label + ")")
    if kind == "orthobasis":
        return Dataset(math.sqrt(d) * np.eye(d), label=label + ")")

    if n <= 0:
        raise DatasetError(f"{kind} requires n >= 1, got {n}")
    rng = as_generator(RngStream(seed, 0))
    label += f",n={n},seed={seed})"
    if kind == "gaussian":
        pts = rng.standard_normal((n, d))
    elif kind == "line":
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        # t evenly spaced on [-d, d], so sigma2 is about d/3
        t = np.linspace(-float(d), float(d), n) if n > 1 else np.full(1, float(d))
        pts = t[:, None] * v[None, :]
    elif kind == "clustered":
        pts = rng.standard_normal((n, d))
        pts[:, 0] += math.sqrt(d) * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    else:  # cube_design
        rows = 1 << max(int(n - 1).bit_length(), int(d).bit_length())
        cols = np.sort(rng.choice(np.arange(1, rows), size=d, replace=False))
        pts = 0.5 * _hadamard_columns(rows, cols)
        label = f"{kind}(d={d},n={rows},seed={seed})"
    return Dataset(pts, label=label)


def second_moment_matrix(ds: Dataset) -> np.ndarray:
    """``(1/n) sum x_i x_i^T``, accumulated over fixed-size chunks in fixed order."""
    acc = np.zeros((ds.d, ds.d))
    for start in range(0, ds.n, _CHUNK):
        blk = ds.points[start : start + _CHUNK]
        acc += blk.T @ blk
    m = acc / ds.n
    return 0.5 * (m + m.T)


def _power_iteration(m: np.ndarray, eig_tol: float, max_iter: int = 100_000, seed: int = 0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(m.shape[0])
    v /= np.linalg.norm(v)
    lam = float(v @ m @ v)
    for _ in range(max_iter):
        w = m @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0, v
        v = w / nrm
        new = float(v @ m @ v)
        done = abs(new - lam) <= eig_tol * abs(new)
        lam = new
        if done:
            break
    return lam, v


def compute_conditions(ds: Dataset, eig_tol: float = 1e-10, method: str = "auto") -> ConditionSummary:
    """Condition constants ``sigma2``, ``A`` and a certified upper value of ``B``.

    ``B`` is the top eigenvalue ``lam`` of the second-moment matrix plus the
    residual norm ``|M v - lam v|`` of the returned eigenvector, and never
    less than the two exact lower bounds ``sigma2`` and ``max |x_i|^2 / n``.

    ``method`` is ``"dense"`` (symmetric eigensolver), ``"power"`` or
    ``"auto"`` (dense up to d = 64).
    """
    if not 0.0 < eig_tol <= 1e-3:
        raise ValueError(f"eig_tol must lie in (0, 1e-3], got {eig_tol}")
    sq = np.einsum("ij,ij->i", ds.points, ds.points)
    total = math.fsum(sq)
    if total == 0.0:
        raise DatasetError("degenerate scale: all points are zero")
    n, d = ds.n, ds.d
    sigma2 = total / (n * d)
    a_const = math.fsum(np.abs(sq / sigma2 - d)) / n

    m = second_moment_matrix(ds)
    if method == "auto":
        method = "dense" if d <= DENSE_EIG_MAX_DIM else "power"
    if method == "dense":
        vals, vecs = np.linalg.eigh(m)
        lam, v = float(vals[-1]), vecs[:, -1]
    elif method == "power":
        lam, v = _power_iteration(m, eig_tol)
    else:
        raise ValueError(f"unknown eigen method {method!r}")
    residual = float(np.linalg.norm(m @ v - lam * v))
    # floor for rounding in forming M and in the eigensolver itself
    slack = residual + 4 * d * np.finfo(float).eps * abs(lam)
    slack = float(slack)
    b_const = float(max(lam + slack, sigma2, float(sq.max()) / n))
    return ConditionSummary(
        sigma2=sigma2,
        a_const=a_const,
        b_const=b_const,
        b_residual=float(slack / abs(lam)) if lam else slack,
        d=d,
        n=n,
        b_eigenvalue=lam,
        b_method=method,
    )
