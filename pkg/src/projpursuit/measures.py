"""Projected empirical measures, piecewise-linear test functions and exact
Gaussian expectations of those functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .dataset import Dataset
from .randsphere import Direction

__all__ = [
    "EmpiricalMeasure",
    "PiecewiseLinearFn",
    "GaussianSpec",
    "project",
    "project_many",
    "integrate",
    "gaussian_expectation",
    "builtin_test_functions",
    "registry_function",
    "gauss_cdf",
    "gauss_sf",
    "gauss_pdf",
]

_SQRT2PI = math.sqrt(2.0 * math.pi)


def gauss_pdf(x, sigma=1.0):
    z = np.asarray(x, dtype=float) / sigma
    return np.exp(-0.5 * z * z) / (_SQRT2PI * sigma)


def gauss_cdf(x, sigma=1.0):
    return ndtr(np.asarray(x, dtype=float) / sigma)


def gauss_sf(x, sigma=1.0):
    return ndtr(-np.asarray(x, dtype=float) / sigma)


def _gauss_mass(a, b, sigma):
    """``Phi(b) - Phi(a)`` evaluated on the side of zero that avoids cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    right = a > 0
    return np.where(right, gauss_sf(a, sigma) - gauss_sf(b, sigma), gauss_cdf(b, sigma) - gauss_cdf(a, sigma))


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Uniform-mass atoms, kept sorted; repeated values stay repeated."""

    atoms: np.ndarray

    def __post_init__(self):
        a = np.sort(np.array(self.atoms, dtype=float).ravel())
        if a.size < 1:
            raise ValueError("empirical measure needs at least one atom")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def n(self) -> int:
        return self.atoms.size

    @property
    def mass(self) -> float:
        return 1.0 / self.atoms.size

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            for v in self.atoms:
                fh.write(f"{float(v)!r}\n")


@dataclass(frozen=True, eq=False)
class PiecewiseLinearFn:
    """Continuous piecewise-linear function, constant beyond its end knots.

    ``sup_norm``, ``lip_const`` and ``bl_norm`` are derived from the knots on
    construction; a constant extension cannot exceed the end values, so the
    knot table carries all the information.
    """

    knots: np.ndarray
    values: np.ndarray
    name: str = ""
    sup_norm: float = field(init=False)
    lip_const: float = field(init=False)

    def __post_init__(self):
        k = np.array(self.knots, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if k.size != v.size or k.size < 1:
            raise ValueError("knots and values must be non-empty and of equal length")
        if k.size > 1 and not np.all(np.diff(k) > 0):
            raise ValueError("knots must be strictly increasing")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(v))):
            raise ValueError("knots and values must be finite")
        k.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sup_norm", float(np.max(np.abs(v))))
        lip = float(np.max(np.abs(np.diff(v) / np.diff(k)))) if k.size > 1 else 0.0
        object.__setattr__(self, "lip_const", lip)

    @property
    def bl_norm(self) -> float:
        return self.sup_norm + self.lip_const

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.knots.size == 1:
            return np.full(x.shape, self.values[0])
        return np.interp(x, self.knots, self.values)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.knots)

    def scaled(self, c: float) -> "PiecewiseLinearFn":
        return PiecewiseLinearFn(self.knots, c * self.values, name=self.name)

    def to_csv(self, path) -> None:
        with Path(path).open("w") as fh:
            fh.write("knot,value\n")
            for k, v in zip(self.knots, self.values):
                fh.write(f"{float(k)!r},{float(v)!r}\n")

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "knots": self.knots.tolist(),
            "values": self.values.tolist(),
            "sup_norm": self.sup_norm,
            "lip_const": self.lip_const,
            "bl_norm": self.bl_norm,
        }


@dataclass(frozen=True)
class GaussianSpec:
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be finite and positive, got {self.sigma}")


def project(ds: Dataset, theta) -> EmpiricalMeasure:
    """Empirical measure of ``<theta, x_i>``."""
    coords = theta.coords if isinstance(theta, Direction) else np.asarray(theta, dtype=float)
    if coords.shape != (ds.d,):
        raise ValueError(f"direction has dimension {coords.shape}, dataset has d = {ds.d}")
    return EmpiricalMeasure(ds.points @ coords)


def project_many(ds: Dataset, thetas: np.ndarray) -> np.ndarray:
    """Unsorted projections for a stack of directions, shape ``(k, n)``."""
    thetas = np.atleast_2d(thetas)
    if thetas.shape[1] != ds.d:
        raise ValueError(f"directions have dimension {thetas.shape[1]}, dataset has d = {ds.d}")
    return thetas @ ds.points.T


def integrate(mu, f: PiecewiseLinearFn) -> float:
    atoms = mu.atoms if isinstance(mu, EmpiricalMeasure) else np.asarray(mu)
    return float(np.mean(f(atoms)))


def gaussian_expectation(f: PiecewiseLinearFn, g: GaussianSpec) -> float:
    """``E f(sigma Z)`` in closed form, segment by segment.

    On ``[a, b]`` with ``f(x) = alpha x + beta``::

        int (alpha x + beta) dN(0, s^2) = alpha s^2 (phi_s(a) - phi_s(b)) + beta (Phi_s(b) - Phi_s(a))

    plus the two constant tails.
    """
    s = g.sigma
    k, v = f.knots, f.values
    total = v[0] * float(gauss_cdf(k[0], s)) + v[-1] * float(gauss_sf(k[-1], s))
    if k.size > 1:
        a, b = k[:-1], k[1:]
        alpha = np.diff(v) / np.diff(k)
        beta = v[:-1] - alpha * a
        parts = alpha * s * s * (gauss_pdf(a, s) - gauss_pdf(b, s)) + beta * _gauss_mass(a, b, s)
        total += math.fsum(parts)
    return float(total)


def registry_function(name: str) -> PiecewiseLinearFn:
    for f in builtin_test_functions():
        if f.name == name:
            return f
    raise KeyError(f"no registry function named {name!r}")


def builtin_test_functions() -> list[PiecewiseLinearFn]:
    """Fixed registry of test functions with ``||f||_BL <= 1``.

    IDs are stable; the order is part of the contract so that report files
    stay comparable across versions.
    """
    fns = [
        # max(-1/2, min(1/2, x/2)): sup 1/2 + slope 1/2
        PiecewiseLinearFn([-1.0, 1.0], [-0.5, 0.5], name="clamp"),
        # sup 1/4 + slope 3/4
        PiecewiseLinearFn([-1 / 3, 1 / 3], [-0.25, 0.25], name="clamp_steep"),
        PiecewiseLinearFn([-1.0, 0.0, 1.0], [0.0, 0.5, 0.0], name="hat"),
        PiecewiseLinearFn([-0.5, 0.0, 0.5], [-0.125, 0.25, -0.125], name="hat_narrow"),
        PiecewiseLinearFn([0.0, 1.0], [-0.5, 0.0], name="ramp_right"),
        # levels -0.4 .. 0.4 in steps of 0.2, ramps of slope 0.6
        PiecewiseLinearFn(
            [-1.5, -7 / 6, -0.5, -1 / 6, 1 / 6, 0.5, 7 / 6, 1.5],
            [-0.4, -0.2, -0.2, 0.0, 0.0, 0.2, 0.2, 0.4],
            name="staircase",
        ),
    ]
    # chords of (1/2) cos have slope <= 1/2 and values <= 1/2, so bl_norm <= 1
    x = np.linspace(-4 * math.pi, 4 * math.pi, 513)
    fns.append(PiecewiseLinearFn(x, 0.5 * np.cos(x), name="half_cos"))
    return fns
