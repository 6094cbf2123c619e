"""Reproducible random geometry on the sphere and the orthogonal group.

All sampling goes through :class:`RngStream`, a (root seed, stream id) pair
mapped onto a counter-based Philox generator, so that any block of a Monte
Carlo run can be regenerated on its own, in any order, on any worker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "Direction",
    "RotationPair",
    "as_generator",
    "sample_sphere",
    "sample_haar",
    "rotation_eps",
    "q_matrix",
    "haar_second_moment",
    "haar_fourth_moment",
    "q_second_moment",
]

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """A named, independent substream of a root seed."""

    root_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "root_seed", int(self.root_seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def child(self, index: int) -> "RngStream":
        """Substream ``index`` of this stream (deterministic 64-bit mixing)."""
        ss = np.random.SeedSequence([self.stream_id, int(index) & _MASK64, 0x9E3779B97F4A7C15])
        return RngStream(self.root_seed, int(ss.generate_state(1, np.uint64)[0]))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.root_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


@dataclass(frozen=True, eq=False)
class Direction:
    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float)
        if c.ndim != 1:
            raise ValueError("direction must be a vector")
        nrm = np.linalg.norm(c)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector, |theta| = {nrm!r}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def d(self) -> int:
        return self.coords.shape[0]

    @classmethod
    def from_vector(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        return cls(v / np.linalg.norm(v))


@dataclass(frozen=True, eq=False)
class RotationPair:
    eps: float
    a_eps: np.ndarray
    delta: float


def sample_sphere(d: int, rng, size: int | None = None):
    """Uniform point(s) on ``S^{d-1}`` by normalising Gaussian vectors.

    Returns a :class:`Direction` when ``size`` is None, otherwise a
    ``(size, d)`` array of unit rows.
    """
    if d < 2:
        raise ValueError(f"sphere dimension d must be >= 2, got {d}")
    gen = as_generator(rng)
    count = 1 if size is None else int(size)
    v = gen.standard_normal((count, d))
    nrm = np.linalg.norm(v, axis=1)
    bad = nrm < 1e-100
    while np.any(bad):
        v[bad] = gen.standard_normal((int(bad.sum()), d))
        nrm = np.linalg.norm(v, axis=1)
        bad = nrm < 1e-100
    v /= nrm[:, None]
    if size is None:
        # renormalise once more so the 1e-12 unit-norm contract holds exactly
        return Direction(v[0] / np.linalg.norm(v[0]))
    return v


def sample_haar(d: int, rng, size: int | None = None) -> np.ndarray:
    """Haar-distributed orthogonal matrix (or a stack of ``size`` of them).

    Gaussian QR with the columns of Q multiplied by the signs of diag(R),
    which removes the bias of the raw Householder output.
    """
    if d < 2:
        raise ValueError(f"matrix dimension d must be >= 2, got {d}")
    gen = as_generator(rng)
    count = 1 if size is None else int(size)
    z = gen.standard_normal((count, d, d))
    q, r = np.linalg.qr(z)
    s = np.sign(np.diagonal(r, axis1=1, axis2=2))
    s[s == 0] = 1.0
    q = q * s[:, None, :]
    return q[0] if size is None else q


def rotation_eps(eps: float, d: int) -> RotationPair:
    """Rotation by angle ``arcsin(eps)`` in the first coordinate plane."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    c = np.sqrt(1.0 - eps * eps)
    a = np.eye(d)
    a[0, 0] = a[1, 1] = c
    a[0, 1] = eps
    a[1, 0] = -eps
    # cancellation-free form of sqrt(1-e^2) - 1 + e^2/2
    delta = -(eps**4) / (2.0 * (1.0 + c) ** 2)
    return RotationPair(eps=float(eps), a_eps=a, delta=float(delta))


def q_matrix(u: np.ndarray) -> np.ndarray:
    """``K C2 K^T`` for ``K`` the first two columns of ``u``; works on stacks."""
    k1 = u[..., :, 0]
    k2 = u[..., :, 1]
    return k1[..., :, None] * k2[..., None, :] - k2[..., :, None] * k1[..., None, :]


# -- exact moments of Haar entries, used as references by the verify suites --

def haar_second_moment(d: int) -> float:
    return 1.0 / d


def haar_fourth_moment(idx, d: int) -> float:
    """``E[u_ij u_rs u_ab u_lm]`` for ``idx = ((i,j),(r,s),(a,b),(l,m))``.

    Evaluates the degree-four Weingarten expression on O(d) term by term
    from Kronecker deltas (indices may be 0- or 1-based, only equality matters).
    """
    (i, j), (r, s), (al, be), (la, mu) = idx

    def dl(x, y):
        return 1.0 if x == y else 0.0

    neg = (
        dl(i, r) * dl(al, la) * dl(j, be) * dl(s, mu)
        + dl(i, r) * dl(al, la) * dl(j, mu) * dl(s, be)
        + dl(i, al) * dl(r, la) * dl(j, s) * dl(be, mu)
        + dl(i, al) * dl(r, la) * dl(j, mu) * dl(be, s)
        + dl(i, la) * dl(r, al) * dl(j, s) * dl(be, mu)
        + dl(i, la) * dl(r, al) * dl(j, be) * dl(s, mu)
    )
    pos = (
        dl(i, r) * dl(al, la) * dl(j, s) * dl(be, mu)
        + dl(i, al) * dl(r, la) * dl(j, be) * dl(s, mu)
        + dl(i, la) * dl(r, al) * dl(j, mu) * dl(s, be)
    )
    den = (d - 1) * d * (d + 2)
    return (-neg + (d + 1) * pos) / den


def q_second_moment(i: int, j: int, l: int, p: int, d: int) -> float:
    """``E[q_ij q_lp] = 2/(d(d-1)) (delta_il delta_jp - delta_ip delta_jl)``."""
    return 2.0 / (d * (d - 1)) * (float(i == l and j == p) - float(i == p and j == l))

