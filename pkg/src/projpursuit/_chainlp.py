"""Exact solver for the discrete bounded-Lipschitz linear program.

For support points ``t_1 < ... < t_K`` carrying signed weights ``w_k`` the
program is::

    maximise   sum_k w_k f_k
    subject to |f_k| <= a,  |f_{k+1} - f_k| <= b (t_{k+1} - t_k),  a + b <= 1.

For a fixed split ``(a, b)`` the feasible set is a chain, and the value
function ``V_k(x) = max { sum_{j<=k} w_j f_j : f_k = x }`` is concave and
piecewise linear in ``x``.  It is propagated left to right by three
operations on its derivative (a non-increasing step function on ``[-a, a]``):
windowed maximum over ``|x - y| <= h`` (pieces left of the peak shift left
by ``h``, pieces right of it shift right), addition of ``w_k x`` (all slopes
shift) and clipping to the box.  Breakpoints live in two deques, one each
side of the peak, each with a lazy offset, so a full pass is close to
linear in ``K``.  The optimiser is recovered by clipping each stage's peak
into the window around its successor.

The split value ``g(lam) = value(a=lam, b=1-lam)`` is concave in ``lam``;
the outer search is golden section, and concavity of ``g`` turns the
evaluated points into a certified upper bound on ``max g``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["chain_dp", "solve_bl_lp", "BLSolution"]


@njit(cache=True, nogil=True)
def _chain_dp(t, w, a, b, f_out):
    K = t.size
    cap = 2 * K + 8
    lp = np.empty(cap)
    ld = np.empty(cap)
    rp = np.empty(cap)
    rd = np.empty(cap)
    lh = 0
    ln = 0
    rh = 0
    rn = 0
    off_l = 0.0
    off_r = 0.0
    peaks = np.empty(K)

    s_l = w[0]
    d_le = w[0]
    for k in range(K):
        if k > 0:
            h = b * (t[k] - t[k - 1])
            if ln == 0 and d_le <= 0.0:
                # non-increasing from -a: a flat run of length h opens at -a
                if s_l < 0.0:
                    rh = (rh - 1) % cap
                    rp[rh] = -a - off_r
                    rd[rh] = -s_l
                    rn += 1
                s_l = 0.0
                d_le = 0.0
                off_r += h
            else:
                if rn > 0:
                    pos = rp[rh] + off_r
                    rd[rh] = rd[rh] - d_le
                else:
                    pos = a
                idx = (lh + ln) % cap
                lp[idx] = pos - off_l
                ld[idx] = d_le
                ln += 1
                d_le = 0.0
                off_l -= h
                off_r += h
            while ln > 0 and lp[lh] + off_l <= -a:
                s_l -= ld[lh]
                lh = (lh + 1) % cap
                ln -= 1
            while rn > 0 and rp[(rh + rn - 1) % cap] + off_r >= a:
                rn -= 1
            s_l += w[k]
            d_le += w[k]
        # restore: left deque holds exactly the breakpoints left of the peak
        while ln > 0 and d_le <= 0.0:
            idx = (lh + ln - 1) % cap
            pos = lp[idx] + off_l
            dec = ld[idx]
            ln -= 1
            rh = (rh - 1) % cap
            rp[rh] = pos - off_r
            rd[rh] = dec
            rn += 1
            d_le += dec
        while rn > 0 and d_le - rd[rh] > 0.0:
            pos = rp[rh] + off_r
            dec = rd[rh]
            rh = (rh + 1) % cap
            rn -= 1
            idx = (lh + ln) % cap
            lp[idx] = pos - off_l
            ld[idx] = dec
            ln += 1
            d_le -= dec
        if ln == 0 and d_le <= 0.0:
            peaks[k] = -a
        elif rn > 0:
            peaks[k] = min(max(rp[rh] + off_r, -a), a)
        else:
            peaks[k] = a

    f_out[K - 1] = peaks[K - 1]
    for k in range(K - 2, -1, -1):
        h = b * (t[k + 1] - t[k])
        x = peaks[k]
        lo = f_out[k + 1] - h
        hi = f_out[k + 1] + h
        if x < lo:
            x = lo
        elif x > hi:
            x = hi
        if x < -a:
            x = -a
        elif x > a:
            x = a
        f_out[k] = x
    total = 0.0
    for k in range(K):
        total += w[k] * f_out[k]
    return total


def chain_dp(t, w, a: float, b: float):
    """Optimal ``f`` and value for a fixed ``(a, b)`` split."""
    t = np.ascontiguousarray(t, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    f = np.empty_like(t)
    if a <= 0.0:
        f[:] = 0.0
        return 0.0, f
    val = _chain_dp(t, w, float(a), float(max(b, 0.0)), f)
    return float(val), f


class BLSolution:
    """Outcome of :func:`solve_bl_lp`."""

    __slots__ = ("value", "upper", "f", "a", "b", "evaluations")

    def __init__(self, value, upper, f, a, b, evaluations):
        self.value = value
        self.upper = upper
        self.f = f
        self.a = a
        self.b = b
        self.evaluations = evaluations


def _concave_upper(xs: np.ndarray, ys: np.ndarray) -> float:
    """Upper bound on the maximum of a concave function sampled at ``xs``.

    On each gap the function lies below the secant of the two samples to its
    left (extended rightwards) and below that of the two samples to its right.
    """
    order = np.argsort(xs)
    x = xs[order]
    y = ys[order]
    m = x.size
    best = float(np.max(y))
    for i in range(m - 1):
        x0, x1 = x[i], x[i + 1]
        if x1 <= x0:
            continue
        lines = []
        if i >= 1 and x[i] > x[i - 1]:
            s = (y[i] - y[i - 1]) / (x[i] - x[i - 1])
            lines.append((s, y[i] - s * x[i]))
        if i + 2 < m and x[i + 2] > x[i + 1]:
            s = (y[i + 2] - y[i + 1]) / (x[i + 2] - x[i + 1])
            lines.append((s, y[i + 1] - s * x[i + 1]))
        if not lines:
            return math.inf
        cands = [x0, x1]
        if len(lines) == 2 and lines[0][0] != lines[1][0]:
            xi = (lines[1][1] - lines[0][1]) / (lines[0][0] - lines[1][0])
            if x0 < xi < x1:
                cands.append(xi)
        ub = max(min(s * c + q for s, q in lines) for c in cands)
        best = max(best, ub)
    return best


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def solve_bl_lp(t, w, tol: float = 1e-13, max_iter: int = 200) -> BLSolution:
    """Maximise ``sum w_k f_k`` over the discrete unit BL ball on support ``t``.

    Returns the best attained value with its optimiser and split, and a
    certified upper bound ``upper`` on the optimum (concavity of the split
    value plus a floating-point allowance).
    """
    t = np.ascontiguousarray(t, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if t.size == 0:
        return BLSolution(0.0, 0.0, np.zeros(0), 0.0, 1.0, 0)
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("support points must be strictly increasing")

    cache: dict[float, tuple[float, np.ndarray]] = {}

    def g(lam):
        if lam not in cache:
            cache[lam] = chain_dp(t, w, lam, 1.0 - lam)
        return cache[lam][0]

    lo, hi = 0.0, 1.0
    g(lo)
    g(hi)
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    g1, g2 = g(x1), g(x2)
    it = 0
    while hi - lo > tol and it < max_iter:
        if g1 >= g2:
            hi, x2, g2 = x2, x1, g1
            x1 = hi - _INVPHI * (hi - lo)
            g1 = g(x1)
        else:
            lo, x1, g1 = x1, x2, g2
            x2 = lo + _INVPHI * (hi - lo)
            g2 = g(x2)
        it += 1

    lams = np.array(list(cache.keys()))
    vals = np.array([cache[k][0] for k in lams])
    ibest = int(np.argmax(vals))
    lam = float(lams[ibest])
    value, f = cache[lam]
    slack = 8 * t.size * np.finfo(float).eps * float(np.sum(np.abs(w)) + 1.0)
    upper = _concave_upper(lams, vals) + slack
    return BLSolution(value, max(upper, value), f, lam, 1.0 - lam, len(cache))
