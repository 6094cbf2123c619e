"""Closed-form tail bounds for random one-dimensional projections.

Every calculator returns a :class:`BoundReport` whether or not ``eps`` meets
the bound's precondition; ``valid`` records which.  Probabilities are
clamped to 1 in ``prob``; ``value`` keeps the raw formula.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

__all__ = [
    "BoundReport",
    "BoundError",
    "C1",
    "C2",
    "thm_testfcn_bound",
    "thm_main_bound",
    "testfcn_threshold",
    "main_threshold",
    "annealed_tv_bound",
    "remark_scales",
    "waiting_time_lower",
]

C1 = 48.0 * math.sqrt(math.pi)
C2 = 1.0 / (9.0 * 2.0**16)
_SQRT_HALF_PI = math.sqrt(math.pi / 2.0)


class BoundError(ValueError):
    """Inputs outside a bound's domain."""


@dataclass(frozen=True)
class BoundReport:
    kind: str
    eps: float
    value: float
    valid: bool
    thresholds: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    @property
    def prob(self) -> float:
        return min(1.0, self.value)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["prob"] = self.prob
        return out

    def to_json(self) -> str:
        # strict JSON: non-finite numbers become strings ("inf")
        out = {k: _finite_or_str(v) for k, v in self.as_dict().items()}
        return json.dumps(out, indent=2, sort_keys=True, allow_nan=False)


def _finite_or_str(v):
    if isinstance(v, dict):
        return {k: _finite_or_str(x) for k, x in v.items()}
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _check(d, a_const, b_const, eps=None):
    if d < 2:
        raise BoundError(f"d must be >= 2, got {d}")
    if a_const < 0:
        raise BoundError(f"A must be >= 0, got {a_const}")
    if not b_const > 0:
        raise BoundError(f"B must be positive, got {b_const}")
    if eps is not None and not eps > 0:
        raise BoundError(f"eps must be positive, got {eps}")


def testfcn_threshold(d, a_const, b_const) -> dict:
    return {
        "concentration": 2.0 * math.pi * math.sqrt(b_const) / math.sqrt(d - 1),
        "annealed": 2.0 * (a_const + 2.0) / (d - 1),
    }


def main_threshold(d, a_const, b_const) -> dict:
    return {
        "concentration": (3.0 * 2.0**6 * math.pi * b_const / math.sqrt(d - 1)) ** 0.4,
        "annealed": 2.0 * (a_const + 2.0) / (d - 1),
        "ceiling": b_const,
    }


def thm_testfcn_bound(d, a_const, b_const, eps) -> BoundReport:
    """``P(|int f dmu_theta - E f(sigma Z)| > eps) <= sqrt(pi/2) exp(-(d-1) eps^2 / (32 B))``
    for any fixed ``||f||_BL <= 1``."""
    _check(d, a_const, b_const, eps)
    thr = testfcn_threshold(d, a_const, b_const)
    value = _SQRT_HALF_PI * math.exp(-(d - 1) * eps * eps / (2.0**5 * b_const))
    return BoundReport(
        kind="testfcn",
        eps=eps,
        value=value,
        valid=eps > max(thr.values()),
        thresholds=thr,
        constants={"sqrt_pi_over_2": _SQRT_HALF_PI},
        inputs={"d": d, "A": a_const, "B": b_const},
    )


def thm_main_bound(d, a_const, b_const, eps) -> BoundReport:
    """``P(d_BL(mu_theta, N(0, sigma^2)) > eps) <= C1 sqrt(B) eps^{-3/2} exp(-C2 (d-1) eps^5 / B^2)``."""
    _check(d, a_const, b_const, eps)
    thr = main_threshold(d, a_const, b_const)
    value = C1 * math.sqrt(b_const) / eps**1.5 * math.exp(-C2 * (d - 1) * eps**5 / b_const**2)
    lower = max(thr["concentration"], thr["annealed"])
    return BoundReport(
        kind="main",
        eps=eps,
        value=value,
        valid=b_const >= eps >= lower,
        thresholds=thr,
        constants={"c1": C1, "c2": C2},
        inputs={"d": d, "A": a_const, "B": b_const},
    )


def annealed_tv_bound(d, a_const) -> float:
    """Total-variation distance from ``<theta, x_I>`` to ``sigma Z``: at most ``(A+2)/(d-1)``."""
    if d < 2:
        raise BoundError(f"d must be >= 2, got {d}")
    if a_const < 0:
        raise BoundError(f"A must be >= 0, got {a_const}")
    return (a_const + 2.0) / (d - 1)


def remark_scales(d, b_const, c, kind: str, a_const: float = 0.0) -> BoundReport:
    """Evaluate the bounds at their natural scale ``eps(C)``.

    ``testfcn``: ``eps = C 4 sqrt(2B) / sqrt(d-1)`` and the bound is ``sqrt(pi/2) e^{-C^2}``.

    ``main``: ``eps^5 = C 9 2^16 B^2 log(d-1) / (d-1)``; ``value`` is the
    simplified form ``C'' B (d-1)^{-(C - 3/10)}`` with ``C'' = 48 sqrt(pi) C^{-3/10}``,
    ``constants["theorem_value"]`` the theorem evaluated at that ``eps`` and
    ``constants["exact_value"]`` its closed form
    ``48 sqrt(pi) B^{-1/10} (9 2^16 C log(d-1))^{-3/10} (d-1)^{3/10 - C}``.
    """
    if not c > 0:
        raise BoundError(f"C must be positive, got {c}")
    if d < 2:
        raise BoundError(f"d must be >= 2, got {d}")
    if not b_const > 0:
        raise BoundError(f"B must be positive, got {b_const}")
    inputs = {"d": d, "A": a_const, "B": b_const, "C": c}
    if kind == "testfcn":
        c_prime = c * 4.0 * math.sqrt(2.0 * b_const)
        eps = c_prime / math.sqrt(d - 1)
        value = _SQRT_HALF_PI * math.exp(-c * c)
        thm = thm_testfcn_bound(d, a_const, b_const, eps)
        return BoundReport(
            kind="remark3",
            eps=eps,
            value=value,
            valid=thm.valid,
            thresholds=thm.thresholds,
            constants={"C": c, "C_prime": c_prime, "theorem_value": thm.value},
            inputs=inputs,
        )
    if kind == "main":
        if c <= 0.3:
            raise BoundError(f"the main-theorem scale needs C > 3/10, got {c}")
        if d < 3:
            raise BoundError("the main-theorem scale needs d >= 3 (log(d-1) > 0)")
        log_d = math.log(d - 1)
        c_prime = 9.0 * 2.0**16 * c * b_const**2
        eps = (c_prime * log_d / (d - 1)) ** 0.2
        c_dprime = C1 * c ** (-0.3)
        value = c_dprime * b_const / (d - 1) ** (c - 0.3)
        exact = C1 * b_const ** (-0.1) * (9.0 * 2.0**16 * c * log_d) ** (-0.3) * (d - 1) ** (0.3 - c)
        thm = thm_main_bound(d, a_const, b_const, eps)
        return BoundReport(
            kind="remark4",
            eps=eps,
            value=value,
            valid=thm.valid,
            thresholds=thm.thresholds,
            constants={
                "C": c,
                "C_prime": c_prime,
                "C_double_prime": c_dprime,
                "theorem_value": thm.value,
                "exact_value": exact,
            },
            inputs=inputs,
        )
    raise BoundError(f"kind must be 'testfcn' or 'main', got {kind!r}")


def waiting_time_lower(d, b_const, eps, a_const: float = 0.0, require_valid: bool = True) -> BoundReport:
    """Lower bound ``E T_eps >= 1/p`` with ``p = min(1, main bound)``.

    ``T_eps`` is geometric-dominated: ``P(T > m) >= (1 - p)^m`` and
    ``E T = sum_m P(T > m) >= 1/p``.
    """
    thm = thm_main_bound(d, a_const, b_const, eps)
    if require_valid and not thm.valid:
        raise BoundError(
            f"eps = {eps:g} violates the main bound's precondition "
            f"{max(thm.thresholds['concentration'], thm.thresholds['annealed']):g} <= eps <= B = {b_const:g}"
        )
    p = thm.prob
    return BoundReport(
        kind="waiting",
        eps=eps,
        # p underflows to 0 far inside the regime; the bound is then unbounded
        value=1.0 / p if p > 0 else math.inf,
        valid=thm.valid,
        thresholds=thm.thresholds,
        constants={"c1": C1, "c2": C2, "p": p},
        inputs={"d": d, "A": a_const, "B": b_const},
    )
