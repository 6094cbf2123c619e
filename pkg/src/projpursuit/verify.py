"""Monte Carlo suites that test the checkable identities and bounds.

Every suite draws its randomness from fixed-size blocks, block ``b`` using
substream ``RngStream(seed, suite_id).child(b)``.  Blocks may run on any
number of threads; results are concatenated in block order before any
reduction, so reports are bit-identical for every ``threads`` setting.

Verdict rules
-------------
upper-bound checks (probabilities, gaps)
    ``violation`` iff the 99% interval lies wholly above the bound,
    ``inconclusive`` when the bound is vacuous (``>= 1``).
identity checks (moments, symmetries)
    ``violation`` iff the estimate is more than 4 standard errors away.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta, norm

from . import SUITE_VERSION
from .blmetric import GridSpec, dbl_grid_lp
from .bounds import annealed_tv_bound, thm_main_bound, thm_testfcn_bound, waiting_time_lower
from .dataset import ConditionSummary, Dataset, compute_conditions
from .measures import (
    EmpiricalMeasure,
    GaussianSpec,
    PiecewiseLinearFn,
    builtin_test_functions,
    gaussian_expectation,
    registry_function,
)
from .randsphere import (
    RngStream,
    haar_fourth_moment,
    haar_second_moment,
    q_matrix,
    q_second_moment,
    rotation_eps,
    sample_haar,
    sample_sphere,
)

__all__ = [
    "MCReport",
    "VerifyError",
    "clopper_pearson",
    "mean_ci",
    "tail_prob_testfcn",
    "tail_prob_dbl",
    "concentration_check",
    "haar_moment_check",
    "exchangeable_pair_probe",
    "annealed_check",
    "waiting_time_sim",
    "SUITES",
]

SCHEMA = "pg-report-v1"
LEVEL = 0.99
N_SE = 4.0
CONSISTENT, VIOLATION, INCONCLUSIVE = "consistent", "violation", "inconclusive"

# one root substream per experiment so suites never share random numbers
_STREAM = {
    "testfcn": 11,
    "dbl": 12,
    "concentration": 13,
    "haar": 14,
    "exchangeable": 15,
    "annealed": 16,
    "waiting": 17,
}


class VerifyError(ValueError):
    """Experiment requested outside its precondition."""


# -- statistics -----------------------------------------------------------------

def clopper_pearson(k: int, n: int, level: float = LEVEL) -> tuple[float, float]:
    """Exact binomial interval for ``k`` successes in ``n`` trials."""
    if n == 0:
        return 0.0, 1.0
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def mean_ci(x, level: float = LEVEL) -> tuple[float, float, float, float]:
    """Mean, standard error and normal-theory interval of a sample."""
    x = np.asarray(x, dtype=float)
    m = float(np.mean(x)) if x.size else 0.0
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.inf
    z = float(norm.ppf(0.5 + level / 2))
    return m, se, m - z * se, m + z * se


def _upper_check(name, estimate, ci_low, ci_high, bound, **extra) -> dict:
    if bound >= 1.0:
        verdict = INCONCLUSIVE
    elif ci_low > bound:
        verdict = VIOLATION
    else:
        verdict = CONSISTENT
    return {"name": name, "kind": "upper", "estimate": estimate, "ci_low": ci_low,
            "ci_high": ci_high, "reference": bound, "verdict": verdict, **extra}


def _identity_check(name, estimate, se, reference, **extra) -> dict:
    ok = abs(estimate - reference) <= N_SE * se
    return {"name": name, "kind": "identity", "estimate": estimate, "se": se,
            "ci_low": estimate - N_SE * se, "ci_high": estimate + N_SE * se,
            "reference": reference, "verdict": CONSISTENT if ok else VIOLATION, **extra}


def _overall(checks) -> str:
    verdicts = [c["verdict"] for c in checks]
    if VIOLATION in verdicts:
        return VIOLATION
    if verdicts and all(v == INCONCLUSIVE for v in verdicts):
        return INCONCLUSIVE
    return CONSISTENT


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


@dataclass(eq=False)
class MCReport:
    experiment: str
    trials: int
    estimate: float
    ci_low: float
    ci_high: float
    reference: float
    verdict: str
    seed: int
    runtime: float = 0.0
    checks: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def as_dict(self, include_runtime: bool = False) -> dict:
        out = {
            "schema": SCHEMA,
            "suite_version": SUITE_VERSION,
            "experiment": self.experiment,
            "trials": self.trials,
            "estimate": self.estimate,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "reference": self.reference,
            "verdict": self.verdict,
            "seed": self.seed,
            "checks": self.checks,
            "config": self.config,
            "details": self.details,
        }
        if include_runtime:
            out["runtime"] = self.runtime
        return _clean(out)

    def to_json(self, include_runtime: bool = False) -> str:
        """Canonical JSON; wall-clock time is left out unless asked for, so
        reruns with the same seed are byte-identical."""
        return json.dumps(self.as_dict(include_runtime), indent=2, sort_keys=True) + "\n"


# -- block scheduling -----------------------------------------------------------

def _blocks(total: int, size: int):
    return [(b, min(size, total - b * size)) for b in range((total + size - 1) // size)]


def _map_blocks(stream: RngStream, total: int, size: int, fn, threads: int = 1) -> list:
    """``fn(generator, count, block_index)`` over fixed blocks, results in block order."""
    plan = _blocks(total, size)

    def run(item):
        b, count = item
        return fn(stream.child(b).generator(), count, b)

    if threads <= 1 or len(plan) <= 1:
        return [run(it) for it in plan]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, plan))


def _functional(ds: Dataset, thetas: np.ndarray, fns, chunk_elems: int = 1 << 22) -> np.ndarray:
    """``F_f(theta) = (1/n) sum_i f(<theta, x_i>)`` for each direction and function."""
    out = np.empty((thetas.shape[0], len(fns)))
    rows = max(1, chunk_elems // ds.n)
    for s in range(0, thetas.shape[0], rows):
        proj = thetas[s : s + rows] @ ds.points.T
        for j, f in enumerate(fns):
            out[s : s + rows, j] = np.mean(f(proj), axis=1)
    return out


def _sigma(cond: ConditionSummary) -> float:
    return math.sqrt(cond.sigma2)


def _resolve_fn(f) -> PiecewiseLinearFn:
    f = registry_function(f) if isinstance(f, str) else f
    if f.bl_norm > 1.0 + 1e-12:
        raise VerifyError(f"test function {f.name!r} has ||f||_BL = {f.bl_norm:g} > 1")
    return f


def _base_config(ds: Dataset, cond: ConditionSummary, **kw) -> dict:
    return {"dataset": ds.label, "n": ds.n, "d": ds.d, "sigma2": cond.sigma2,
            "A": cond.a_const, "B": cond.b_const, **kw}


# -- suites -----------------------------------------------------------------------

def tail_prob_testfcn(ds: Dataset, f, eps: float, trials: int, seed: int, *, threads: int = 1,
                      block: int = 1024, allow_invalid: bool = False,
                      cond: ConditionSummary | None = None) -> MCReport:
    """Fraction of directions with ``|int f dmu_theta - E f(sigma Z)| > eps``."""
    t0 = time.perf_counter()
    f = _resolve_fn(f)
    cond = cond or compute_conditions(ds)
    bound = thm_testfcn_bound(ds.d, cond.a_const, cond.b_const, eps)
    if not bound.valid and not allow_invalid:
        raise VerifyError(f"eps = {eps:g} is below the validity threshold {max(bound.thresholds.values()):g}")
    ef = gaussian_expectation(f, GaussianSpec(_sigma(cond)))

    def work(gen, k, _b):
        th = sample_sphere(ds.d, gen, size=k)
        return _functional(ds, th, [f])[:, 0]

    vals = np.concatenate(_map_blocks(RngStream(seed, _STREAM["testfcn"]), trials, block, work, threads)) \
        if trials else np.zeros(0)
    dev = np.abs(vals - ef)
    k = int(np.count_nonzero(dev > eps))
    lo, hi = clopper_pearson(k, trials)
    est = k / trials if trials else 0.0
    check = _upper_check("exceedance", est, lo, hi, bound.prob, count=k, bound_valid=bound.valid)
    if not bound.valid:
        # outside the precondition the inequality makes no claim
        check["verdict"] = INCONCLUSIVE
    return MCReport(
        experiment="tail_prob_testfcn", trials=trials, estimate=est, ci_low=lo, ci_high=hi,
        reference=bound.prob, verdict=check["verdict"], seed=seed, runtime=time.perf_counter() - t0,
        checks=[check],
        config=_base_config(ds, cond, function=f.name, eps=eps, block=block, allow_invalid=allow_invalid),
        details={"gaussian_expectation": ef, "max_deviation": float(dev.max()) if trials else 0.0,
                 "mean_deviation": float(dev.mean()) if trials else 0.0, "bound": bound.as_dict()},
    )


def tail_prob_dbl(ds: Dataset, eps: float, trials: int, seed: int, *, grid_m: int = 4096,
                  threads: int = 1, block: int = 32, allow_invalid: bool = False,
                  cond: ConditionSummary | None = None) -> MCReport:
    """Certified exceedance ``d_BL(mu_theta, N(0, sigma^2)) > eps``.

    A direction counts as an exceedance only when the bracket's lower end is
    above ``eps``; directions whose upper end exceeds ``eps`` are reported
    as possible exceedances but never enter the verdict.
    """
    t0 = time.perf_counter()
    cond = cond or compute_conditions(ds)
    bound = thm_main_bound(ds.d, cond.a_const, cond.b_const, eps)
    if not bound.valid and not allow_invalid:
        raise VerifyError(f"eps = {eps:g} is outside the main bound's validity range")
    g = GaussianSpec(_sigma(cond))

    def work(gen, k, _b):
        th = sample_sphere(ds.d, gen, size=k)
        out = np.empty((k, 2))
        for i in range(k):
            mu = EmpiricalMeasure(ds.points @ th[i])
            est = dbl_grid_lp(mu, g, GridSpec.default(g.sigma, eps, mu.atoms, m=grid_m))
            out[i] = est.lower, est.upper
        return out

    res = np.concatenate(_map_blocks(RngStream(seed, _STREAM["dbl"]), trials, block, work, threads)) \
        if trials else np.zeros((0, 2))
    certain = int(np.count_nonzero(res[:, 0] > eps))
    possible = int(np.count_nonzero(res[:, 1] > eps))
    lo, hi = clopper_pearson(certain, trials)
    plo, phi = clopper_pearson(possible, trials)
    est = certain / trials if trials else 0.0
    check = _upper_check("certain_exceedance", est, lo, hi, bound.prob, count=certain, bound_valid=bound.valid)
    if not bound.valid:
        check["verdict"] = INCONCLUSIVE
    return MCReport(
        experiment="tail_prob_dbl", trials=trials, estimate=est, ci_low=lo, ci_high=hi,
        reference=bound.prob, verdict=check["verdict"], seed=seed, runtime=time.perf_counter() - t0,
        checks=[check],
        config=_base_config(ds, cond, eps=eps, grid_m=grid_m, block=block, allow_invalid=allow_invalid),
        details={
            "possible_exceedance": {"count": possible, "estimate": possible / trials if trials else 0.0,
                                    "ci_low": plo, "ci_high": phi},
            "lower_quantiles": np.quantile(res[:, 0], [0.0, 0.5, 1.0]).tolist() if trials else [],
            "upper_quantiles": np.quantile(res[:, 1], [0.0, 0.5, 1.0]).tolist() if trials else [],
            "max_width": float(np.max(res[:, 1] - res[:, 0])) if trials else 0.0,
            "bound": bound.as_dict(),
        },
    )


def concentration_check(ds: Dataset, f, trials: int, seed: int, *, t_grid=None, pairs: int = 1000,
                        threads: int = 1, block: int = 1024,
                        cond: ConditionSummary | None = None) -> MCReport:
    """Concentration of ``F(theta) = int f dmu_theta`` about its median.

    Checks the tail ``P(|F - M_F| > t) <= sqrt(pi/2) exp(-(d-1) t^2 / (2B))``
    on a grid of ``t``, the mean-median gap ``<= pi sqrt(B) / (2 sqrt(d-1))``
    and the Lipschitz bound ``|F(theta) - F(theta')| <= sqrt(B) |theta - theta'|``.
    """
    t0 = time.perf_counter()
    f = _resolve_fn(f)
    cond = cond or compute_conditions(ds)
    d, b = ds.d, cond.b_const
    scale = math.sqrt(b / (d - 1))
    if t_grid is None:
        t_grid = [scale * k for k in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)]
    t_grid = [float(t) for t in t_grid]

    def work(gen, k, _b):
        th = sample_sphere(d, gen, size=k)
        return _functional(ds, th, [f])[:, 0]

    stream = RngStream(seed, _STREAM["concentration"])
    vals = np.concatenate(_map_blocks(stream, trials, block, work, threads))
    med = float(np.median(vals))
    checks = []
    curve = []
    for t in t_grid:
        k = int(np.count_nonzero(np.abs(vals - med) > t))
        lo, hi = clopper_pearson(k, trials)
        ref = math.sqrt(math.pi / 2) * math.exp(-(d - 1) * t * t / (2 * b))
        chk = _upper_check(f"levy_tail[t={t:.6g}]", k / trials, lo, hi, ref, t=t, count=k)
        checks.append(chk)
        curve.append({"t": t, "estimate": k / trials, "ci_high": hi, "bound": ref})

    # mean-median gap: SE of the mean plus the order-statistic spread of the median
    mean, se_mean, _, _ = mean_ci(vals)
    srt = np.sort(vals)
    z = float(norm.ppf(0.5 + LEVEL / 2))
    half = z * math.sqrt(trials) / 2
    i_lo = max(0, int(math.floor(trials / 2 - half)) - 1)
    i_hi = min(trials - 1, int(math.ceil(trials / 2 + half)))
    se_med = (srt[i_hi] - srt[i_lo]) / (2 * z)
    se_gap = math.hypot(se_mean, se_med)
    gap = abs(mean - med)
    gap_bound = math.pi * math.sqrt(b) / (2 * math.sqrt(d - 1))
    checks.append({
        "name": "mean_median_gap", "kind": "upper", "estimate": gap, "se": se_gap,
        "ci_low": max(0.0, gap - N_SE * se_gap), "ci_high": gap + N_SE * se_gap, "reference": gap_bound,
        "verdict": VIOLATION if gap - N_SE * se_gap > gap_bound else CONSISTENT,
    })

    # Lipschitz ratios over pairs at three separations plus independent pairs
    gen = stream.child(1 << 40).generator()
    npairs = int(pairs)
    th = sample_sphere(d, gen, size=npairs) if npairs else np.zeros((0, d))
    step = np.array([1e-3, 1e-2, 1e-1, np.inf])[np.arange(npairs) % 4]
    other = sample_sphere(d, gen, size=npairs) if npairs else np.zeros((0, d))
    near = th + step[:, None] * gen.standard_normal((npairs, d)) / math.sqrt(d) if npairs else th
    far = ~np.isfinite(step)
    near[far] = other[far]
    near /= np.linalg.norm(near, axis=1)[:, None]
    fv = _functional(ds, np.vstack([th, near]), [f])[:, 0]
    dist = np.linalg.norm(th - near, axis=1)
    ok = dist > 0
    ratios = np.abs(fv[:npairs] - fv[npairs:])[ok] / dist[ok]
    max_ratio = float(ratios.max()) if ratios.size else 0.0
    lip_bound = math.sqrt(b)
    checks.append({
        "name": "lipschitz_ratio", "kind": "envelope", "estimate": max_ratio, "ci_low": max_ratio,
        "ci_high": max_ratio, "reference": lip_bound, "pairs": int(ratios.size),
        "verdict": VIOLATION if max_ratio > lip_bound + 1e-9 else CONSISTENT,
    })

    verdict = _overall(checks)
    gap_chk = checks[-2]
    return MCReport(
        experiment="concentration_check", trials=trials, estimate=gap, ci_low=gap_chk["ci_low"],
        ci_high=gap_chk["ci_high"], reference=gap_bound, verdict=verdict, seed=seed,
        runtime=time.perf_counter() - t0, checks=checks,
        config=_base_config(ds, cond, function=f.name, t_grid=t_grid, pairs=npairs, block=block),
        details={"median": med, "mean": mean, "tail_curve": curve, "lipschitz_bound": lip_bound},
    )


def _haar_panel(d: int):
    """Index patterns (1-based) tested for a given dimension."""
    seconds = [(1, 1), (1, 2), (2, 1), (d, d)]
    fourth = [
        ((1, 1), (1, 1), (1, 1), (1, 1)),
        ((1, 1), (1, 1), (2, 2), (2, 2)),
        ((1, 1), (1, 1), (1, 2), (1, 2)),
        ((1, 1), (1, 1), (2, 1), (2, 1)),
        ((1, 1), (1, 2), (2, 1), (2, 2)),
        ((1, 1), (2, 2), (1, 2), (2, 1)),
        ((1, 1), (1, 1), (1, 1), (2, 2)),
        ((1, 2), (1, 2), (2, 3), (2, 3)),
        ((1, 1), (2, 2), (3, 3), (3, 3)),
        ((1, 2), (2, 1), (1, 2), (2, 1)),
        ((1, 3), (1, 3), (2, 3), (2, 3)),
    ]
    if d >= 4:
        fourth.append(((1, 2), (1, 2), (3, 4), (3, 4)))
    qs = [(1, 2, 1, 2), (1, 2, 2, 1), (1, 3, 1, 3), (1, 2, 1, 3), (2, 3, 2, 3)]
    if d >= 4:
        qs += [(1, 2, 3, 4), (3, 4, 3, 4)]
    return seconds, fourth, qs


def haar_moment_check(d: int, trials: int, seed: int, *, threads: int = 1, block: int = 4096) -> MCReport:
    """Monte Carlo second and fourth moments of Haar entries and of ``Q``."""
    t0 = time.perf_counter()
    if d < 3:
        raise VerifyError("the moment panel needs d >= 3")
    seconds, fourth, qs = _haar_panel(d)

    def work(gen, k, _b):
        u = sample_haar(d, gen, size=k)
        q = q_matrix(u)
        cols = [u[:, i - 1, j - 1] ** 2 for i, j in seconds]
        for pat in fourth:
            prod = np.ones(k)
            for i, j in pat:
                prod = prod * u[:, i - 1, j - 1]
            cols.append(prod)
        for i, j, l, p in qs:
            cols.append(q[:, i - 1, j - 1] * q[:, l - 1, p - 1])
        orth = float(np.max(np.abs(np.einsum("kji,kjl->kil", u, u) - np.eye(d))))
        return np.stack(cols, axis=1), orth

    parts = _map_blocks(RngStream(seed, _STREAM["haar"]), trials, block, work, threads)
    vals = np.concatenate([p[0] for p in parts])
    orth_err = max(p[1] for p in parts)
    checks = []
    col = 0
    for i, j in seconds:
        m, se, _, _ = mean_ci(vals[:, col])
        checks.append(_identity_check(f"E[u{i}{j}^2]", m, se, haar_second_moment(d)))
        col += 1
    for pat in fourth:
        m, se, _, _ = mean_ci(vals[:, col])
        name = "E[" + " ".join(f"u{i}{j}" for i, j in pat) + "]"
        checks.append(_identity_check(name, m, se, haar_fourth_moment(pat, d)))
        col += 1
    for i, j, l, p in qs:
        m, se, _, _ = mean_ci(vals[:, col])
        checks.append(_identity_check(f"E[q{i}{j} q{l}{p}]", m, se, q_second_moment(i, j, l, p, d)))
        col += 1
    checks.append({"name": "orthogonality", "kind": "envelope", "estimate": orth_err, "ci_low": orth_err,
                   "ci_high": orth_err, "reference": 1e-10,
                   "verdict": CONSISTENT if orth_err <= 1e-10 else VIOLATION})
    worst = max(checks[:-1], key=lambda c: abs(c["estimate"] - c["reference"]) / c["se"])
    return MCReport(
        experiment="haar_moment_check", trials=trials, estimate=worst["estimate"], ci_low=worst["ci_low"],
        ci_high=worst["ci_high"], reference=worst["reference"], verdict=_overall(checks), seed=seed,
        runtime=time.perf_counter() - t0, checks=checks, config={"d": d, "block": block},
        details={"worst_check": worst["name"],
                 "worst_z": abs(worst["estimate"] - worst["reference"]) / worst["se"]},
    )


def exchangeable_pair_probe(ds: Dataset, eps_list, trials: int, seed: int, *, threads: int = 1,
                            block: int = 8192, cond: ConditionSummary | None = None) -> MCReport:
    """Finite-``eps`` probe of the rotation coupling ``W_eps = <U A_eps U^T theta, x_I>``.

    Each trial uses ``U`` and its antithetic partner (first two columns
    swapped, which reverses the rotation and flips ``Q``); the pair average
    cancels the first-order ``eps <Q theta, x_I>`` noise exactly.  The same
    draws are reused for every ``eps``.

    Reported per ``eps``: the regression slope of ``W_eps - W`` on ``W``
    relative to ``-eps^2/d`` (exactly ``1 - 2 delta / eps^2`` in
    expectation), and ``(d / (2 eps^2 sigma^2)) E (W_eps - W)^2`` against
    ``1 + E-bar``.
    """
    t0 = time.perf_counter()
    cond = cond or compute_conditions(ds)
    eps_list = [float(e) for e in eps_list]
    d, n = ds.d, ds.n
    s2 = cond.sigma2
    rots = [rotation_eps(e, d) for e in eps_list]
    gens = []
    for r in rots:
        # A_eps - I with the cancellation-free diagonal -eps^2/2 + delta
        g = r.a_eps - np.eye(d)
        g[0, 0] = g[1, 1] = -0.5 * r.eps**2 + r.delta
        gens.append(g)

    def work(gen, k, b):
        th = sample_sphere(d, gen, size=k)
        idx = gen.integers(0, n, size=k)
        u = sample_haar(d, gen, size=k)
        x = ds.points[idx]
        w = np.einsum("kj,kj->k", th, x)
        ut = np.einsum("kji,kj->ki", u, th)
        ux = np.einsum("kji,kj->ki", u, x)
        ut_s = ut[:, [1, 0, *range(2, d)]]
        ux_s = ux[:, [1, 0, *range(2, d)]]
        out = {"w": w, "sq": np.einsum("kj,kj->k", x, x)}
        for e, g in zip(eps_list, gens):
            # <U G U^T theta, x> = (U^T x)^T G (U^T theta); the swap realises the partner
            d1 = np.einsum("ki,ij,kj->k", ux, g, ut)
            d2 = np.einsum("ki,ij,kj->k", ux_s, g, ut_s)
            out[e] = (d1, d2)
        if b == 0:
            # algebraic decomposition (-eps^2/2 + delta) <K K^T theta, x> + eps <Q theta, x>
            m = min(k, 256)
            q = q_matrix(u[:m])
            kk = np.einsum("kia,kja->kij", u[:m, :, :2], u[:m, :, :2])
            errs = []
            for e, r in zip(eps_list, rots):
                lin = np.einsum("ki,kij,kj->k", x[:m], kk, th[:m])
                quad = np.einsum("ki,kij,kj->k", x[:m], q, th[:m])
                pred = (-0.5 * e * e + r.delta) * lin + e * quad
                errs.append(float(np.max(np.abs(out[e][0][:m] - pred))))
            out["identity_err"] = max(errs)
        return out

    parts = _map_blocks(RngStream(seed, _STREAM["exchangeable"]), trials, block, work, threads)
    w = np.concatenate([p["w"] for p in parts])
    sq = np.concatenate([p["sq"] for p in parts])
    ebar_t = (sq / s2 - d + 1 - w * w / s2) / (d - 1)
    w2 = w * w
    checks = []
    per_eps = []
    for e, r in zip(eps_list, rots):
        d1 = np.concatenate([p[e][0] for p in parts])
        d2 = np.concatenate([p[e][1] for p in parts])
        y = 0.5 * (d1 + d2) * w
        slope = float(np.sum(y) / np.sum(w2))
        lead = -e * e / d
        ratio = slope / lead
        resid = y - slope * w2
        se_ratio = float(np.std(resid, ddof=1) / math.sqrt(trials) / np.mean(w2) / abs(lead))
        exact = 1.0 - 2.0 * r.delta / (e * e)
        checks.append(_identity_check(f"slope_ratio_exact[eps={e:g}]", ratio, se_ratio, exact))
        quad_t = d / (2 * e * e * s2) * 0.5 * (d1 * d1 + d2 * d2)
        q_mean, q_se, _, _ = mean_ci(quad_t)
        diff_mean, diff_se, _, _ = mean_ci(quad_t - (1.0 + ebar_t))
        target = 1.0 + float(np.mean(ebar_t))
        checks.append(_identity_check(f"quadratic_ratio[eps={e:g}]", q_mean, diff_se, target,
                                      paired_difference=diff_mean))
        wn = w + 0.5 * (d1 + d2)
        sym_a = w2 - 0.5 * ((w + d1) ** 2 + (w + d2) ** 2)
        sym_b = 0.5 * ((w**3) * (w + d1) - w * (w + d1) ** 3 + (w**3) * (w + d2) - w * (w + d2) ** 3)
        for name, arr in (("E[W^2 - W_eps^2]", sym_a), ("E[W^3 W_eps - W W_eps^3]", sym_b)):
            m, se, _, _ = mean_ci(arr)
            checks.append(_identity_check(f"{name}[eps={e:g}]", m, se, 0.0))
        per_eps.append({"eps": e, "slope": slope, "slope_ratio": ratio, "slope_ratio_se": se_ratio,
                        "slope_ratio_exact": exact, "delta": r.delta, "quadratic_ratio": q_mean,
                        "quadratic_se": q_se, "one_plus_ebar": target, "quadratic_minus_target": diff_mean,
                        "quadratic_minus_target_se": diff_se, "mean_w_eps": float(np.mean(wn))})
    m, se, _, _ = mean_ci(w)
    checks.append(_identity_check("E[W]", m, se, 0.0))
    ident_err = float(parts[0]["identity_err"]) if parts else 0.0
    checks.append({"name": "difference_identity", "kind": "envelope", "estimate": ident_err,
                   "ci_low": ident_err, "ci_high": ident_err, "reference": 1e-10,
                   "verdict": CONSISTENT if ident_err <= 1e-10 else VIOLATION})

    # trend: |ratio - 1| shrinks at every step towards smaller eps (a reporting convention)
    order = sorted(per_eps, key=lambda p: -p["eps"])
    dist = [abs(p["slope_ratio"] - 1.0) for p in order]
    monotone = all(b < a for a, b in zip(dist, dist[1:]))
    checks.append({"name": "slope_trend", "kind": "trend", "estimate": float(dist[-1]) if dist else 0.0,
                   "ci_low": None, "ci_high": None, "reference": 0.0,
                   "verdict": CONSISTENT if monotone else INCONCLUSIVE, "distances": dist})
    smallest = order[-1] if order else {"slope_ratio": 0.0, "slope_ratio_se": 0.0}
    z = float(norm.ppf(0.5 + LEVEL / 2))
    return MCReport(
        experiment="exchangeable_pair_probe", trials=trials, estimate=smallest["slope_ratio"],
        ci_low=smallest["slope_ratio"] - z * smallest["slope_ratio_se"],
        ci_high=smallest["slope_ratio"] + z * smallest["slope_ratio_se"], reference=1.0,
        verdict=_overall(checks), seed=seed, runtime=time.perf_counter() - t0, checks=checks,
        config=_base_config(ds, cond, eps_list=eps_list, block=block),
        details={"per_eps": order, "slope_monotone": monotone, "ebar": float(np.mean(ebar_t))},
    )


def annealed_check(ds: Dataset, trials: int, seed: int, *, functions=None, threads: int = 1,
                   block: int = 1024, cond: ConditionSummary | None = None) -> MCReport:
    """``|E F_f(theta) - E f(sigma Z)| <= (A + 2)/(d - 1)`` for each test function."""
    t0 = time.perf_counter()
    cond = cond or compute_conditions(ds)
    fns = [_resolve_fn(f) for f in (functions or builtin_test_functions())]
    g = GaussianSpec(_sigma(cond))
    bound = annealed_tv_bound(ds.d, cond.a_const)

    def work(gen, k, _b):
        return _functional(ds, sample_sphere(ds.d, gen, size=k), fns)

    vals = np.concatenate(_map_blocks(RngStream(seed, _STREAM["annealed"]), trials, block, work, threads))
    checks = []
    for j, f in enumerate(fns):
        m, se, _, _ = mean_ci(vals[:, j])
        ef = gaussian_expectation(f, g)
        diff = abs(m - ef)
        if bound >= 1.0:
            verdict = INCONCLUSIVE
        else:
            verdict = VIOLATION if diff - N_SE * se > bound else CONSISTENT
        checks.append({"name": f"annealed[{f.name}]", "kind": "upper", "estimate": diff, "se": se,
                       "ci_low": max(0.0, diff - N_SE * se), "ci_high": diff + N_SE * se,
                       "reference": bound, "verdict": verdict, "mc_mean": m, "gaussian_expectation": ef})
    worst = max(checks, key=lambda c: c["estimate"] - N_SE * c["se"])
    return MCReport(
        experiment="annealed_check", trials=trials, estimate=worst["estimate"], ci_low=worst["ci_low"],
        ci_high=worst["ci_high"], reference=bound, verdict=_overall(checks), seed=seed,
        runtime=time.perf_counter() - t0, checks=checks,
        config=_base_config(ds, cond, functions=[f.name for f in fns], block=block),
        details={"worst_function": worst["name"]},
    )


def waiting_time_sim(ds: Dataset, eps: float, max_trials: int, seed: int, *, repetitions: int = 1,
                     grid_m: int = 4096, threads: int = 1,
                     cond: ConditionSummary | None = None) -> MCReport:
    """Directions tried until the certified ``d_BL`` lower bound exceeds ``eps``.

    Repetition ``r`` draws its directions from its own substream.  Runs that
    reach ``max_trials`` without detection are censored at ``max_trials``,
    so the reported mean is a lower estimate of ``E T``.  The checkable
    consequence of ``P(detect per direction) <= p`` is
    ``P(T <= max_trials) <= max_trials p``.
    """
    t0 = time.perf_counter()
    cond = cond or compute_conditions(ds)
    g = GaussianSpec(_sigma(cond))
    lower = waiting_time_lower(ds.d, cond.b_const, eps, a_const=cond.a_const, require_valid=False)
    p = lower.constants["p"]

    def work(gen, k, _b):
        out = np.empty((k, 2))
        for r in range(k):
            t_hit, best = 0, 0.0
            for j in range(1, max_trials + 1):
                mu = EmpiricalMeasure(ds.points @ sample_sphere(ds.d, gen).coords)
                est = dbl_grid_lp(mu, g, GridSpec.default(g.sigma, eps, mu.atoms, m=grid_m))
                best = max(best, est.lower)
                if est.lower > eps:
                    t_hit = j
                    break
            out[r] = t_hit, best
        return out

    res = np.concatenate(_map_blocks(RngStream(seed, _STREAM["waiting"]), repetitions, 1, work, threads)) \
        if repetitions else np.zeros((0, 2))
    hits = res[:, 0] > 0
    censored_t = np.where(hits, res[:, 0], float(max_trials))
    k = int(np.count_nonzero(hits))
    lo, hi = clopper_pearson(k, repetitions)
    rate_bound = min(1.0, max_trials * p)
    check = _upper_check("detect_within_budget", k / repetitions if repetitions else 0.0, lo, hi,
                         rate_bound, count=k, bound_valid=lower.valid)
    if max_trials == 0 or repetitions == 0 or not lower.valid:
        check["verdict"] = INCONCLUSIVE
    mean_t = float(np.mean(censored_t)) if repetitions else 0.0
    if repetitions > 1:
        _, _, mlo, mhi = mean_ci(censored_t)
    else:
        mlo = mhi = mean_t
    return MCReport(
        experiment="waiting_time_sim", trials=repetitions, estimate=mean_t, ci_low=min(mlo, mean_t),
        ci_high=max(mhi, mean_t), reference=lower.value, verdict=check["verdict"], seed=seed,
        runtime=time.perf_counter() - t0, checks=[check],
        config=_base_config(ds, cond, eps=eps, max_trials=max_trials, repetitions=repetitions, grid_m=grid_m),
        details={"detections": k, "detect_rate": k / repetitions if repetitions else 0.0,
                 "censored": int(repetitions - k), "waiting_times": res[:, 0].astype(int).tolist(),
                 "best_lower": res[:, 1].tolist(), "lower_bound": lower.as_dict()},
    )


SUITES = {
    "testfcn": tail_prob_testfcn,
    "dbl": tail_prob_dbl,
    "concentration": concentration_check,
    "haar": haar_moment_check,
    "exchangeable": exchangeable_pair_probe,
    "annealed": annealed_check,
    "waiting": waiting_time_sim,
}
