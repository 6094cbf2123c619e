"""Figures written next to the CLI's tables and reports.

Everything renders through the non-interactive Agg backend; each function
takes already-computed data and a path, and returns the path written.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .measures import gauss_cdf, gauss_pdf  # noqa: E402

__all__ = [
    "plot_bound_sweep",
    "plot_dbl",
    "plot_projections",
    "plot_report",
]

_GOLDEN = (math.sqrt(5) - 1.0) / 2.0
_RC = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    # fixed metadata keeps repeated renders byte-stable
    "svg.hashsalt": "projpursuit",
}


def _figure(width=5.0, height=None):
    fig, ax = plt.subplots(figsize=(width, height or width * _GOLDEN))
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_bound_sweep(rows, path, title: str = "") -> Path:
    """Probability bounds against ``eps``; invalid points drawn hollow."""
    with plt.rc_context(_RC):
        fig, ax = _figure()
        eps = np.array([r["eps"] for r in rows])
        for key, label, color in (("testfcn", "single test function", "C0"), ("main", "d_BL", "C3")):
            val = np.array([max(r[f"{key}_prob"], 1e-300) for r in rows])
            ok = np.array([bool(r[f"{key}_valid"]) for r in rows])
            ax.semilogy(eps, val, "-", color=color, lw=1, label=label)
            ax.semilogy(eps[ok], val[ok], "o", color=color, ms=3)
            ax.semilogy(eps[~ok], val[~ok], "o", mfc="none", color=color, ms=3)
        ax.axhline(1.0, color="0.6", lw=0.6, ls=":")
        ax.set_xlabel(r"$\epsilon$")
        ax.set_ylabel("probability bound (clamped at 1)")
        ax.set_title(title or "bounds over the sweep (filled = precondition met)")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_dbl(mu, sigma: float, est, path) -> Path:
    """Empirical and Gaussian distribution functions with the LP optimiser."""
    with plt.rc_context(_RC):
        fig, ax = _figure(6.0)
        atoms = mu.atoms
        lo = min(atoms[0], -4 * sigma)
        hi = max(atoms[-1], 4 * sigma)
        x = np.linspace(lo, hi, 800)
        ax.step(atoms, np.arange(1, atoms.size + 1) / atoms.size, where="post", lw=1, label="empirical")
        ax.plot(x, gauss_cdf(x, sigma), lw=1, label=rf"$N(0, {sigma:.3g}^2)$")
        ax.set_xlabel("x")
        ax.set_ylabel("distribution function")
        ax2 = ax.twinx()
        f = est.argmax_fn
        ax2.plot(x, f(x), color="C3", lw=0.8, ls="--", label="optimal f")
        ax2.set_ylabel("f(x)")
        ax2.spines["right"].set_visible(True)
        ax.set_title(f"d_BL in [{est.lower:.5f}, {est.upper:.5f}]")
        h1, l1 = ax.get_legend_handles_labels()
        h2, l2 = ax2.get_legend_handles_labels()
        ax.legend(h1 + h2, l1 + l2, frameon=False, loc="upper left")
        return _save(fig, path)


def plot_projections(proj: np.ndarray, sigma: float, path) -> Path:
    """Histograms of several projected samples over the Gaussian density."""
    with plt.rc_context(_RC):
        fig, ax = _figure()
        lim = max(4 * sigma, float(np.max(np.abs(proj))))
        bins = np.linspace(-lim, lim, 61)
        for row in proj[:6]:
            ax.hist(row, bins=bins, density=True, histtype="step", lw=0.8)
        x = np.linspace(-lim, lim, 400)
        ax.plot(x, gauss_pdf(x, sigma), color="k", lw=1.2, label=rf"$N(0, {sigma:.3g}^2)$")
        ax.set_xlabel(r"$\langle\theta, x_i\rangle$")
        ax.set_ylabel("density")
        ax.legend(frameon=False)
        return _save(fig, path)


def _plot_checks(ax, checks):
    names, z = [], []
    for c in checks:
        se = c.get("se")
        if c.get("kind") == "identity" and se:
            names.append(c["name"])
            z.append((c["estimate"] - c["reference"]) / se)
    y = np.arange(len(z))
    ax.barh(y, z, color=["C3" if abs(v) > 4 else "C0" for v in z])
    for s in (-4, 4):
        ax.axvline(s, color="0.5", lw=0.6, ls="--")
    ax.set_yticks(y)
    ax.set_yticklabels(names, fontsize=6)
    ax.set_xlabel("(estimate - reference) / SE")


def plot_report(report: dict, path) -> Path:
    """One summary figure per experiment report (as produced by ``MCReport.as_dict``)."""
    exp = report["experiment"]
    checks = report["checks"]
    with plt.rc_context(_RC):
        if exp == "haar_moment_check":
            fig, ax = _figure(6.0, 0.18 * len(checks) + 1.2)
            _plot_checks(ax, checks)
        elif exp == "exchangeable_pair_probe":
            fig, (ax, bx) = plt.subplots(1, 2, figsize=(8, 3))
            per = report["details"]["per_eps"]
            e = np.array([p["eps"] for p in per])
            r = np.array([p["slope_ratio"] for p in per])
            se = np.array([p["slope_ratio_se"] for p in per])
            ax.errorbar(e, r, yerr=4 * se, fmt="o", ms=3, capsize=2, label="estimate (4 SE)")
            ee = np.geomspace(e.min(), e.max(), 50)
            ax.plot(ee, 1 + ee**2 / (1 + np.sqrt(1 - ee**2)) ** 2, lw=0.8, label=r"$1 - 2\delta/\epsilon^2$")
            ax.axhline(1, color="0.6", lw=0.6, ls=":")
            ax.set_xscale("log")
            ax.set_xlabel(r"$\epsilon$")
            ax.set_ylabel(r"slope / $(-\epsilon^2/d)$")
            ax.legend(frameon=False)
            q = np.array([p["quadratic_ratio"] for p in per])
            qse = np.array([p["quadratic_minus_target_se"] for p in per])
            bx.errorbar(e, q, yerr=4 * qse, fmt="o", ms=3, capsize=2)
            bx.axhline(per[0]["one_plus_ebar"], color="C3", lw=0.8, label=r"$1 + \bar E$")
            bx.set_xscale("log")
            bx.set_xlabel(r"$\epsilon$")
            bx.set_ylabel("quadratic ratio")
            bx.legend(frameon=False)
        elif exp == "concentration_check":
            fig, ax = _figure()
            curve = report["details"]["tail_curve"]
            t = [c["t"] for c in curve]
            ax.semilogy(t, [max(c["estimate"], 1e-7) for c in curve], "o-", ms=3, lw=0.8, label="empirical")
            ax.semilogy(t, [c["ci_high"] for c in curve], "v", ms=3, color="C0", alpha=0.6, label="99% upper")
            ax.semilogy(t, [c["bound"] for c in curve], "-", lw=1, color="C3", label="bound")
            ax.set_xlabel("t")
            ax.set_ylabel(r"$P(|F - M_F| > t)$")
            ax.legend(frameon=False)
        elif exp == "waiting_time_sim":
            fig, ax = _figure()
            wt = np.array(report["details"]["waiting_times"])
            mx = int(report["config"]["max_trials"])
            ax.hist(np.where(wt > 0, wt, mx + 1), bins=np.arange(0.5, mx + 2.5), rwidth=0.8)
            ax.set_xlabel(f"directions tried ({mx + 1} = censored)")
            ax.set_ylabel("repetitions")
        else:
            fig, ax = _figure()
            est = [c["estimate"] for c in checks]
            ref = [c["reference"] for c in checks]
            hi = [c["ci_high"] if c["ci_high"] is not None else c["estimate"] for c in checks]
            y = np.arange(len(checks))
            ax.barh(y - 0.2, ref, height=0.4, color="0.7", label="bound")
            ax.barh(y + 0.2, est, height=0.4, color="C0", label="estimate")
            ax.errorbar(hi, y + 0.2, fmt="|", color="k", ms=6, label="99% upper")
            ax.set_yticks(y)
            ax.set_yticklabels([c["name"] for c in checks], fontsize=6)
            ax.legend(frameon=False, fontsize=6)
        fig.suptitle(f"{exp}: {report['verdict']}", fontsize=9)
        return _save(fig, path)
