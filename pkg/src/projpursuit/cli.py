"""Command-line interface.

Exit status: 0 success, 1 dataset error, 2 usage error or an input outside
a bound's domain, 3 at least one verification verdict was ``violation``.

JSON outputs carry a ``run_config`` block with every resolved option that
can influence results.  Execution-only options (``--threads``, ``--out``,
``--no-figures``) are left out so that reruns compare byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import SUITE_VERSION, __version__
from .blmetric import DBLError, GridSpec, dbl_grid_lp, refine_dbl
from .bounds import (
    BoundError,
    annealed_tv_bound,
    remark_scales,
    thm_main_bound,
    thm_testfcn_bound,
    waiting_time_lower,
)
from .dataset import DatasetError, compute_conditions, generate, load_csv, save_csv, KINDS
from .measures import EmpiricalMeasure, GaussianSpec, builtin_test_functions, project
from .randsphere import Direction, RngStream, sample_sphere
from . import verify as vf

EXIT_OK, EXIT_DATA, EXIT_USAGE, EXIT_VIOLATION = 0, 1, 2, 3
_EXEC_ONLY = {"threads", "out", "no_figures", "func"}

# directions drawn by ``project`` and ``dbl`` live on their own substream
_CLI_STREAM = 31

_SUITE_TRIALS = {
    "testfcn": 10_000,
    "dbl": 200,
    "concentration": 10_000,
    "haar": 100_000,
    "exchangeable": 100_000,
    "annealed": 10_000,
    "waiting": 20,
}


class UsageError(Exception):
    pass


def parse_sweep(spec: str) -> list[float]:
    """``start:stop:step``, both ends included (stop within 1e-12)."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise UsageError(f"sweep must look like start:stop:step, got {spec!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise UsageError(f"sweep values must be numbers, got {spec!r}") from None
    if not step > 0 or stop < start:
        raise UsageError(f"sweep needs step > 0 and stop >= start, got {spec!r}")
    count = int(math.floor((stop - start + 1e-12) / step))
    while count > 0 and start + count * step > stop + 1e-12:
        count -= 1
    while start + (count + 1) * step <= stop + 1e-12:
        count += 1
    vals = [start + k * step for k in range(count + 1)]
    if abs(vals[-1] - stop) <= 1e-12:
        vals[-1] = stop
    # shed representation noise such as 0.15000000000000002
    return [float(f"{v:.12g}") for v in vals]


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# -- dataset plumbing -------------------------------------------------------------

def _add_data_args(p):
    g = p.add_argument_group("dataset")
    g.add_argument("--data", help="CSV file, one point per row")
    g.add_argument("--kind", choices=KINDS, help="generate instead of reading")
    g.add_argument("--d", type=int, help="dimension for generated data")
    g.add_argument("--n", type=int, default=0, help="point count for generated data")
    g.add_argument("--data-seed", type=int, default=0, help="seed of the generator (default 0)")


def _load_dataset(args, required=True):
    if args.data:
        return load_csv(args.data)
    if args.kind:
        if args.d is None:
            raise UsageError("--kind needs --d")
        return generate(args.kind, args.d, args.n, args.data_seed)
    if required:
        raise UsageError("give --data PATH or --kind K --d D")
    return None


def _run_config(args, command: str, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in _EXEC_ONLY}
    cfg.update(extra)
    return {"command": command, "package_version": __version__, "suite_version": SUITE_VERSION, **cfg}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj) -> str:
    return json.dumps(vf._clean(obj), indent=2, sort_keys=True) + "\n"


def _csv_text(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _figures(args):
    if args.no_figures:
        return None
    from . import figures

    return figures


# -- subcommands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    ds = generate(args.kind, args.d, args.n, args.data_seed)
    save_csv(ds, args.out)
    print(f"wrote {args.out}: n={ds.n} d={ds.d} ({ds.label})", file=sys.stderr)
    return EXIT_OK


def _sweep_rows(cond, eps_values):
    rows = []
    d, a, b = cond.d, cond.a_const, cond.b_const
    annealed = annealed_tv_bound(d, a)
    for e in eps_values:
        t = thm_testfcn_bound(d, a, b, e)
        m = thm_main_bound(d, a, b, e)
        rows.append({
            "eps": e,
            "testfcn_value": t.value, "testfcn_prob": t.prob, "testfcn_valid": int(t.valid),
            "main_value": m.value, "main_prob": m.prob, "main_valid": int(m.valid),
            "waiting_lower": 1.0 / m.prob if m.prob > 0 else math.inf,
            "annealed_tv": annealed,
        })
    return rows


_SWEEP_HEADER = ["eps", "testfcn_value", "testfcn_prob", "testfcn_valid", "main_value", "main_prob",
                 "main_valid", "waiting_lower", "annealed_tv"]


def cmd_analyze(args) -> int:
    ds = _load_dataset(args)
    eps_values = parse_sweep(args.eps_sweep)
    cond = compute_conditions(ds, eig_tol=args.eig_tol)
    rows = _sweep_rows(cond, eps_values)
    d, a, b = cond.d, cond.a_const, cond.b_const
    out = _out_dir(args)
    report = {
        "run_config": _run_config(args, "analyze", eps_values=eps_values, dataset_label=ds.label),
        "conditions": cond.as_dict(),
        "thresholds": {
            "testfcn": thm_testfcn_bound(d, a, b, 1.0).thresholds,
            "main": thm_main_bound(d, a, b, 1.0).thresholds,
        },
        "annealed_tv": annealed_tv_bound(d, a),
        "sweep": rows,
    }
    (out / "analyze.json").write_text(_dump(report))
    table = _csv_text(rows, _SWEEP_HEADER)
    (out / "bounds.csv").write_text(table)
    fig = _figures(args)
    if fig:
        fig.plot_bound_sweep(rows, out / "bounds.png", title=f"{ds.label}: B={b:.4g}, A={a:.4g}")
    print(f"# sigma2={cond.sigma2!r} A={a!r} B={b!r} d={d} n={cond.n}")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_project(args) -> int:
    ds = _load_dataset(args)
    stream = RngStream(args.seed, _CLI_STREAM)
    thetas = sample_sphere(ds.d, stream.generator(), size=args.k)
    out = _out_dir(args)
    proj = thetas @ ds.points.T
    with (out / "directions.csv").open("w") as fh:
        for i, th in enumerate(thetas):
            fh.write(",".join([str(i)] + [repr(float(v)) for v in th]) + "\n")
    for i, row in enumerate(proj):
        EmpiricalMeasure(row).to_csv(out / f"proj_{i:03d}.csv")
    (out / "project.json").write_text(_dump({"run_config": _run_config(args, "project", dataset_label=ds.label)}))
    fig = _figures(args)
    if fig:
        cond = compute_conditions(ds)
        fig.plot_projections(proj, math.sqrt(cond.sigma2), out / "projections.png")
    print(f"wrote {args.k} projections to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_dbl(args) -> int:
    ds = _load_dataset(args)
    cond = compute_conditions(ds)
    if args.theta:
        coords = np.array(_float_list(args.theta))
        if coords.size != ds.d:
            raise UsageError(f"--theta has {coords.size} coordinates, data has d = {ds.d}")
        theta = Direction.from_vector(coords)
    else:
        theta = sample_sphere(ds.d, RngStream(args.seed, _CLI_STREAM))
    mu = project(ds, theta)
    g = GaussianSpec(math.sqrt(cond.sigma2))
    grid = GridSpec.default(g.sigma, args.eps, mu.atoms, m=args.m)
    est = dbl_grid_lp(mu, g, grid)
    for _ in range(args.refine):
        est = refine_dbl(mu, g, est)
    out = _out_dir(args)
    report = {
        "run_config": _run_config(args, "dbl", dataset_label=ds.label),
        "theta": theta.coords.tolist(),
        "estimate": est.as_dict(),
    }
    text = _dump(report)
    (out / "dbl.json").write_text(text)
    est.argmax_fn.to_csv(out / "argmax.csv")
    fig = _figures(args)
    if fig:
        fig.plot_dbl(mu, g.sigma, est, out / "dbl.png")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_bounds(args) -> int:
    kind = args.bound
    need = {"testfcn": ("d", "B", "eps"), "main": ("d", "B", "eps"), "annealed": ("d",),
            "remark3": ("d", "B", "C"), "remark4": ("d", "B", "C"), "waiting": ("d", "B", "eps")}[kind]
    missing = [f"--{k}" for k in need if getattr(args, k) is None]
    if missing:
        raise UsageError(f"--bound {kind} needs {' '.join(missing)}")
    d, a = args.d, args.A
    if kind == "testfcn":
        rep = thm_testfcn_bound(d, a, args.B, args.eps).as_dict()
    elif kind == "main":
        rep = thm_main_bound(d, a, args.B, args.eps).as_dict()
    elif kind == "annealed":
        rep = {"kind": "annealed", "value": annealed_tv_bound(d, a), "inputs": {"d": d, "A": a}}
    elif kind == "remark3":
        rep = remark_scales(d, args.B, args.C, "testfcn", a_const=a).as_dict()
    elif kind == "remark4":
        rep = remark_scales(d, args.B, args.C, "main", a_const=a).as_dict()
    else:
        rep = waiting_time_lower(d, args.B, args.eps, a_const=a, require_valid=not args.allow_invalid).as_dict()
    text = _dump({"run_config": _run_config(args, "bounds"), "bound": rep})
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _suite_list(name: str) -> list[str]:
    return list(vf.SUITES) if name == "all" else [name]


def _run_suite(name, args, ds, cond):
    trials = args.trials if args.trials is not None else _SUITE_TRIALS[name]
    common = {"threads": args.threads}
    if name == "haar":
        d = args.d if args.d is not None else (ds.d if ds is not None else None)
        if d is None:
            raise UsageError("haar suite needs --d or a dataset")
        return vf.haar_moment_check(d, trials, args.seed, **common)
    if ds is None:
        raise UsageError(f"suite {name!r} needs a dataset (--data or --kind)")
    allow = args.allow_invalid or args.suite == "all"
    if name == "testfcn":
        eps = args.eps
        if eps is None:
            thr = thm_testfcn_bound(ds.d, cond.a_const, cond.b_const, 1.0).thresholds
            eps = 1.05 * max(thr.values())
        return vf.tail_prob_testfcn(ds, args.f, eps, trials, args.seed, allow_invalid=allow, cond=cond, **common)
    if name == "dbl":
        eps = args.eps if args.eps is not None else cond.b_const
        return vf.tail_prob_dbl(ds, eps, trials, args.seed, grid_m=args.grid_m, allow_invalid=allow,
                                cond=cond, **common)
    if name == "concentration":
        return vf.concentration_check(ds, args.f, trials, args.seed, cond=cond, **common)
    if name == "exchangeable":
        eps_list = _float_list(args.eps_list)
        return vf.exchangeable_pair_probe(ds, eps_list, trials, args.seed, cond=cond, **common)
    if name == "annealed":
        return vf.annealed_check(ds, trials, args.seed, cond=cond, **common)
    if name == "waiting":
        eps = args.eps if args.eps is not None else cond.b_const
        return vf.waiting_time_sim(ds, eps, args.max_trials, args.seed, repetitions=trials,
                                   grid_m=args.grid_m, cond=cond, **common)
    raise UsageError(f"unknown suite {name!r}")


def _write_report(rep, args, out: Path, command: str, extra=None) -> dict:
    body = rep.as_dict()
    body["run_config"] = _run_config(args, command, **(extra or {}))
    (out / f"{rep.experiment}.json").write_text(_dump(body))
    fig = _figures(args)
    if fig:
        fig.plot_report(body, out / f"{rep.experiment}.png")
    return body


_SUMMARY_HEADER = ["experiment", "verdict", "trials", "estimate", "ci_low", "ci_high", "reference", "seed",
                   "runtime_s"]


def cmd_verify(args) -> int:
    ds = _load_dataset(args, required=False)
    cond = compute_conditions(ds) if ds is not None else None
    out = _out_dir(args)
    rows = []
    worst = EXIT_OK
    for name in _suite_list(args.suite):
        rep = _run_suite(name, args, ds, cond)
        _write_report(rep, args, out, "verify", {"suite_name": name,
                                                 "dataset_label": ds.label if ds is not None else None})
        rows.append({"experiment": rep.experiment, "verdict": rep.verdict, "trials": rep.trials,
                     "estimate": rep.estimate, "ci_low": rep.ci_low, "ci_high": rep.ci_high,
                     "reference": rep.reference, "seed": rep.seed, "runtime_s": round(rep.runtime, 3)})
        print(f"{rep.experiment}: {rep.verdict} ({rep.runtime:.1f}s)", file=sys.stderr)
        if rep.verdict == vf.VIOLATION:
            worst = EXIT_VIOLATION
    table = _csv_text(rows, _SUMMARY_HEADER)
    (out / "summary.csv").write_text(table)
    sys.stdout.write(table)
    return worst


def cmd_waittime(args) -> int:
    ds = _load_dataset(args)
    cond = compute_conditions(ds)
    t0 = time.perf_counter()
    rep = vf.waiting_time_sim(ds, args.eps, args.max_trials, args.seed, repetitions=args.repetitions,
                              grid_m=args.grid_m, threads=args.threads, cond=cond)
    out = _out_dir(args)
    body = _write_report(rep, args, out, "waittime", {"dataset_label": ds.label})
    lb = body["details"]["lower_bound"]
    print(f"# E[T] >= {lb['value']!r} (bound valid: {lb['valid']}); "
          f"censored mean {rep.estimate!r} over {rep.trials} repetitions; "
          f"{body['details']['detections']} detected ({time.perf_counter() - t0:.1f}s)")
    sys.stdout.write(_csv_text(
        [{"repetition": i, "waiting_time": t} for i, t in enumerate(body["details"]["waiting_times"])],
        ["repetition", "waiting_time"]))
    return EXIT_VIOLATION if rep.verdict == vf.VIOLATION else EXIT_OK


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="projpursuit", description="Gaussian behaviour of random projections.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({SUITE_VERSION})")
    sub = p.add_subparsers(dest="command", required=True)

    def with_exec(sp, out_default="."):
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
        sp.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    sp = sub.add_parser("gen", help="write a generated dataset as CSV")
    sp.add_argument("--kind", choices=KINDS, required=True)
    sp.add_argument("--d", type=int, required=True)
    sp.add_argument("--n", type=int, default=0)
    sp.add_argument("--data-seed", "--seed", dest="data_seed", type=int, default=0)
    sp.add_argument("--out", required=True, help="CSV path")
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("analyze", help="condition constants and bound tables over an eps sweep")
    _add_data_args(sp)
    sp.add_argument("--eps-sweep", default="0.05:1.0:0.05", help="start:stop:step, inclusive")
    sp.add_argument("--eig-tol", type=float, default=1e-10)
    with_exec(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("project", help="sample directions and write projected samples")
    _add_data_args(sp)
    sp.add_argument("--k", type=int, default=5, help="number of directions")
    sp.add_argument("--seed", type=int, required=True)
    with_exec(sp)
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("dbl", help="certified d_BL bracket for one direction")
    _add_data_args(sp)
    sp.add_argument("--theta", help="comma-separated direction (normalised); default: sampled")
    sp.add_argument("--seed", type=int, default=0, help="seed for the sampled direction")
    sp.add_argument("--eps", type=float, help="target accuracy; sets M and Delta")
    sp.add_argument("--m", type=int, default=4096, help="Gaussian quantile atoms")
    sp.add_argument("--refine", type=int, default=0, help="refinement rounds (m x4 each)")
    with_exec(sp)
    sp.set_defaults(func=cmd_dbl)

    sp = sub.add_parser("bounds", help="evaluate a single bound")
    sp.add_argument("--bound", choices=["testfcn", "main", "annealed", "remark3", "remark4", "waiting"],
                    required=True)
    sp.add_argument("--d", type=int)
    sp.add_argument("--A", type=float, default=0.0)
    sp.add_argument("--B", type=float)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--C", type=float)
    sp.add_argument("--allow-invalid", action="store_true", help="waiting: report outside the valid regime")
    sp.add_argument("--out", help="also write the JSON here")
    sp.set_defaults(func=cmd_bounds, threads=1, no_figures=True)

    sp = sub.add_parser("verify", help="run Monte Carlo verification suites")
    sp.add_argument("--suite", choices=[*vf.SUITES, "all"], required=True)
    _add_data_args(sp)
    sp.add_argument("--trials", type=int, help="trials (repetitions for the waiting suite)")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--eps", type=float)
    sp.add_argument("--eps-list", default="0.1,0.03,0.01")
    sp.add_argument("--f", default="clamp", choices=[f.name for f in builtin_test_functions()])
    sp.add_argument("--max-trials", type=int, default=10)
    sp.add_argument("--grid-m", type=int, default=4096)
    sp.add_argument("--allow-invalid", action="store_true", help="run even where the bound makes no claim")
    with_exec(sp)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("waittime", help="simulate the waiting time for a non-Gaussian direction")
    _add_data_args(sp)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--max-trials", type=int, default=100)
    sp.add_argument("--repetitions", type=int, default=20)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--grid-m", type=int, default=4096)
    with_exec(sp)
    sp.set_defaults(func=cmd_waittime)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BoundError, vf.VerifyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DBLError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
