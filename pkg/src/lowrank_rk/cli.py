"""Command-line entry point.

Subcommands: sweep (full experiment grid), run (single method/rank/h),
diagnose (tangential projection error along a PRK2 path), example1 (closed
form 3x3 check), tableaus (order condition residuals). Defaults may come from
an INI file via --config; explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys

import numpy as np

from .bench import (
    DiagnoseReport,
    ExperimentConfig,
    diagnose_tangent,
    emit_csv,
    example1_check,
    run_experiment,
)
from .integrators import order_conditions, tableau
from .svgplot import render_convergence_svg

_DEFAULTS = {
    "sweep": {
        "problem": "lyapunov", "T": 0.1, "methods": "rand_rk1,rand_rk2,rand_rk4",
        "ranks": "8,16", "hs": "1e-1:1e-3:log8", "trials": 10, "seed": 42,
        "out": ".", "workers": 1,
    },
    "run": {
        "problem": "lyapunov", "T": 0.1, "method": "rand_rk2", "rank": 16,
        "h": 1e-2, "trials": 3, "seed": 42, "workers": 1,
    },
    "diagnose": {
        "problem": "lyapunov", "T": 1.0, "rank": 10, "h": 5e-3, "seed": 42,
    },
}


def parse_step_sizes(spec: str) -> tuple[float, ...]:
    """Either a comma list ('1e-1,1e-2') or 'start:stop:logN' for N log-spaced points."""
    spec = spec.strip()
    if ":" in spec:
        start_s, stop_s, n_s = spec.split(":")
        if not n_s.startswith("log"):
            raise ValueError(f"bad step size range {spec!r}, expected start:stop:logN")
        start, stop, n = float(start_s), float(stop_s), int(n_s[3:])
        if n < 2 or start <= 0 or stop <= 0:
            raise ValueError(f"bad step size range {spec!r}")
        hs = np.geomspace(start, stop, n)
    else:
        hs = np.array([float(tok) for tok in spec.split(",") if tok.strip()])
    if hs.size == 0:
        raise ValueError("no step sizes given")
    return tuple(sorted((float(h) for h in hs), reverse=True))


def _problem_params(args) -> dict:
    params = {}
    mapping = {
        "toy": (), "lyapunov": ("n", "alpha"), "nls": ("n", "alpha"),
        "imag_schrodinger": ("n",), "allen_cahn": ("n", "epsilon"),
    }
    if args.problem not in mapping:
        raise SystemExit(f"unknown problem {args.problem!r} (choose from {sorted(mapping)})")
    for key in mapping[args.problem]:
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    return params


def _apply_config(args, sub: str) -> None:
    """Fill unset options from [sub] in the INI file, then from hard defaults."""
    file_vals = {}
    if args.config:
        cp = configparser.ConfigParser()
        if not cp.read(args.config):
            raise SystemExit(f"cannot read config file {args.config!r}")
        if cp.has_section(sub):
            file_vals = dict(cp.items(sub))
    for key, hard in _DEFAULTS.get(sub, {}).items():
        if getattr(args, key, None) is not None:
            continue
        if key in file_vals:
            cast = type(hard)
            setattr(args, key, cast(file_vals[key]))
        else:
            setattr(args, key, hard)
    # extra problem knobs have no hard default; still honor the file
    for key in ("n", "alpha", "epsilon"):
        if getattr(args, key, None) is None and key in file_vals:
            setattr(args, key, float(file_vals[key]) if key != "n" else int(file_vals[key]))


def _experiment_config(args, methods, ranks, hs, trials) -> ExperimentConfig:
    return ExperimentConfig(
        problem=args.problem,
        problem_params=_problem_params(args),
        T=args.T,
        methods=methods,
        ranks=ranks,
        step_sizes=hs,
        trials=trials,
        seed=args.seed,
        ref_cache=args.ref_cache,
        workers=getattr(args, "workers", 1) or 1,
    )


def _print_records(records) -> None:
    print(f"{'method':<16} {'rank':>4} {'h':>12} {'trial':>5} {'error_fro':>14} {'time_ms':>10}")
    for r in records:
        err = f"{r.error_fro:.6e}" if math.isfinite(r.error_fro) else "failed"
        print(f"{r.method:<16} {r.rank:>4} {r.h:>12.6g} {r.trial:>5} {err:>14} {r.time_ms:>10.1f}")
        if r.failure:
            print(f"    failure: {r.failure}")


def _cmd_sweep(args) -> int:
    cfg = _experiment_config(
        args,
        tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        tuple(int(r) for r in str(args.ranks).split(",") if str(r).strip()),
        parse_step_sizes(args.hs),
        args.trials,
    )
    records, summary = run_experiment(cfg)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, f"{cfg.experiment_id}.csv")
    svg_path = os.path.join(args.out, f"{cfg.experiment_id}.svg")
    emit_csv(records, csv_path)
    try:
        render_convergence_svg(summary, f"{cfg.experiment_id} (T={cfg.T:g})", svg_path)
    except ValueError:
        svg_path = None  # every run failed; CSV still carries the reasons
    n_fail = sum(1 for r in records if r.failure is not None)
    print(f"{len(records)} runs ({n_fail} failed)  ->  {csv_path}" + (f", {svg_path}" if svg_path else ""))
    print(f"{'method':<16} {'rank':>4} {'slope':>7} {'plateau':>12}")
    for method, rank in summary.points:
        s = summary.slope(method, rank)
        print(f"{method:<16} {rank:>4} {s:>7.2f} {summary.plateau(method, rank):>12.3e}")
    return 0


def _cmd_run(args) -> int:
    cfg = _experiment_config(args, (args.method,), (args.rank,), (args.h,), args.trials)
    records, _ = run_experiment(cfg)
    _print_records(records)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, f"{cfg.experiment_id}.csv")
        emit_csv(records, path)
        print(f"wrote {path}")
    return 0


def _cmd_diagnose(args) -> int:
    args.problem_params = _problem_params(args)
    rep: DiagnoseReport = diagnose_tangent(
        args.problem, args.problem_params, rank=args.rank, h=args.h, T=args.T, seed=args.seed
    )
    print(f"tangential projection error over {len(rep.series)} steps "
          f"(rank={args.rank}, h={args.h:g}, T={args.T:g}):")
    print(f"  mean = {rep.mean:.6e}")
    print(f"  max  = {rep.max:.6e}")
    if len(rep.series) > 6:
        show = rep.series[:3] + [None] + rep.series[-3:]
    else:
        show = list(rep.series)
    for item in show:
        if item is None:
            print("  ...")
        else:
            step, t, v = item
            print(f"  step {step:>6}  t={t:.6g}  err={v:.6e}")
    return 0


def _cmd_example1(args) -> int:
    rep = example1_check()
    def tag(ok):
        return "ok" if ok else "FAIL"
    print(f"rank-2 truncation error of flow at h=1: {rep.truncation_error:.6e} "
          f"(bound {rep.truncation_bound:.3e})  [{tag(rep.truncation_error <= rep.truncation_bound)}]")
    print(f"gap to rank-2 tangent flow at h=1:      {rep.tangent_gap:.6e} "
          f"(at least {rep.gap_bound:.3e})  [{tag(rep.tangent_gap >= rep.gap_bound)}]")
    print(f"flow at h=0 vs initial value:           {rep.zero_step_error:.6e}  "
          f"[{tag(rep.zero_step_error == 0.0)}]")
    return 0 if rep.ok else 1


def _cmd_tableaus(args) -> int:
    for name in ("rk1", "rk2", "rk4"):
        tab = tableau(name)
        print(f"{tab.name}: stages={tab.stages}")
        for label, residual in order_conditions(tab).items():
            print(f"  {label:<24} residual={residual:+.3e}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lowrank-rk", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p, with_workers=True):
        p.add_argument("--config", help="INI file; section name = subcommand")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--ref-cache", default=None,
                       help="directory for cached dense reference solutions "
                            "(env LOWRANK_RK_REF_CACHE also works)")
        p.add_argument("--problem", default=None)
        p.add_argument("--n", type=int, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--T", type=float, default=None)
        if with_workers:
            p.add_argument("--workers", type=int, default=None)

    ps = sub.add_parser("sweep", help="run a (method, rank, h, trial) grid")
    common(ps)
    ps.add_argument("--methods", default=None, help="comma list, e.g. rand_rk2,prk2,modified_rk4")
    ps.add_argument("--ranks", default=None, help="comma list of ranks")
    ps.add_argument("--hs", default=None, help="comma list or start:stop:logN")
    ps.add_argument("--trials", type=int, default=None)
    ps.add_argument("--out", default=None)
    ps.set_defaults(fn=_cmd_sweep, sub="sweep")

    pr = sub.add_parser("run", help="single method/rank/h")
    common(pr)
    pr.add_argument("--method", default=None)
    pr.add_argument("--rank", type=int, default=None)
    pr.add_argument("--h", type=float, default=None)
    pr.add_argument("--trials", type=int, default=None)
    pr.add_argument("--out", default=None)
    pr.set_defaults(fn=_cmd_run, sub="run")

    pd = sub.add_parser("diagnose", help="tangential projection error along a PRK2 path")
    common(pd, with_workers=False)
    pd.add_argument("--rank", type=int, default=None)
    pd.add_argument("--h", type=float, default=None)
    pd.set_defaults(fn=_cmd_diagnose, sub="diagnose")

    pe = sub.add_parser("example1", help="closed-form 3x3 check")
    pe.set_defaults(fn=_cmd_example1, sub="example1")

    pt = sub.add_parser("tableaus", help="print order condition residuals")
    pt.set_defaults(fn=_cmd_tableaus, sub="tableaus")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "sub", None) in _DEFAULTS:
        _apply_config(args, args.sub)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
