"""Command-line entry point.

Subcommands:
    solve-kernel   solve the scenario's kernels and write a .kgrid file
    simulate       run a scenario, write trace/event CSVs, summary, figures
    dwell-bound    print the dwell-time coefficients and tau
    check-params   print epsilon constants, kappa minima, and feasibility
    sweep          run a scenario grid over one parameter, one summary row each

Exit codes: 0 success, 1 validation problem, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from .errors import NumericalError, RdetcError, ValidationError
from .kernels import write_kgrid
from .scenario import (Scenario, override_scenario, parse_scenario,
                       prepare_run, run_prepared, summarize)
from .trigger import (dwell_integral, dwell_time_bound, select_gain_params,
                      select_trigger_params)

SUMMARY_FIELDS = [
    "scenario", "mode", "steps", "norm_u_start", "norm_u_end", "norm_ratio",
    "rate_norm_u", "rate_omega", "events", "min_dwell", "mean_dwell",
    "update_fraction", "tau", "min_dwell_over_tau", "m_max",
    "V_nonincreasing_at_events", "assumption1_margin", "iota_estimate", "wp",
    "kappa1", "kappa2", "kappa3", "lambda_d", "r0",
    "eps1", "eps2", "eps3", "eps4", "sigma_star", "sigma_vacuous",
]


def _write_summary_csv(path, rows, extra_fields=()):
    fields = list(extra_fields) + SUMMARY_FIELDS
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            out = {}
            for k in fields:
                v = row.get(k, "")
                out[k] = repr(float(v)) if isinstance(v, float) else v
            w.writerow(out)


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve_kernel(args):
    scenario = parse_scenario(args.scenario)
    prep = prepare_run(scenario)
    if prep.provided is None:
        raise ValidationError("scenario has no kernel section to solve")
    outdir = _ensure_outdir(args.out)
    direct_path = os.path.join(outdir, f"{scenario.name}_direct.kgrid")
    inverse_path = os.path.join(outdir, f"{scenario.name}_inverse.kgrid")
    write_kgrid(direct_path, prep.provided.direct, q=scenario.q)
    write_kgrid(inverse_path, prep.provided.inverse, q=scenario.q)
    from .kernels import kernel_residual
    rr = kernel_residual(prep.provided.direct, scenario.profile, scenario.eps)
    print(f"wrote {direct_path}")
    print(f"wrote {inverse_path}")
    print(f"residuals: interior={rr.interior_sup:.3e} "
          f"diagonal={rr.diagonal_sup:.3e} neumann={rr.neumann_sup:.3e}")
    print(f"sup|k| = {prep.provided.direct.sup():.6g}  wp = {prep.provided.gain.wp!r}")
    if not args.no_figures:
        from .figures import render_kernel_figures
        for p in render_kernel_figures(prep.provided.direct, prep.provided.gain, outdir):
            print(f"wrote {p}")
    return 0


def cmd_simulate(args):
    scenario = parse_scenario(args.scenario)
    mode = args.mode or scenario.mode
    stride = args.stride or scenario.stride
    prep = prepare_run(scenario, mode)
    trace = run_prepared(prep, mode)
    outdir = _ensure_outdir(args.out)
    out_trace = trace.strided(stride)
    trace_path = os.path.join(outdir, "trace.csv")
    events_path = os.path.join(outdir, "events.csv")
    summary_path = os.path.join(outdir, "summary.csv")
    out_trace.write_csv(trace_path)
    out_trace.write_events_csv(events_path)
    row = summarize(prep, trace, mode)
    _write_summary_csv(summary_path, [row])
    for p in (trace_path, events_path, summary_path):
        print(f"wrote {p}")
    print(f"norm ratio ||u(T)||/||u(0)|| = {row['norm_ratio']:.6g}")
    if row["events"]:
        print(f"events = {row['events']}  min dwell = {row['min_dwell']:.6g}"
              f"  tau = {row['tau']:.6g}")
    if not args.no_figures:
        from .figures import render_trace_figures
        tau = prep.dwell.tau if prep.dwell else None
        for p in render_trace_figures(out_trace, outdir, tau=tau):
            print(f"wrote {p}")
    return 0


def cmd_dwell_bound(args):
    if args.n1 is not None or args.n2 is not None or args.n3 is not None:
        if None in (args.n1, args.n2, args.n3):
            raise ValidationError("--n1, --n2, --n3 must be given together")
        tau = dwell_integral(args.n1, args.n2, args.n3)
        print(f"n1 = {args.n1!r}  n2 = {args.n2!r}  n3 = {args.n3!r}")
        print(f"tau = {tau!r}")
        return 0
    if args.scenario:
        scenario = parse_scenario(args.scenario)
        prep = prepare_run(scenario)
        if prep.dwell is None:
            raise ValidationError("scenario resolves no trigger parameters")
        d = prep.dwell
    else:
        if None in (args.eps1, args.xi, args.lambda_d, args.eta):
            raise ValidationError(
                "need --scenario, or --eps1/--xi/--lambda-d/--eta, or the n-seam")
        d = dwell_time_bound(args.eps1, args.xi, args.lambda_d, args.eta)
    print(f"n1 = {d.n1!r}  n2 = {d.n2!r}  n3 = {d.n3!r}")
    print(f"tau = {d.tau!r}")
    return 0


def cmd_check_params(args):
    scenario = parse_scenario(args.scenario)
    prep = prepare_run(scenario)
    if prep.provided is None or prep.epsc is None:
        raise ValidationError("scenario has no kernel to derive constants from")
    e = prep.epsc
    th = prep.theory
    print(f"eps1 = {e.eps1!r}")
    print(f"eps2 = {e.eps2!r}")
    print(f"eps3 = {e.eps3!r}")
    print(f"eps4 = {e.eps4!r}")
    kmin = select_trigger_params(e, scenario.xi)
    print(f"kappa minima (2*eps/xi): {kmin[0]!r} {kmin[1]!r} {kmin[2]!r}")
    if scenario.kappa != "auto":
        for i, (have, need) in enumerate(zip(scenario.kappa, kmin), start=1):
            verdict = "PASS" if have >= need else "FAIL"
            print(f"kappa{i} = {have!r} vs minimum {need!r}: {verdict}")
        kappa = scenario.kappa
    else:
        kappa = kmin
        print("kappa: auto (minima above)")
    try:
        r0, delta0, lam_min = select_gain_params(
            kappa, th.q0, th.q1, prep.provided.gain.wp, scenario.eps,
            prep.provided.iota_estimate)
        print(f"r0 = {r0!r}  delta0 = {delta0!r}  lambda_d_min = {lam_min!r}")
        if scenario.lambda_d != "auto":
            verdict = "PASS" if scenario.lambda_d >= lam_min else "FAIL"
            print(f"lambda_d = {scenario.lambda_d!r} vs minimum {lam_min!r}: {verdict}")
    except NumericalError as exc:
        print(f"gain selection infeasible: {exc}")
    from .kernels import check_assumption1
    a1 = check_assumption1(scenario.profile, scenario.q, scenario.eps)
    print(f"assumption-1 margin = {a1.margin!r} ({'PASS' if a1.passed else 'FAIL, advisory'})")
    print(f"sigma_star = {th.sigma_star!r} (vacuous bound)" if th.vacuous
          else f"sigma_star = {th.sigma_star!r}")
    print(f"log M = {th.log_M!r}  log Upsilon = {th.log_Upsilon!r}")
    print(f"q0 = {th.q0!r}  q1 = {th.q1!r}  delta_star = {th.delta_star!r}")
    return 0


def _sweep_one(base: Scenario, param: str, value, index: int, outdir: str,
               stride: int, figures: bool):
    scenario = override_scenario(base, param, value)
    prep = prepare_run(scenario)
    trace = run_prepared(prep)
    subdir = _ensure_outdir(os.path.join(outdir, f"run_{index:03d}"))
    out_trace = trace.strided(stride)
    out_trace.write_csv(os.path.join(subdir, "trace.csv"))
    out_trace.write_events_csv(os.path.join(subdir, "events.csv"))
    row = summarize(prep, trace, scenario.mode)
    row["_sweep_index"] = index
    row["_sweep_value"] = value
    if figures:
        from .figures import render_trace_figures
        render_trace_figures(out_trace, subdir,
                             tau=prep.dwell.tau if prep.dwell else None)
    return row


def cmd_sweep(args):
    base = parse_scenario(args.scenario)
    try:
        values = [float(v) for v in args.values.split(",") if v != ""]
    except ValueError as exc:
        raise ValidationError(f"--values must be comma-separated numbers: {exc}")
    if not values:
        raise ValidationError("--values is empty")
    outdir = _ensure_outdir(args.out)
    stride = args.stride or base.stride
    workers = max(1, args.workers)
    rows = [None] * len(values)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {
            pool.submit(_sweep_one, base, args.param, v, i, outdir, stride,
                        not args.no_figures): i
            for i, v in enumerate(values)
        }
        for fut, i in futures.items():
            rows[i] = fut.result()
    summary_path = os.path.join(outdir, "sweep_summary.csv")
    _write_summary_csv(summary_path, rows, extra_fields=("_sweep_index", "_sweep_value"))
    print(f"wrote {summary_path}")
    if not args.no_figures:
        from .figures import render_sweep_figure
        for p in render_sweep_figure(rows, args.param, outdir):
            print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="rdetc", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sk = sub.add_parser("solve-kernel", help="solve kernels, write .kgrid files")
    sk.add_argument("--scenario", required=True)
    sk.add_argument("--out", default="out")
    sk.add_argument("--no-figures", action="store_true")
    sk.set_defaults(func=cmd_solve_kernel)

    sim = sub.add_parser("simulate", help="run a scenario, write CSVs and figures")
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--out", default="out")
    sim.add_argument("--stride", type=int, default=None)
    sim.add_argument("--mode", choices=("event", "continuous", "open-loop"),
                     default=None)
    sim.add_argument("--no-figures", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    dw = sub.add_parser("dwell-bound", help="print dwell-time coefficients and tau")
    dw.add_argument("--scenario")
    dw.add_argument("--eps1", type=float)
    dw.add_argument("--xi", type=float)
    dw.add_argument("--lambda-d", dest="lambda_d", type=float)
    dw.add_argument("--eta", type=float)
    dw.add_argument("--n1", type=float)
    dw.add_argument("--n2", type=float)
    dw.add_argument("--n3", type=float)
    dw.set_defaults(func=cmd_dwell_bound)

    cp = sub.add_parser("check-params", help="epsilon constants and feasibility")
    cp.add_argument("--scenario", required=True)
    cp.set_defaults(func=cmd_check_params)

    sw = sub.add_parser("sweep", help="run a scenario grid over one parameter")
    sw.add_argument("--scenario", required=True)
    sw.add_argument("--param", required=True,
                    help="dotted key into the scenario, e.g. kernel.iota")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--out", default="out")
    sw.add_argument("--stride", type=int, default=None)
    sw.add_argument("--workers", type=int, default=4)
    sw.add_argument("--no-figures", action="store_true")
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except RdetcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
