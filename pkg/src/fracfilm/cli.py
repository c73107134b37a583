"""Command-line front end: run, verify, sweep, print-config.

Exit codes: 0 ok, 1 check failure, 2 solver failure, 3 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .analysis import (
    check_energy_estimate,
    check_entropy_dissipation,
    check_evi_entropy,
    check_moment_bound,
    check_weak_form_step,
    tau_refinement_study,
)
from .errors import FracfilmError
from .fields import cosine_bump_test_function
from .jko import run as jko_run
from .scenario import (
    KNOWN_CHECKS,
    Scenario,
    ScenarioError,
    format_scenario,
    load_run_directory,
    load_scenario,
    write_run_directory,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SOLVER_FAILED = 2
EXIT_CONFIG_ERROR = 3


def _default_test_function(sc: Scenario):
    # gentle space-time bump: curvature small enough that the weak-form
    # discretization floor stays under the absolute slack at fine tau
    r_outer = 0.45 * sc.box_length
    r_inner = 0.3 * sc.box_length
    return cosine_bump_test_function(
        dim=sc.dimension, amplitude=0.1, freq=2.0, r_inner=r_inner, r_outer=r_outer
    )


def run_checks(sc: Scenario, traj, checks):
    reports = []
    for name in checks:
        if name == "energy_estimate":
            reports.append(check_energy_estimate(traj))
        elif name == "moment_bound":
            reports.append(check_moment_bound(traj))
        elif name == "entropy_dissipation":
            reports.append(check_entropy_dissipation(traj))
        elif name == "weak_form":
            reports.append(check_weak_form_step(traj, _default_test_function(sc)))
        elif name == "evi_entropy":
            final = traj.steps[-1].density if traj.steps else traj.initial
            reports.append(check_evi_entropy(traj.initial, final))
        else:
            raise ScenarioError(f"unknown check {name!r}; known: {', '.join(KNOWN_CHECKS)}")
    return reports


def cmd_run(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    out_arg = args.out or sc.output_dir
    if not out_arg:
        print("config error: no output directory (--out flag or output.dir key)", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        u0 = sc.initial_density()
    except (ScenarioError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    traj = jko_run(u0, sc.jko_config(), sc.num_steps)
    out = Path(out_arg)
    write_run_directory(out, sc, traj)
    if traj.status != "ok":
        print(f"solver failure: {traj.status}", file=sys.stderr)
        return EXIT_SOLVER_FAILED
    print(f"run complete: {traj.num_steps} steps -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        sc, traj = load_run_directory(args.run_dir)
        checks = (
            [c.strip() for c in args.checks.split(",") if c.strip()]
            if args.checks
            else list(sc.checks)
        )
        reports = run_checks(sc, traj, checks)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    run_dir = Path(args.run_dir)
    all_passed = True
    for rep in reports:
        with open(run_dir / f"check_{rep.name}.json", "w") as fh:
            fh.write(rep.to_json())
            fh.write("\n")
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {rep.name}: max violation {rep.max_violation:.3e} (tolerance {rep.tolerance:.3e})")
        all_passed &= rep.passed
    return EXIT_OK if all_passed else EXIT_CHECK_FAILED


def _sweep_one(payload):
    text, out_dir, tau = payload
    from .scenario import parse_scenario

    sc = parse_scenario(text)
    if tau is not None:
        sc = replace(sc, tau=tau, raw_text="")
    u0 = sc.initial_density()
    traj = jko_run(u0, sc.jko_config(), sc.num_steps)
    write_run_directory(out_dir, sc, traj)
    return traj.status


def cmd_sweep(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.tau_list:
        try:
            taus = [float(t) for t in args.tau_list.split(",")]
        except ValueError:
            print(f"config error: bad tau list {args.tau_list!r}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        if sorted(taus, reverse=True) != taus or len(set(taus)) != len(taus):
            print("config error: tau list must be strictly decreasing", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        u0 = sc.initial_density()
        horizon = args.horizon if args.horizon else sc.num_steps * sc.tau
        report = tau_refinement_study(
            u0, sc.jko_config(), tau_list=taus, horizon=horizon, r=args.r
        )
        with open(out / "tau_refinement.json", "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out / "tau_refinement.csv", "w") as fh:
            fh.write("tau_coarse,tau_fine,l2h_gap,sup_gap,rate\n")
            for i in range(len(report.l2h_gaps)):
                rate = report.rates[i - 1] if i >= 1 else float("nan")
                fh.write(
                    f"{report.taus[i]},{report.taus[i+1]},{report.l2h_gaps[i]!r},"
                    f"{report.sup_gaps[i]!r},{rate!r}\n"
                )
        print(f"tau sweep: gaps {report.l2h_gaps} cauchy_monotone={report.cauchy_monotone}")
        return EXIT_OK
    if args.s_list:
        try:
            svals = [float(v) for v in args.s_list.split(",")]
        except ValueError:
            print(f"config error: bad s list {args.s_list!r}", file=sys.stderr)
            return EXIT_CONFIG_ERROR
        payloads = []
        for sv in svals:
            sub = replace(sc, s=sv, name=f"{sc.name}_s{sv:g}", raw_text="")
            payloads.append((format_scenario(sub), out / f"s_{sv:g}", None))
        if args.threads > 1:
            with ProcessPoolExecutor(max_workers=args.threads) as pool:
                statuses = list(pool.map(_sweep_one, payloads))
        else:
            statuses = [_sweep_one(p) for p in payloads]
        bad = [s for s in statuses if s != "ok"]
        for sv, status in zip(svals, statuses):
            print(f"s = {sv:g}: {status}")
        return EXIT_OK if not bad else EXIT_SOLVER_FAILED
    print("config error: sweep needs --tau-list or --s-list", file=sys.stderr)
    return EXIT_CONFIG_ERROR


def cmd_print_config(args) -> int:
    try:
        sc = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    sys.stdout.write(format_scenario(sc))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracfilm",
        description="Spectral minimizing-movement solver and verification suite "
        "for the fractional thin-film equation on a periodic box.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write a run directory")
    p_run.add_argument("--scenario", required=True, help="scenario file path")
    p_run.add_argument("--out", default="", help="run directory (default: scenario's output.dir)")
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run analysis checks on a run directory")
    p_ver.add_argument("run_dir", help="run directory produced by `run`")
    p_ver.add_argument("--checks", default="", help="comma list (default: scenario's checks)")
    p_ver.set_defaults(func=cmd_verify)

    p_sw = sub.add_parser("sweep", help="tau-refinement study or s sweep")
    p_sw.add_argument("--scenario", required=True)
    p_sw.add_argument("--out", required=True)
    p_sw.add_argument("--tau-list", default="", help="comma list, strictly decreasing")
    p_sw.add_argument("--s-list", default="", help="comma list of equation orders")
    p_sw.add_argument("--horizon", type=float, default=0.0, help="time horizon for tau sweeps")
    p_sw.add_argument("--r", type=float, default=0.5, help="comparison order r < s")
    p_sw.add_argument("--threads", type=int, default=1, help="parallel scenario workers")
    p_sw.set_defaults(func=cmd_sweep)

    p_pc = sub.add_parser("print-config", help="parse and echo a normalized scenario")
    p_pc.add_argument("--scenario", required=True)
    p_pc.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FracfilmError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILED


if __name__ == "__main__":
    sys.exit(main())
