"""Command-line front end.

Subcommands: ``simulate`` (one point, one method), ``sweep`` (grid to
CSV), ``compare`` (multi-method deviation report), ``peaks`` (peak table
from a sweep CSV), ``oracle-check`` (exact many-body equivalence suite).

Exit codes: 0 success, 1 configuration error, 2 any non-converged point
under ``--strict``, 3 internal numerical failure.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .diagnostics import detect_peaks, regime
from .model import ContactSpec, ModelParams
from .numerics import NumericalError
from .sweep import (
    ConfigError,
    METHODS,
    SweepConfig,
    load_config,
    read_sweep_csv,
    resolve_config,
    run_compare,
    run_point,
    run_sweep,
    write_plot_script,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_NUMERICAL = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key-value config file")
    parser.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )
    parser.add_argument("--method", help="mirrors sweep.methods")
    parser.add_argument("--gamma", help="mirrors sweep.gamma (grid spec)")
    parser.add_argument("--kappa-pi", help="mirrors sweep.kappa_pi (units of pi)")
    parser.add_argument("--delta-mu", help="mirrors sweep.delta_mu")
    parser.add_argument("--workers", help="mirrors workers (overrides FERMICHAIN_WORKERS)")
    parser.add_argument("--dt", help="mirrors solver.dt")
    parser.add_argument("--t-max", help="mirrors solver.t_max")
    parser.add_argument("--tol", help="mirrors solver.tol")
    parser.add_argument("--integrator", help="mirrors solver.integrator")


def _collect_overrides(args) -> dict[str, str]:
    overrides: dict[str, str] = {}
    if args.config:
        overrides.update(load_config(args.config))
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    flag_map = {
        "method": "sweep.methods",
        "gamma": "sweep.gamma",
        "kappa_pi": "sweep.kappa_pi",
        "delta_mu": "sweep.delta_mu",
        "workers": "workers",
        "dt": "solver.dt",
        "t_max": "solver.t_max",
        "tol": "solver.tol",
        "integrator": "solver.integrator",
    }
    for attr, key in flag_map.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "output", None):
        overrides["output.path"] = args.output
    return overrides


def _cmd_simulate(args) -> int:
    cfg = resolve_config(_collect_overrides(args))
    method = cfg.methods[0]
    record = run_point(cfg, method, float(cfg.gammas[0]), float(cfg.kappas[0]))
    probe = ModelParams(
        L=cfg.L, M=cfg.M, J_s=cfg.J_s, J_r=cfg.J_r, epsilon=cfg.epsilon,
        gamma=record.gamma,
        contacts=(ContactSpec(record.mu, cfg.beta), ContactSpec(record.mu, cfg.beta)),
    )
    print(f"method            : {record.method}")
    print(f"gamma             : {record.gamma:.6g}")
    print(f"kappa_F           : {record.kappa_F:.6g}  (mu = {record.mu:.6g})")
    print(f"delta_mu          : {record.delta_mu:.6g}")
    print(f"regime            : {regime(probe)}")
    print(f"current           : {record.current:.10g}")
    if record.max_eig_fraction is not None:
        print(f"max_eig_fraction  : {record.max_eig_fraction:.6g}")
    print(f"converged         : {record.converged}")
    print(f"residual          : {record.residual:.3g}")
    print(f"t_final           : {record.t_final:.6g}")
    print(f"runtime_seconds   : {record.runtime_seconds:.3f}")
    if not record.converged and args.strict:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = resolve_config(_collect_overrides(args))
    records = run_sweep(cfg)
    if args.plot_script:
        write_plot_script(cfg, args.plot_script)
    bad = sum(1 for r in records if not r.converged)
    print(f"wrote {len(records)} rows to {cfg.output_path} ({bad} non-converged)")
    if bad and args.strict:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = resolve_config(_collect_overrides(args))
    report = run_compare(cfg)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(report)
        print(f"wrote report to {args.output}")
    else:
        print(report, end="")
    return EXIT_OK


def _cmd_peaks(args) -> int:
    records = read_sweep_csv(args.input)
    groups: dict[tuple[str, float], list] = {}
    for r in records:
        groups.setdefault((r.method, r.gamma), []).append(r)
    print("method,gamma,kappa_F,mu,height,prominence")
    for (method, gamma), rows in sorted(groups.items()):
        rows.sort(key=lambda r: r.kappa_F)
        kappas = np.array([r.kappa_F for r in rows])
        currents = np.array([r.current for r in rows])
        mus = np.array([r.mu for r in rows])
        for peak in detect_peaks(kappas, currents, prominence_frac=args.prominence):
            mu = float(np.interp(peak.position, kappas, mus))
            print(
                f"{method},{gamma:.12g},{peak.position:.12g},{mu:.12g},"
                f"{peak.height:.12g},{peak.prominence:.12g}"
            )
    return EXIT_OK


def _cmd_oracle_check(args) -> int:
    # imported lazily: the oracle machinery is heavy relative to the CLI
    from .oraclecheck import run_oracle_checks

    ok = run_oracle_checks(t_final=args.t_final, verbose=True)
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fermichain",
        description="Stationary fermion currents through a chain between dissipative ring reservoirs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one grid point with one method")
    _add_common(p)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a grid and write a CSV")
    _add_common(p)
    p.add_argument("--output", help="mirrors output.path")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--plot-script", help="also write a gnuplot-style script")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="multi-method deviation report")
    _add_common(p)
    p.add_argument("--output", help="write the report to a file")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("peaks", help="peak table from a sweep CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--prominence", type=float, default=0.1)
    p.set_defaults(func=_cmd_peaks)

    p = sub.add_parser("oracle-check", help="exact many-body equivalence suite")
    p.add_argument("--t-final", type=float, default=50.0)
    p.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
