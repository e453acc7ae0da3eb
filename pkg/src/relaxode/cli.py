"""Command-line harness.

Subcommands: run, convergence, compare, list-methods, list-problems.
Options come from flags or an INI-style config file (flags win).  Exit
codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

from . import report
from .driver import (
    RunConfig,
    aggregate_eoc,
    build_problem,
    compare_modes,
    convergence_study,
    list_methods,
    run,
)
from .errors import ConfigError, RelaxodeError
from .problems import PROBLEMS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_RUN_KEYS = {
    "problem": str, "method": str, "mode": str, "dt": float,
    "t_final": float, "m": int, "nu": str, "estimator": str,
    "gauss_nodes": int, "adapt": str, "target_fidx": int,
    "root_abs_tol": float, "newton_tol": float, "newton_max_iter": int,
    "reuse_jacobian": bool, "save_state": bool,
}


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    return text.strip().lower() in ("1", "true", "yes", "on")


def _parse_param(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _load_config_file(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file {path!r} not found or unreadable")
    run_keys, problem_params = {}, {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if section == "problem" and key not in ("problem",):
                problem_params[key] = _parse_param(value)
            elif key in _RUN_KEYS:
                cast = _RUN_KEYS[key]
                run_keys[key] = _parse_bool(value) if cast is bool else cast(value)
            else:
                raise ConfigError(f"unknown config key [{section}] {key}")
    return run_keys, problem_params


def _build_run_config(args) -> RunConfig:
    run_keys, problem_params = {}, {}
    if args.config:
        run_keys, problem_params = _load_config_file(args.config)
    for key in _RUN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            run_keys[key] = flag
    for item in args.param or []:
        if "=" not in item:
            raise ConfigError(f"--param expects name=value, got {item!r}")
        name, value = item.split("=", 1)
        problem_params[name.strip()] = _parse_param(value.strip())
    missing = [k for k in ("problem", "method", "dt", "t_final")
               if k not in run_keys]
    if missing:
        raise ConfigError(f"missing required option(s): {', '.join(missing)}")
    nu = run_keys.pop("nu", None)
    if isinstance(nu, str):
        nu = tuple(float(v) for v in nu.replace(";", ",").split(",") if v.strip())
    cfg = RunConfig(problem_params=problem_params, nu=nu, **run_keys)
    cfg.validated()
    return cfg


def _add_common_options(sub):
    sub.add_argument("--config", help="INI config file; flags override it")
    sub.add_argument("--problem")
    sub.add_argument("--method")
    sub.add_argument("--mode", choices=["baseline", "relaxation", "idt",
                                        "projection"])
    sub.add_argument("--dt", type=float)
    sub.add_argument("--t-final", dest="t_final", type=float)
    sub.add_argument("--m", type=int)
    sub.add_argument("--nu", help="comma-separated convex weights")
    sub.add_argument("--estimator", choices=["auto", "conserve",
                                             "method_quadrature", "dense_gauss"])
    sub.add_argument("--gauss-nodes", dest="gauss_nodes", type=int,
                     choices=[1, 2])
    sub.add_argument("--adapt", choices=["variable_coefficients",
                                         "fixed_coefficients"])
    sub.add_argument("--target-fidx", dest="target_fidx", type=int)
    sub.add_argument("--root-abs-tol", dest="root_abs_tol", type=float)
    sub.add_argument("--newton-tol", dest="newton_tol", type=float)
    sub.add_argument("--newton-max-iter", dest="newton_max_iter", type=int)
    sub.add_argument("--newton-reuse-jac", dest="reuse_jacobian",
                     action="store_const", const=True)
    sub.add_argument("--save-state", dest="save_state",
                     action="store_const", const=True)
    sub.add_argument("--param", action="append",
                     help="problem parameter name=value (repeatable)")
    sub.add_argument("--out-dir", default=".", help="output directory")
    sub.add_argument("--plot", action="store_true",
                     help="render figures next to the CSV output")


def _stem(cfg: RunConfig) -> str:
    return f"{cfg.problem}_{cfg.method}_{cfg.mode}"


def _cmd_run(args) -> int:
    cfg = _build_run_config(args)
    result = run(cfg)
    out = Path(args.out_dir)
    csv_path = report.write_run_csv(out / f"{_stem(cfg)}_run.csv", result)
    print(f"wrote {csv_path}")
    if args.plot:
        problem = build_problem(cfg.problem, cfg.problem_params)
        fig_path = report.plot_run(out / f"{_stem(cfg)}_run.png", result,
                                   problem)
        print(f"wrote {fig_path}")
    print(f"final time reached: {result.t_realized:.17g}")
    print(f"state at t={cfg.t_final:.17g} (dense output):")
    print("  " + " ".join(report.fmt(v) for v in result.u_at_T))
    return EXIT_OK


def _cmd_convergence(args) -> int:
    cfg = _build_run_config(args)
    if args.dt_list:
        dts = [float(v) for v in args.dt_list.split(",") if v.strip()]
    else:
        dts = [cfg.dt * 0.5 ** i for i in range(args.levels)]
    rows = convergence_study(cfg, dts)
    out = Path(args.out_dir)
    csv_path = report.write_summary_csv(out / f"{_stem(cfg)}_summary.csv", rows)
    print(f"wrote {csv_path}")
    if args.plot:
        fig_path = report.plot_convergence(
            out / f"{_stem(cfg)}_convergence.png", rows, label=_stem(cfg))
        print(f"wrote {fig_path}")
    print(f"{'dt':>12} {'error':>14} {'eoc':>8} {'max|g-1|':>12} status")
    for r in rows:
        eoc = f"{r.eoc:8.3f}" if r.eoc is not None else " " * 8
        print(f"{r.dt:12.6g} {r.error:14.6e} {eoc} {r.max_gamma_dev:12.4e} "
              f"{r.status}")
    ok_rows = [r for r in rows if r.status == "ok"]
    if len(ok_rows) >= 2 and all(r.eoc is not None for r in ok_rows[1:]):
        print(f"aggregate EOC: {aggregate_eoc(rows):.3f}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    cfg = _build_run_config(args)
    results = compare_modes(cfg)
    out = Path(args.out_dir)
    csv_path = report.write_compare_csv(
        out / f"{cfg.problem}_{cfg.method}_compare.csv", results)
    print(f"wrote {csv_path}")
    if args.plot:
        problem = build_problem(cfg.problem, cfg.problem_params)
        fig_path = report.plot_compare(
            out / f"{cfg.problem}_{cfg.method}_compare.png", results, problem)
        print(f"wrote {fig_path}")
    problem = build_problem(cfg.problem, cfg.problem_params)
    for mode, result in results.items():
        drifts = " ".join(
            f"{fn.name}={result.eta_drift(i):.3e}"
            for i, fn in enumerate(problem.functionals))
        print(f"{mode:>11}: functional drift {drifts}")
    return EXIT_OK


def _cmd_list_methods(args) -> int:
    print(f"{'name':>10} {'type':>5} {'k':>3} {'p':>3} implicit")
    for row in list_methods():
        print(f"{row['name']:>10} {row['type']:>5} {row['k']:>3} "
              f"{row['p']:>3} {'yes' if row['implicit'] else 'no'}")
    return EXIT_OK


def _cmd_list_problems(args) -> int:
    print(f"{'name':>22} {'dim':>5} functionals")
    for name in sorted(PROBLEMS):
        problem = build_problem(name, {})
        fns = ", ".join(f"{fn.name}({fn.goal.value})"
                        for fn in problem.functionals)
        print(f"{name:>22} {problem.dim:>5} {fns}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relaxode",
        description="Relaxation and projection time integration experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    _add_common_options(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_conv = sub.add_parser("convergence", help="halving-step error study")
    _add_common_options(p_conv)
    p_conv.add_argument("--levels", type=int, default=4,
                        help="number of halvings starting from --dt")
    p_conv.add_argument("--dt-list", dest="dt_list",
                        help="explicit comma-separated step sizes")
    p_conv.set_defaults(func=_cmd_convergence)

    p_cmp = sub.add_parser("compare",
                           help="baseline vs projection vs relaxation")
    _add_common_options(p_cmp)
    p_cmp.set_defaults(func=_cmd_compare)

    p_lm = sub.add_parser("list-methods", help="available methods")
    p_lm.set_defaults(func=_cmd_list_methods)

    p_lp = sub.add_parser("list-problems", help="available problems")
    p_lp.set_defaults(func=_cmd_list_problems)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RelaxodeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
