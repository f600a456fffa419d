"""Command-line entry points: fit, cv, simulate, bench.

Reports are JSON with sorted keys and no timestamps, so a fixed seed gives
byte-identical output across runs.  Exit codes: 0 success, 2 usage error
(argparse), 3 data/parse error, 4 invalid parameters, 5 non-convergence,
6 scenario validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from . import __version__
from .design import build_cme_design, load_csv, save_csv
from .errors import CmenetError, DataError, InvalidParams, InvalidRho, ModelNotRealizable
from .penalty import PenaltyParams, kkt_residual
from .simlab import LatentModelSpec, Scenario, gen_factors, gen_response, run_benchmark
from .solver import SolverOptions, fit
from .tuning import cv_cmenet, default_grid

EXIT_OK = 0
EXIT_DATA = 3
EXIT_PARAMS = 4
EXIT_NONCONVERGENCE = 5
EXIT_SCENARIO = 6

SCHEMA_VERSION = 1


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_report(report: dict, output):
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(output, "w") as fh:
            fh.write(text)


def _model_report(design, state, params, input_path, seed=None, screening=None):
    selected = [
        {"name": e.name(design.factor_names), "coefficient": b}
        for e, b in state.selected(design)
    ]
    report = {
        "schema_version": SCHEMA_VERSION,
        "selected": selected,
        "intercept": state.y_center,
        "params": {
            "lambda_s": params.lambda_s,
            "lambda_c": params.lambda_c,
            "gamma": params.gamma,
            "tau": params.tau,
        },
        "n": design.n,
        "p": design.p,
        "p_prime": design.p_prime,
        "diagnostics": {
            "sweeps": state.n_sweeps,
            "converged": state.converged,
            "kkt_residual": state.max_kkt,
        },
        "provenance": {
            "input_sha256": _sha256(input_path) if input_path else None,
            "seed": seed,
            "version": __version__,
        },
    }
    if screening is not None:
        report["diagnostics"]["screening"] = screening
    return report


def cmd_fit(args) -> int:
    factors, y = load_csv(args.input, args.response, map01=args.map01)
    design = build_cme_design(factors)
    params = PenaltyParams(args.lambda_s, args.lambda_c, args.gamma, args.tau)
    opts = SolverOptions(
        tol=args.tol, max_sweeps=args.max_sweeps, use_active_set=not args.no_active_set
    )
    state = fit(design, y, params, opts=opts)
    report = _model_report(design, state, params, args.input)
    _write_report(report, args.output)
    if not state.converged:
        print("warning: solver did not converge", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_cv(args) -> int:
    factors, y = load_csv(args.input, args.response, map01=args.map01)
    design = build_cme_design(factors)
    grid = default_grid(design, y, L=args.L, M=args.M, folds=args.folds, seed=args.seed)
    opts = SolverOptions(tol=args.tol, max_sweeps=args.max_sweeps)
    res = cv_cmenet(design, y, grid, opts=opts, use_screening=not args.no_screen)
    report = _model_report(design, res.final_fit, res.best_params, args.input, seed=args.seed)
    report["cv"] = {
        "folds": args.folds,
        "error_surface": [
            {"key": [str(k) for k in key], "error": err}
            for key, err in sorted(res.cv_error_surface.items(), key=lambda kv: str(kv[0]))
        ],
        "stats": res.stats,
    }
    _write_report(report, args.output)
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.scenario:
        scenario = Scenario.from_file(args.scenario)
    else:
        scenario = Scenario(
            n=args.n, p=args.p, rho=args.rho, structure=args.structure,
            n_groups=args.groups, n_per_group=args.per_group,
            coefficient=args.coef, noise_sd=args.noise_sd, seed=args.seed,
        )
    seq = np.random.SeedSequence([scenario.seed, 0])
    s_factors, s_noise = seq.spawn(2)
    factors = gen_factors(LatentModelSpec(scenario.n, scenario.p, scenario.rho, s_factors))
    design = build_cme_design(factors, keep_raw=False)
    y, active = gen_response(design, scenario.true_model(), s_noise)
    save_csv(args.data, factors, y)
    report = {
        "schema_version": SCHEMA_VERSION,
        "scenario": {k: v for k, v in vars(scenario).items() if k != "cv"},
        "true_effects": [e.name(design.factor_names) for e in active],
        "data": args.data,
        "provenance": {"seed": scenario.seed, "version": __version__},
    }
    _write_report(report, args.output)
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario = Scenario.from_file(args.scenario)
    if args.reps is not None:
        scenario.reps = args.reps
    if args.seed is not None:
        scenario.seed = args.seed
    methods = args.methods.split(",")
    report = run_benchmark(scenario, methods=methods, threads=args.threads)
    report["schema_version"] = SCHEMA_VERSION
    report["provenance"] = {
        "scenario_sha256": _sha256(args.scenario),
        "seed": scenario.seed,
        "version": __version__,
    }
    _write_report(report, args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmenet",
        description="Bi-level selection of main effects and conditional main effects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit at fixed penalty parameters")
    p_fit.add_argument("--input", required=True)
    p_fit.add_argument("--response", default="y")
    p_fit.add_argument("--lambda-s", dest="lambda_s", type=float, required=True)
    p_fit.add_argument("--lambda-c", dest="lambda_c", type=float, required=True)
    p_fit.add_argument("--gamma", type=float, required=True)
    p_fit.add_argument("--tau", type=float, required=True)
    p_fit.add_argument("--map01", action="store_true", help="input factors coded 0/1")
    p_fit.add_argument("--no-active-set", action="store_true")
    p_fit.add_argument("--tol", type=float, default=1e-6)
    p_fit.add_argument("--max-sweeps", type=int, default=1000)
    p_fit.add_argument("--output", default=None)
    p_fit.set_defaults(func=cmd_fit)

    p_cv = sub.add_parser("cv", help="cross-validated tuning and refit")
    p_cv.add_argument("--input", required=True)
    p_cv.add_argument("--response", default="y")
    p_cv.add_argument("--folds", type=int, default=10)
    p_cv.add_argument("--seed", type=int, default=0)
    p_cv.add_argument("--L", type=int, default=20)
    p_cv.add_argument("--M", type=int, default=20)
    p_cv.add_argument("--no-screen", action="store_true")
    p_cv.add_argument("--map01", action="store_true")
    p_cv.add_argument("--tol", type=float, default=1e-6)
    p_cv.add_argument("--max-sweeps", type=int, default=1000)
    p_cv.add_argument("--output", default=None)
    p_cv.set_defaults(func=cmd_cv)

    p_sim = sub.add_parser("simulate", help="generate a dataset from a scenario")
    p_sim.add_argument("--scenario", default=None, help="JSON/TOML scenario file")
    p_sim.add_argument("--n", type=int, default=100)
    p_sim.add_argument("--p", type=int, default=20)
    p_sim.add_argument("--rho", type=float, default=0.0)
    p_sim.add_argument("--structure", default="sibling", choices=["sibling", "cousin", "main"])
    p_sim.add_argument("--groups", type=int, default=2)
    p_sim.add_argument("--per-group", dest="per_group", type=int, default=2)
    p_sim.add_argument("--coef", type=float, default=1.0)
    p_sim.add_argument("--noise-sd", dest="noise_sd", type=float, default=1.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--data", required=True, help="output CSV path")
    p_sim.add_argument("--output", default=None, help="truth/report JSON path")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="run a selection benchmark scenario")
    p_bench.add_argument("--scenario", required=True)
    p_bench.add_argument("--methods", default="cmenet,lasso_limit")
    p_bench.add_argument("--reps", type=int, default=None)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--threads", type=int, default=1)
    p_bench.add_argument("--output", default=None)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvalidRho, ModelNotRealizable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except InvalidParams as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAMS if args.command in ("fit", "cv") else EXIT_SCENARIO
    except CmenetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
