"""Command-line front end for batch fitting, prediction, and benchmarks.

Subcommands: fit, predict, benchmark, sk-mm1, gen-design, eval-fn.
Every run writes a JSON manifest with the resolved flags and seeds next
to its outputs, so results can be reproduced exactly. Exit codes:
0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import benchmark as bench
from . import model as gp
from .designs import maximin_lhs
from .estimation import AllStartsFailedError, FitConfig
from .model import FactorizationFailureError
from .nugget import NuggetStrategy
from .testbed import FUNCTIONS, get_function

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


def _read_points_csv(path, expect_y: bool):
    """Read a CSV with header x1..xd[,y]; raises InputError with the
    offending line number."""
    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        d = len(header) - (1 if expect_y else 0)
        expected = [f"x{i}" for i in range(1, d + 1)] + (["y"] if expect_y else [])
        if d < 1 or header != expected:
            raise InputError(
                f"{path}: line 1: expected header {','.join(expected) if d >= 1 else 'x1..xd' + (',y' if expect_y else '')},"
                f" got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise InputError(f"{path}: line {lineno}: {exc}") from None
    data = np.array(rows, dtype=float) if rows else np.empty((0, len(header)))
    if expect_y:
        return data[:, :-1], data[:, -1]
    return data


def _parse_kernel(text: str):
    if text == "gauss":
        return "pexp", 2.0
    if text == "matern52":
        return "matern52", 2.0
    if text.startswith("pexp:"):
        try:
            p = float(text.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad kernel spec {text!r}: exponent is not a number") from None
        return "pexp", p
    raise InputError(f"bad kernel spec {text!r}: use gauss, pexp:P, or matern52")


def _parse_nugget(text: str) -> NuggetStrategy:
    if text == "estimate":
        return NuggetStrategy.estimated(1e-6)
    if text == "dlb":
        return NuggetStrategy.stability_lower_bound()
    if text == "dace":
        return NuggetStrategy.dace_default()
    if text.startswith("fixed:"):
        try:
            value = float(text.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad nugget spec {text!r}: value is not a number") from None
        return NuggetStrategy.fixed(value)
    raise InputError(f"bad nugget spec {text!r}: use fixed:V, estimate, dlb, or dace")


def _write_manifest(path: Path, subcommand: str, flags: dict, outputs: list) -> None:
    manifest = {
        "tool": "krigbench",
        "version": __version__,
        "subcommand": subcommand,
        "flags": flags,
        "outputs": [str(o) for o in outputs],
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=1, default=str)
        handle.write("\n")


def _fmt(value: float) -> str:
    return repr(float(value))


def cmd_fit(args) -> int:
    x, y = _read_points_csv(args.data, expect_y=True)
    if x.shape[0] < 2:
        raise InputError(f"{args.data}: need at least 2 rows to fit")
    family, exponent = _parse_kernel(args.kernel)
    config = FitConfig(nugget=_parse_nugget(args.nugget), seed=args.seed)
    try:
        fitted = gp.fit(x, y, family, config, exponent=exponent, parameterization=args.param)
    except (FactorizationFailureError, AllStartsFailedError) as exc:
        print(f"fit failed during optimization/factorization: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    gp.save_model(fitted, args.out)
    _write_manifest(Path(str(args.out) + ".manifest.json"), "fit", vars(args), [args.out])
    diag = fitted.diagnostics
    theta = ", ".join(_fmt(v) for v in fitted.kernel.params)
    print(f"wrote {args.out}")
    print(f"deviance={_fmt(diag.deviance)} params[{fitted.kernel.parameterization}]=[{theta}]")
    delta = fitted.delta
    delta_text = _fmt(delta) if np.isscalar(delta) else "per-point"
    print(f"mu={_fmt(fitted.mu_hat)} sigma2={_fmt(fitted.sigma2_hat)} delta={delta_text} "
          f"iterations={diag.total_iterations} degenerate={diag.degenerate}")
    return EXIT_OK


def cmd_predict(args) -> int:
    fitted = gp.load_model(args.model)
    points = _read_points_csv(args.points, expect_y=False)
    if points.shape[0] and points.shape[1] != fitted.dims:
        raise InputError(
            f"{args.points}: points have {points.shape[1]} dimensions, model expects {fitted.dims}"
        )
    header = [f"x{i}" for i in range(1, fitted.dims + 1)] + ["yhat", "mse"]
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(",".join(header) + "\n")
        if points.shape[0]:
            means = gp.predict_mean(fitted, points)
            mses = gp.predict_mse(fitted, points)
            for row, mean, mse in zip(points, means, mses):
                cells = [_fmt(v) for v in row] + [_fmt(mean), _fmt(mse)]
                handle.write(",".join(cells) + "\n")
    _write_manifest(Path(str(args.out) + ".manifest.json"), "predict", vars(args), [args.out])
    print(f"wrote {args.out}")
    return EXIT_OK


def _resolve_benchmark_function(name: str, d):
    if name not in FUNCTIONS:
        valid = ", ".join(sorted(FUNCTIONS))
        raise InputError(f"unknown function {name!r}; valid names: {valid}")
    if name == "borehole" and d == 4:
        name = "borehole4"
    fn = get_function(name)
    if d is not None and d != fn.dims:
        raise InputError(f"function {fn.name!r} is {fn.dims}-dimensional, got --d {d}")
    return fn


def cmd_benchmark(args) -> int:
    fn = _resolve_benchmark_function(args.function, args.d)
    labels = [p.strip() for p in args.profiles.split(",") if p.strip()]
    try:
        profiles = bench.resolve_profiles(labels)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = bench.run_experiment(
        fn, n=args.n, m=args.m, profiles=profiles,
        n_macroreps=args.macroreps, base_seed=args.seed, jobs=args.jobs,
    )
    results_path = out_dir / "results.csv"
    plot_path = out_dir / "plot_data.csv"
    bench.write_results_csv(results, results_path)
    bench.write_plot_data_csv(results, plot_path)
    _write_manifest(out_dir / "manifest.json", "benchmark", vars(args),
                    [results_path, plot_path])
    print(f"wrote {results_path} and {plot_path} ({len(results)} rows)")
    return EXIT_OK


def cmd_sk_mm1(args) -> int:
    if args.n2 < 7:
        raise InputError("--n2 must be at least 7 (one replicate per design point)")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results, allocation = bench.run_sk_mm1(
        n1=args.n1, n2=args.n2, seed=args.seed, run_length=args.run_length,
    )
    results_path = out_dir / "results.csv"
    plot_path = out_dir / "plot_data.csv"
    bench.write_results_csv(results, results_path)
    bench.write_plot_data_csv(results, plot_path)
    flags = dict(vars(args))
    flags["stage2_allocation"] = [int(a) for a in allocation]
    _write_manifest(out_dir / "manifest.json", "sk-mm1", flags, [results_path, plot_path])
    print(f"wrote {results_path} and {plot_path}; stage-2 allocation "
          f"{','.join(str(int(a)) for a in allocation)}")
    return EXIT_OK


def cmd_gen_design(args) -> int:
    design = maximin_lhs(args.n, args.d, seed=args.seed, iters=args.iters)
    header = [f"x{i}" for i in range(1, args.d + 1)]
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(",".join(header) + "\n")
        for row in design:
            handle.write(",".join(_fmt(v) for v in row) + "\n")
    _write_manifest(Path(str(args.out) + ".manifest.json"), "gen-design", vars(args), [args.out])
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_eval_fn(args) -> int:
    if args.function not in FUNCTIONS:
        valid = ", ".join(sorted(FUNCTIONS))
        raise InputError(f"unknown function {args.function!r}; valid names: {valid}")
    fn = get_function(args.function)
    points = _read_points_csv(args.points, expect_y=False)
    if points.shape[0] and points.shape[1] != fn.dims:
        raise InputError(
            f"{args.points}: points have {points.shape[1]} dimensions, "
            f"function {fn.name!r} expects {fn.dims}"
        )
    header = [f"x{i}" for i in range(1, fn.dims + 1)] + ["y"]
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(",".join(header) + "\n")
        if points.shape[0]:
            values = fn(points)
            for row, value in zip(points, values):
                handle.write(",".join([_fmt(v) for v in row] + [_fmt(value)]) + "\n")
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="krigbench",
        description="Gaussian-process fitting, prediction, and accuracy benchmarks.",
    )
    parser.add_argument("--version", action="version", version=f"krigbench {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("fit", help="fit a GP model to a CSV data set")
    p.add_argument("--data", required=True, help="CSV with header x1..xd,y")
    p.add_argument("--kernel", default="gauss", help="gauss, pexp:P, or matern52")
    p.add_argument("--nugget", default="estimate", help="fixed:V, estimate, dlb, or dace")
    p.add_argument("--param", default="theta", choices=["theta", "log10", "inv", "lensq"],
                   help="convention for reported kernel parameters")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict from a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--points", required=True, help="CSV with header x1..xd")
    p.add_argument("--out", required=True, help="CSV to write (x1..xd,yhat,mse)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="macroreplicated accuracy benchmark")
    p.add_argument("--function", required=True)
    p.add_argument("--d", type=int, default=None, help="input dimension (validates; selects the borehole projection)")
    p.add_argument("--n", type=int, required=True, help="design size")
    p.add_argument("--m", type=int, default=2000, help="prediction-set size")
    p.add_argument("--profiles", default=",".join(bench.DEFAULT_PROFILE_LABELS))
    p.add_argument("--macroreps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="parallel fit cells")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sk-mm1", help="two-stage stochastic-kriging benchmark on the M/M/1 queue")
    p.add_argument("--n2", type=int, required=True, help="stage-2 replicate budget (e.g. 100 or 200)")
    p.add_argument("--n1", type=int, default=5, help="stage-1 replicates per design point")
    p.add_argument("--run-length", type=int, default=2000, help="customers simulated per replicate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sk_mm1)

    p = sub.add_parser("gen-design", help="emit a maximin Latin hypercube design")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=10_000, help="point-exchange swaps")
    p.add_argument("--out", required=True, help="CSV to write (header x1..xd)")
    p.set_defaults(func=cmd_gen_design)

    p = sub.add_parser("eval-fn", help="evaluate a test function on CSV points")
    p.add_argument("--function", required=True)
    p.add_argument("--points", required=True, help="CSV with header x1..xd")
    p.add_argument("--out", required=True, help="CSV to write (x1..xd,y)")
    p.set_defaults(func=cmd_eval_fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FactorizationFailureError, AllStartsFailedError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
