"""Command-line interface.

Subcommands: ``simulate`` (Monte Carlo campaigns), ``fit`` (generic CSV
with column roles), ``cv`` (tuning-grid report), ``bodyfat`` (the
application pipeline) and ``plot-data`` (plot-ready tables and figures
from saved campaign output).  Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .bodyfat import CleaningRules, fit_bodyfat
from .dataio import dataset_from_csv, dataset_from_roles
from .errors import DataError, NumericalError
from .estimator import FitConfig, fit_penalized, fit_unpenalized
from .penalties import PenaltySpec
from .simulation import SimConfig, run_monte_carlo
from .tuning import TuningGrid, select_tuning
from . import reporting
from . import __version__

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        _fail(EXIT_USAGE, "usage", message)


def _fail(code, kind, message):
    print(json.dumps({"error": {"code": code, "type": kind,
                                "message": str(message)}}), file=sys.stderr)
    raise SystemExit(code)


def _int_list(text):
    return tuple(int(t) for t in text.split(",") if t.strip())


def _str_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="plsivc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default=".")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("simulate", help="run a Monte Carlo campaign")
    common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--methods", type=_str_list, default=["scad", "lasso", "oracle"])
    p.add_argument("--grid-n", type=int, default=20, help="reporting grid size")
    p.add_argument("--k-grid", type=_int_list, default=None,
                   help="comma-separated interior knot counts")
    p.add_argument("--n-lambdas", type=int, default=20)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("fit", help="fit one dataset from CSV")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--response", default=None, help="response column name")
    p.add_argument("--linear", type=_str_list, default=[])
    p.add_argument("--index", type=_str_list, default=[])
    p.add_argument("--varying", type=_str_list, default=[])
    p.add_argument("--add-z-intercept", action="store_true")
    p.add_argument("--lam", type=float, default=None,
                   help="fixed base lambda; omit to tune by CV")
    p.add_argument("--family", choices=("scad", "lasso"), default="scad")
    p.add_argument("--knots", type=int, default=None)
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--k-grid", type=_int_list, default=None)
    p.add_argument("--n-lambdas", type=int, default=20)
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("cv", help="cross-validation grid report")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--response", default=None)
    p.add_argument("--linear", type=_str_list, default=[])
    p.add_argument("--index", type=_str_list, default=[])
    p.add_argument("--varying", type=_str_list, default=[])
    p.add_argument("--add-z-intercept", action="store_true")
    p.add_argument("--family", choices=("scad", "lasso"), default="scad")
    p.add_argument("--degree", type=int, default=3)
    p.add_argument("--k-grid", type=_int_list, default=None)
    p.add_argument("--n-lambdas", type=int, default=20)
    p.add_argument("--folds", type=int, default=5)

    p = sub.add_parser("bodyfat", help="body-fat application pipeline")
    common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--siri-tol", type=float, default=4.0)
    p.add_argument("--min-bodyfat", type=float, default=1.0)
    p.add_argument("--min-height", type=float, default=40.0)
    p.add_argument("--no-standardize", action="store_true")
    p.add_argument("--k-grid", type=_int_list, default=None)
    p.add_argument("--n-lambdas", type=int, default=20)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("plot-data", help="plot-ready tables and figures "
                                         "from saved campaign output")
    common(p)
    p.add_argument("--campaign-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    return parser


def _load_roles(args):
    if args.response:
        if not args.index or not args.varying and not args.add_z_intercept:
            _fail(EXIT_USAGE, "usage",
                  "--response requires --index and --varying (or --add-z-intercept)")
        return dataset_from_roles(args.input, args.response, args.index,
                                  args.varying, args.linear,
                                  args.add_z_intercept)
    data = dataset_from_csv(args.input)
    names = {"response": "y",
             "linear": [f"u{j+1}" for j in range(data.d)],
             "index": [f"x{j+1}" for j in range(data.p)],
             "varying": [f"z{j+1}" for j in range(data.q)]}
    return data, names


def cmd_simulate(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    grid = TuningGrid(n_lambdas=args.n_lambdas, knot_counts=args.k_grid,
                      folds=args.folds)
    cfg = SimConfig(n=args.n, sigma=args.sigma, reps=args.reps, seed=args.seed,
                    methods=tuple(args.methods), grid_size=args.grid_n,
                    tuning=grid)
    summary = run_monte_carlo(cfg, threads=max(1, args.threads))

    outputs = []
    outputs += reporting.write_summary(summary, args.out_dir, args.format)
    outputs += reporting.write_rase_samples(summary, args.out_dir)
    outputs += reporting.write_curves(summary, args.out_dir)
    if not args.no_figures and summary.g_hat_mean:
        outputs.append(reporting.render_curve_figure(
            summary.grid, summary.g_true, summary.g_hat_mean,
            os.path.join(args.out_dir, "curves.png")))
        by_method = {
            m: {"rase1": [r["methods"][m]["rase1"] for r in summary.records],
                "rase2": [r["methods"][m]["rase2"] for r in summary.records],
                "rase": [r["methods"][m]["rase"] for r in summary.records]}
            for m in summary.methods
        }
        outputs.append(reporting.render_rase_boxplot(
            by_method, os.path.join(args.out_dir, "rase_boxplot.png")))

    manifest = reporting.RunManifest(
        command="simulate",
        config={"n": args.n, "sigma": args.sigma, "reps": args.reps,
                "methods": list(args.methods), "grid_size": args.grid_n,
                "n_lambdas": args.n_lambdas, "k_grid": args.k_grid,
                "folds": args.folds, "format": args.format,
                "failures": summary.failures},
        seed=args.seed,
        outputs=[os.path.basename(p) for p in outputs],
    )
    manifest.write(args.out_dir)
    return EXIT_OK


def _fit_config(args):
    return FitConfig(degree=args.degree,
                     n_interior=getattr(args, "knots", None))


def cmd_fit(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    data, names = _load_roles(args)
    config = _fit_config(args)
    if args.lam is None:
        grid = TuningGrid(n_lambdas=args.n_lambdas, knot_counts=args.k_grid,
                          folds=args.folds)
        config = replace(config, penalty=PenaltySpec(family=args.family))
        selection = select_tuning(data, grid, config, args.seed)
        fit = selection.fit
        tuned = {"lam": selection.lam, "n_interior": selection.n_interior}
    elif args.lam == 0.0:
        fit = fit_unpenalized(data, config)
        tuned = {"lam": 0.0, "n_interior": config.knot_count(data.n)}
    else:
        config = replace(config, penalty=PenaltySpec(family=args.family,
                                                     lam=args.lam))
        fit = fit_penalized(data, config)
        tuned = {"lam": args.lam, "n_interior": config.knot_count(data.n)}

    path = os.path.join(args.out_dir, "fit.json")
    payload = reporting.fit_result_payload(fit)
    payload["columns"] = names
    payload.update(tuned)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = reporting.RunManifest(
        command="fit",
        config={"columns": names, "family": args.family, "degree": args.degree,
                **tuned},
        seed=args.seed,
        input_digest=reporting.file_digest(args.input),
        outputs=["fit.json"],
    )
    manifest.write(args.out_dir)
    return EXIT_OK


def cmd_cv(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    data, names = _load_roles(args)
    config = FitConfig(degree=args.degree,
                       penalty=PenaltySpec(family=args.family))
    grid = TuningGrid(n_lambdas=args.n_lambdas, knot_counts=args.k_grid,
                      folds=args.folds)
    selection = select_tuning(data, grid, config, args.seed)
    path = os.path.join(args.out_dir, "cv_report.csv")
    rows = [[k, reporting.fmt(lam), reporting.fmt(score)]
            for k, lam, score in selection.scores]
    reporting.write_csv(path, ["n_interior", "lambda", "cv_score"], rows)
    fail_path = None
    if selection.failures:
        fail_path = os.path.join(args.out_dir, "cv_failures.csv")
        reporting.write_csv(fail_path, ["n_interior", "lambda", "error"],
                            [[k, reporting.fmt(lam), msg]
                             for k, lam, msg in selection.failures])
    manifest = reporting.RunManifest(
        command="cv",
        config={"columns": names, "family": args.family, "degree": args.degree,
                "winner": {"n_interior": selection.n_interior,
                           "lam": selection.lam},
                "folds": args.folds},
        seed=args.seed,
        input_digest=reporting.file_digest(args.input),
        outputs=[os.path.basename(p) for p in (path, fail_path) if p],
    )
    manifest.write(args.out_dir)
    return EXIT_OK


def cmd_bodyfat(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    rules = CleaningRules(min_bodyfat=args.min_bodyfat,
                          min_height=args.min_height,
                          siri_tolerance=args.siri_tol)
    grid = TuningGrid(n_lambdas=args.n_lambdas, knot_counts=args.k_grid,
                      folds=args.folds)
    report = fit_bodyfat(args.input, grid=grid, seed=args.seed, rules=rules,
                         standardize_x=not args.no_standardize)

    coef_path = os.path.join(args.out_dir, "bodyfat_coefficients.csv")
    rows = [["age", reporting.fmt(report["theta"]["age"])],
            ["weight", reporting.fmt(report["theta"]["weight"])]]
    rows += [[name, reporting.fmt(report["beta"][name])]
             for name in report["meta"]["x_names"]]
    rows += [["r2", reporting.fmt(report["r2"])],
             ["lm_r2", reporting.fmt(report["lm_r2"])]]
    reporting.write_csv(coef_path, ["term", "estimate"], rows)

    excl_path = os.path.join(args.out_dir, "bodyfat_exclusions.csv")
    reporting.write_csv(
        excl_path, ["row", "reason", "bodyfat", "height", "siri_gap"],
        [[e["row"], e["reason"], reporting.fmt(e["bodyfat"]),
          reporting.fmt(e["height"]), reporting.fmt(e["siri_gap"])]
         for e in report["cleaning"]["excluded"]])

    json_path = os.path.join(args.out_dir, "bodyfat_report.json")
    payload = {k: report[k] for k in ("theta", "beta", "selected",
                                      "g_selected", "r2", "lm_r2", "lam",
                                      "n_interior", "anchor", "converged",
                                      "iterations", "rss", "cleaning")}
    payload["meta"] = report["meta"]
    with open(json_path, "w") as fh:
        json.dump(reporting._jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")

    outputs = [coef_path, excl_path, json_path]
    if not args.no_figures:
        outputs.append(reporting.render_bodyfat_curves(
            report, os.path.join(args.out_dir, "bodyfat_curves.png")))

    manifest = reporting.RunManifest(
        command="bodyfat",
        config={"rules": report["meta"]["rules"],
                "standardize_x": report["meta"]["standardize_x"],
                "n_lambdas": args.n_lambdas, "k_grid": args.k_grid,
                "folds": args.folds},
        seed=args.seed,
        input_digest=reporting.file_digest(args.input),
        outputs=[os.path.basename(p) for p in outputs],
    )
    manifest.write(args.out_dir)
    return EXIT_OK


def cmd_plot_data(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    rase_path = os.path.join(args.campaign_dir, "rase_samples.csv")
    if not os.path.exists(rase_path):
        raise DataError(f"campaign output not found: {rase_path}")
    with open(rase_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rase_rows = [row for row in reader if row]
    if not rase_rows:
        raise DataError(f"no replication records in {rase_path}")

    outputs, by_method = reporting.write_boxplot_stats(rase_rows, args.out_dir)
    if not args.no_figures:
        outputs.append(reporting.render_rase_boxplot(
            by_method, os.path.join(args.out_dir, "rase_boxplot.png")))
        for name in sorted(os.listdir(args.campaign_dir)):
            if name.startswith("curves_") and name.endswith(".csv"):
                method = name[len("curves_"):-len(".csv")]
                with open(os.path.join(args.campaign_dir, name), newline="") as fh:
                    reader = csv.reader(fh)
                    next(reader)
                    arr = np.array([[float(v) for v in row]
                                    for row in reader if row])
                outputs.append(reporting.render_curve_figure(
                    arr[:, 0], arr[:, [1, 3]], {method: arr[:, [2, 4]]},
                    os.path.join(args.out_dir, f"curves_{method}.png")))

    manifest = reporting.RunManifest(
        command="plot-data",
        config={"campaign_dir": os.path.abspath(args.campaign_dir)},
        seed=args.seed,
        input_digest=reporting.file_digest(rase_path),
        outputs=[os.path.basename(p) for p in outputs],
    )
    manifest.write(args.out_dir)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "cv": cmd_cv,
    "bodyfat": cmd_bodyfat,
    "plot-data": cmd_plot_data,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (DataError, OSError) as exc:
        _fail(EXIT_DATA, "data", exc)
    except (NumericalError, np.linalg.LinAlgError, ValueError) as exc:
        _fail(EXIT_NUMERIC, "numerical", exc)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
