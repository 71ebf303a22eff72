"""Command-line entry point: balance, dose-response and simulation runs.

Exit codes form a stable scripting contract: 0 success, 1 input error,
2 solver non-convergence (outputs still written, with a warning), 3 bootstrap
failure, 4 degenerate simulation scenario.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .data import Dataset, uniform_weights
from .diagnostics import balance_report, render_balance_table
from .drf import DrfPipeline, attach_bootstrap, bootstrap_se, default_grid, estimate_drf
from .errors import (
    EbctError,
    MissingColumn,
    NotConverged,
    ParseError,
    ResampleDegenerate,
    ScenarioDegenerate,
)
from .simulation import (
    METHODS,
    SAMPLE_SIZES,
    ScenarioConfig,
    paper_grid,
    render_grid_table,
    run_grid,
    write_grid_csv,
)
from .weighting import estimate_weights

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_BOOTSTRAP_FAILED = 3
EXIT_SCENARIO_DEGENERATE = 4


@dataclass
class RunConfig:
    """Parsed command configuration."""

    command: str
    input_path: Optional[Path] = None
    treatment_col: str = ""
    outcome_col: Optional[str] = None
    covariate_cols: tuple = ()
    method: str = "ebct"
    truncation_threshold: Optional[float] = None
    drf_degree: int = 3
    bootstrap_reps: int = 1000
    grid_points: int = 50
    seed: int = 0
    output_dir: Path = Path(".")
    force: bool = False
    jobs: int = 1


def read_csv(
    path,
    treatment_col: str,
    covariate_cols,
    outcome_col: Optional[str] = None,
) -> Dataset:
    """Parse a header-first, comma-delimited UTF-8 file into a Dataset.

    Rows are counted from 1 including the header, so the first data row is
    row 2. An ``id`` column, when present, supplies unit identifiers;
    otherwise the data-row index is used.
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, "", "<empty file>") from None
        rows = list(reader)

    positions = {name: i for i, name in enumerate(header)}
    wanted = [treatment_col, *covariate_cols]
    if outcome_col:
        wanted.append(outcome_col)
    for name in wanted:
        if name not in positions:
            raise MissingColumn(name)

    def parse_column(name: str) -> np.ndarray:
        col = positions[name]
        values = np.empty(len(rows))
        for i, row in enumerate(rows):
            cell = row[col] if col < len(row) else ""
            try:
                values[i] = float(cell)
            except ValueError:
                raise ParseError(i + 2, name, cell) from None
        return values

    treatment = parse_column(treatment_col)
    covariates = (
        np.column_stack([parse_column(name) for name in covariate_cols])
        if covariate_cols
        else np.empty((len(rows), 0))
    )
    outcome = parse_column(outcome_col) if outcome_col else None

    if "id" in positions:
        ids = tuple(row[positions["id"]] for row in rows)
    else:
        ids = tuple(range(1, len(rows) + 1))
    names = (treatment_col, *covariate_cols, outcome_col or "Y")
    return Dataset(
        treatment=treatment,
        covariates=covariates,
        outcome=outcome,
        column_names=names,
        unit_ids=ids,
    )


def _prepare_outputs(directory: Path, filenames, force: bool) -> list:
    directory.mkdir(parents=True, exist_ok=True)
    paths = [directory / name for name in filenames]
    if not force:
        existing = [str(p) for p in paths if p.exists()]
        if existing:
            raise FileExistsError(
                f"refusing to overwrite {', '.join(existing)} (use --force)"
            )
    return paths


def _write_weights_csv(path: Path, dataset: Dataset, weights) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "weight"])
        for unit_id, weight in zip(dataset.unit_ids, weights.weights):
            writer.writerow([unit_id, repr(float(weight))])


def cmd_balance(config: RunConfig) -> int:
    """Estimate weights, write weights.csv, balance_report.json and a table."""
    dataset = read_csv(
        config.input_path, config.treatment_col, config.covariate_cols, config.outcome_col
    )
    weights_path, report_path, table_path = _prepare_outputs(
        config.output_dir,
        ["weights.csv", "balance_report.json", "balance_table.txt"],
        config.force,
    )

    exit_code = EXIT_OK
    try:
        weights = estimate_weights(
            dataset, config.method, truncation=config.truncation_threshold
        )
    except NotConverged as err:
        print(f"warning: {err}; writing outputs for the last iterate", file=sys.stderr)
        weights = err.weights
        exit_code = EXIT_NOT_CONVERGED

    unweighted = balance_report(uniform_weights(dataset.n), dataset, method_tag="unweighted")
    weighted = balance_report(weights, dataset)

    _write_weights_csv(weights_path, dataset, weights)
    payload = {
        "input": str(config.input_path),
        "method": weights.method_tag,
        "converged": weights.converged,
        "iterations": weights.iterations,
        "truncation_threshold": config.truncation_threshold,
        "unweighted": unweighted.to_dict(),
        "weighted": weighted.to_dict(),
        "version": __version__,
    }
    report_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    table = render_balance_table([unweighted, weighted])
    table_path.write_text(table)
    print(table, end="")
    return exit_code


def cmd_drf(config: RunConfig) -> int:
    """Fit the dose-response polynomial and write drf.csv plus a sidecar."""
    if not config.outcome_col:
        raise MissingColumn("<outcome>")
    dataset = read_csv(
        config.input_path, config.treatment_col, config.covariate_cols, config.outcome_col
    )
    csv_path, meta_path = _prepare_outputs(
        config.output_dir, ["drf.csv", "drf.json"], config.force
    )

    exit_code = EXIT_OK
    try:
        weights = estimate_weights(
            dataset, config.method, truncation=config.truncation_threshold
        )
    except NotConverged as err:
        print(f"warning: {err}; continuing with the last iterate", file=sys.stderr)
        weights = err.weights
        exit_code = EXIT_NOT_CONVERGED

    grid = default_grid(dataset.treatment, config.grid_points)
    fit = estimate_drf(dataset, weights, degree=config.drf_degree, grid=grid)
    if config.bootstrap_reps > 0:
        pipeline = DrfPipeline(
            method=config.method,
            degree=config.drf_degree,
            truncation=config.truncation_threshold,
        )
        result = bootstrap_se(dataset, pipeline, config.bootstrap_reps, grid, config.seed)
        fit = attach_bootstrap(fit, result)

    fit.write_csv(csv_path)
    meta = {
        "input": str(config.input_path),
        "method": config.method,
        "degree": config.drf_degree,
        "bootstrap_reps": config.bootstrap_reps,
        "seed": config.seed,
        "grid_min": float(grid[0]),
        "grid_max": float(grid[-1]),
        "coefficients": [repr(float(c)) for c in fit.coefficients],
        "version": __version__,
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"grid range: [{grid[0]:.6g}, {grid[-1]:.6g}], {grid.size} points")
    return exit_code


def cmd_simulate(config: RunConfig, args) -> int:
    """Run one scenario cell or the full grid; write CSV plus text table."""
    if args.paper_grid:
        sizes = tuple(int(s) for s in args.sizes.split(",")) if args.sizes else SAMPLE_SIZES
        configs = paper_grid(
            sizes=sizes,
            replications=args.replications,
            methods=tuple(args.methods.split(",")),
            seed=config.seed,
        )
    else:
        cell_seed = int(
            np.random.SeedSequence(config.seed, spawn_key=(0,)).generate_state(1, np.uint64)[0]
        )
        configs = [
            ScenarioConfig(
                n=args.n,
                sigma=args.sigma,
                eta=args.eta,
                spec=args.spec,
                replications=args.replications,
                methods=tuple(args.methods.split(",")),
                master_seed=cell_seed,
            )
        ]

    csv_path, table_path, meta_path = _prepare_outputs(
        config.output_dir,
        ["scenarios.csv", "scenarios_table.txt", "scenarios.json"],
        config.force,
    )
    results = run_grid(configs, jobs=config.jobs)
    write_grid_csv(results, csv_path)
    table = render_grid_table(results)
    table_path.write_text(table)
    meta = {
        "seed": config.seed,
        "replications": args.replications,
        "methods": args.methods,
        "paper_grid": bool(args.paper_grid),
        "cells": len(configs),
        "version": __version__,
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(table, end="")
    return EXIT_OK


def _add_io_arguments(parser, outcome_required: bool) -> None:
    parser.add_argument("--input", required=True, help="input CSV file")
    parser.add_argument("--treatment-col", required=True, help="treatment column name")
    parser.add_argument(
        "--covariate-cols",
        required=True,
        help="comma-separated covariate column names",
    )
    parser.add_argument(
        "--outcome-col",
        required=outcome_required,
        default=None,
        help="outcome column name",
    )
    parser.add_argument(
        "--method", choices=("ebct", "ipw", "uniform"), default="ebct"
    )
    parser.add_argument(
        "--truncate",
        type=float,
        default=None,
        metavar="SHARE",
        help="cap on the maximum weight share, e.g. 0.04",
    )
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebct",
        description="Covariate-balancing weights for continuous treatments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    balance = sub.add_parser("balance", help="estimate weights and balance diagnostics")
    _add_io_arguments(balance, outcome_required=False)

    drf = sub.add_parser("drf", help="estimate the dose-response function")
    _add_io_arguments(drf, outcome_required=True)
    drf.add_argument("--degree", type=int, default=3, help="polynomial degree")
    drf.add_argument(
        "--bootstrap", type=int, default=1000, help="bootstrap replications (0 skips)"
    )
    drf.add_argument("--grid-points", type=int, default=50)
    drf.add_argument("--seed", type=int, default=0)

    simulate = sub.add_parser("simulate", help="run the bias/RMSE study")
    simulate.add_argument("--n", type=int, default=200, choices=SAMPLE_SIZES)
    simulate.add_argument("--sigma", type=float, default=4.0)
    simulate.add_argument("--eta", type=float, default=1.0)
    simulate.add_argument("--spec", type=int, default=1, choices=(1, 2, 3))
    simulate.add_argument("--replications", type=int, default=1000)
    simulate.add_argument(
        "--methods", default=",".join(METHODS), help="comma-separated method names"
    )
    simulate.add_argument(
        "--paper-grid",
        action="store_true",
        help="expand to the full scenario grid across all sample sizes",
    )
    simulate.add_argument(
        "--sizes", default=None, help="comma-separated sample sizes for --paper-grid"
    )
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument(
        "--jobs",
        type=int,
        default=int(os.environ.get("EBCT_JOBS", "1")),
        help="worker processes for scenario cells (default $EBCT_JOBS or 1)",
    )
    simulate.add_argument("--out", default=".", help="output directory")
    simulate.add_argument("--force", action="store_true")
    return parser


def _config_from_args(args) -> RunConfig:
    config = RunConfig(command=args.command)
    config.output_dir = Path(args.out)
    config.force = args.force
    if args.command in ("balance", "drf"):
        config.input_path = Path(args.input)
        config.treatment_col = args.treatment_col
        config.covariate_cols = tuple(
            name for name in args.covariate_cols.split(",") if name
        )
        config.outcome_col = args.outcome_col
        config.method = args.method
        config.truncation_threshold = args.truncate
    if args.command == "drf":
        config.drf_degree = args.degree
        config.bootstrap_reps = args.bootstrap
        config.grid_points = args.grid_points
        config.seed = args.seed
    if args.command == "simulate":
        config.seed = args.seed
        config.jobs = args.jobs
    return config


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _config_from_args(args)
    try:
        if args.command == "balance":
            return cmd_balance(config)
        if args.command == "drf":
            return cmd_drf(config)
        return cmd_simulate(config, args)
    except ResampleDegenerate as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BOOTSTRAP_FAILED
    except ScenarioDegenerate as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_SCENARIO_DEGENERATE
    except (EbctError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
