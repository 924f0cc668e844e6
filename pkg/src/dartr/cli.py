"""Command-line interface.

Subcommands
-----------
generate : write synthetic dataset files described by a study config
fit      : fit one dataset file, dumping the estimator and its L-curve
study    : run a full Monte Carlo convergence study and write its report
report   : rebuild plot data and figures from previously written CSVs

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 I/O failure.
"""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DartrError
from .harness import (
    CellResult,
    RateSummary,
    StudyArtifacts,
    StudyConfig,
    cell_noise_seed,
    emit_report,
    run_study,
)
from .lcurve import build_lcurve
from .operators import (
    clean_forward_samples,
    dataset_with_noise,
    kernel_by_tag,
    load_dataset,
    save_dataset,
    standard_u_set,
)
from .estimator import RadialKernelRegressor
from .grids import make_uniform_grid
from .regsolve import RegularizerKind

_REG_CHOICES = ("l2", "L2", "rkhs", "all")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    parser = _Parser(prog="dartr", description="Learn radial kernels in operators.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="YAML study config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--regularizer", choices=_REG_CHOICES, default=None)
        p.add_argument("--full", action="store_true",
                       help="paper-scale meshes and seed count")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)

    common(sub.add_parser("generate", help="write synthetic dataset files"))
    fit = sub.add_parser("fit", help="fit one dataset file")
    fit.add_argument("--data", required=True, help="dataset CSV written by generate")
    fit.add_argument("--out", default=".", help="output directory")
    fit.add_argument("--regularizer", choices=_REG_CHOICES, default="rkhs")
    fit.add_argument("--basis", default="piecewise-constant",
                     choices=("piecewise-constant", "bspline"))
    fit.add_argument("--n-lambda", type=int, default=40)
    common(sub.add_parser("study", help="run a Monte Carlo convergence study"))
    report = sub.add_parser("report", help="re-render plots from study CSVs")
    report.add_argument("--out", required=True, help="directory holding cells.csv")
    return parser


def _load_config(args):
    cfg = StudyConfig.from_yaml(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if args.regularizer not in (None, "all"):
        cfg = replace(cfg, regularizers=(RegularizerKind(args.regularizer),))
    if args.full:
        cfg = cfg.full_scale()
    return cfg


def _cmd_generate(args):
    cfg = _load_config(args)
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    kernel = kernel_by_tag(cfg.kernel)
    u_list = standard_u_set(cfg.operator)
    for dx in cfg.dx_list:
        x_grid = make_uniform_grid(cfg.x_min, cfg.x_max, dx)
        u_samples, f_clean = clean_forward_samples(cfg.operator, kernel, u_list, x_grid)
        for nsr in cfg.nsr_list:
            seed = cell_noise_seed(cfg.seed, cfg.operator.value, cfg.kernel, nsr, dx, 0)
            ds = dataset_with_noise(
                cfg.operator, cfg.kernel, x_grid, u_samples, f_clean, nsr, seed
            )
            name = f"dataset_{cfg.operator.value}_{cfg.kernel}_dx{dx:g}_nsr{nsr:g}.csv"
            save_dataset(ds, out / name)
            print(out / name)
    return 0


def _cmd_fit(args):
    ds = load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = (
        [RegularizerKind(args.regularizer)]
        if args.regularizer != "all"
        else list(RegularizerKind)
    )
    for kind in kinds:
        model = RadialKernelRegressor(
            regularizer=kind.value, basis=args.basis, n_lambda=args.n_lambda
        )
        model.fit(ds)
        est_path = out / f"estimator_{kind.value}.csv"
        model.result_.write(est_path)
        curve_path = out / f"lcurve_{kind.value}.csv"
        model.lcurve_.write(curve_path)
        print(
            f"{kind.value}: n={model.n_basis_} lambda={model.lambda_:.6g} "
            f"loss={model.loss_:.6g} -> {est_path}"
        )
    return 0


def _cmd_study(args):
    cfg = _load_config(args)
    if cfg.out_dir is None:
        cfg = replace(cfg, out_dir="dartr-study")
    cells, rates = run_study(cfg)
    print(f"{len(cells)} cells, {len(rates)} rate summaries -> {cfg.out_dir}")
    for r in rates:
        print(
            f"  nsr={r.nsr:g} {r.regularizer}: rate {r.mean_rate:.3f} "
            f"+- {r.sd_rate:.3f} ({r.n_seeds} seeds)"
        )
    return 0


def _read_cells(path):
    cells = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cells.append(CellResult(
                operator=row["operator"],
                kernel=row["kernel"],
                nsr=float(row["nsr"]),
                dx=float(row["dx"]),
                seed=int(row["seed"]),
                regularizer=row["regularizer"],
                n=int(row["n"]),
                lam=float(row["lambda"]),
                loss=float(row["loss"]),
                l2rho_error=float(row["l2rho_error"]),
                wall_time_s=float(row["wall_time_s"]),
            ))
    return cells


def _read_rates(path):
    rates = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rates.append(RateSummary(
                operator=row["operator"],
                kernel=row["kernel"],
                nsr=float(row["nsr"]),
                regularizer=row["regularizer"],
                mean_rate=float(row["mean_rate"]),
                sd_rate=float(row["sd_rate"]),
                n_seeds=int(row["n_seeds"]),
            ))
    return rates


def _read_profiles(path):
    import numpy as np

    groups = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["operator"], row["kernel"], row["nsr"], row["dx"],
                   row["regularizer"])
            groups.setdefault(key, []).append(row)
    profiles = []
    for key, rows in groups.items():
        profiles.append({
            "operator": key[0],
            "kernel": key[1],
            "nsr": float(key[2]),
            "dx": float(key[3]),
            "regularizer": key[4],
            "r": np.array([float(r["r"]) for r in rows]),
            "truth": np.array([float(r["truth"]) for r in rows]),
            "estimate": np.array([float(r["estimate"]) for r in rows]),
            "rho": np.array([float(r["rho"]) for r in rows]),
        })
    return profiles


def _cmd_report(args):
    out = Path(args.out)
    cells_path = out / "cells.csv"
    if not cells_path.exists():
        raise ConfigError(f"{cells_path} not found; run a study first")
    cells = _read_cells(cells_path)
    if not cells:
        raise ConfigError(f"{cells_path} holds no cells")
    rates = _read_rates(out / "rates.csv") if (out / "rates.csv").exists() else []
    profiles = (
        _read_profiles(out / "profiles.csv") if (out / "profiles.csv").exists() else []
    )
    cfg = StudyConfig(operator=cells[0].operator, kernel=cells[0].kernel)
    written = emit_report(StudyArtifacts(cfg, cells, rates, profiles), out)
    for path in written:
        print(path)
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "fit": _cmd_fit,
    "study": _cmd_study,
    "report": _cmd_report,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DartrError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
