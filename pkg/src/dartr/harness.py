"""Monte Carlo convergence studies and report emission.

A study fixes one operator/kernel pair and sweeps mesh sizes, noise
levels, and noise seeds; every cell fits the kernel with each requested
penalty and records the weighted error against the known truth.  Per-seed
convergence rates (log-error versus log-mesh slopes) are aggregated into
mean/spread summaries, and everything is written out as CSV tables plus
vector-graphic figures.

All randomness is derived from the master seed and the cell coordinates,
so studies are reproducible cell by cell and insensitive to execution
order.
"""

import csv
import hashlib
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import (
    RegressionData,
    estimate_support,
    exploration_measure,
    regression_system,
    slab_gNf,
)
from .errors import (
    ConfigError,
    DartrError,
    DegenerateFit,
    DegenerateSupport,
    NoCandidates,
    NumericalError,
)
from .estimator import FitOptions, fit_regression_data
from .grids import l2rho_error, l2rho_norm, make_uniform_grid
from .operators import (
    GENERATOR_TOL,
    OperatorKind,
    clean_forward_samples,
    dataset_with_noise,
    kernel_by_tag,
    standard_u_set,
)
from .regsolve import RegularizerKind

#: Paper-scale sweep, hours of compute; the reduced defaults stay desk-scale.
FULL_SCALE_DX = tuple(0.0125 * m for m in (1, 2, 4, 8, 16))
FULL_SCALE_SEEDS = 20

_CONFIG_KEYS = {
    "operator",
    "kernel",
    "x_min",
    "x_max",
    "dx_list",
    "nsr_list",
    "n_seeds",
    "seed",
    "regularizers",
    "basis",
    "bspline_degree",
    "dimension_fractions",
    "n_lambda",
    "rank_tol",
    "out_dir",
    "workers",
}


@dataclass(frozen=True)
class StudyConfig:
    """Full description of one convergence study."""

    operator: OperatorKind
    kernel: str
    dx_list: tuple = (0.2, 0.1, 0.05, 0.025)
    nsr_list: tuple = (0.0, 0.1, 0.5, 1.0, 2.0)
    n_seeds: int = 5
    seed: int = 0
    regularizers: tuple = (
        RegularizerKind.L2_COEFF,
        RegularizerKind.L2_RHO,
        RegularizerKind.RKHS,
    )
    basis: str = "piecewise-constant"
    bspline_degree: int = 2
    dimension_fractions: tuple = None
    n_lambda: int = 40
    rank_tol: float = 1e-12
    x_min: float = -40.0
    x_max: float = 40.0
    out_dir: str = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "operator", OperatorKind(self.operator))
        object.__setattr__(
            self, "regularizers", tuple(RegularizerKind(r) for r in self.regularizers)
        )
        object.__setattr__(self, "dx_list", tuple(float(d) for d in self.dx_list))
        object.__setattr__(self, "nsr_list", tuple(float(s) for s in self.nsr_list))
        if not self.dx_list or any(d <= 0 for d in self.dx_list):
            raise ConfigError("dx_list must hold positive mesh sizes")
        if any(s < 0 for s in self.nsr_list) or not self.nsr_list:
            raise ConfigError("nsr_list must hold nonnegative ratios")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if not self.regularizers:
            raise ConfigError("at least one regularizer is required")
        kernel_by_tag(self.kernel)  # validates the tag
        for dx in self.dx_list:
            try:
                make_uniform_grid(self.x_min, self.x_max, dx)
            except DartrError as exc:
                raise ConfigError(f"x-domain incompatible with dx={dx}: {exc}")

    @classmethod
    def from_mapping(cls, mapping):
        unknown = set(mapping) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "operator" not in mapping or "kernel" not in mapping:
            raise ConfigError("config must name an operator and a kernel")
        kwargs = dict(mapping)
        try:
            kwargs["operator"] = OperatorKind(kwargs["operator"])
        except ValueError as exc:
            raise ConfigError(str(exc))
        for key in ("dx_list", "nsr_list", "regularizers", "dimension_fractions"):
            if key in kwargs and kwargs[key] is not None:
                kwargs[key] = tuple(kwargs[key])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc))

    @classmethod
    def from_yaml(cls, path):
        import yaml

        with open(path, "r", encoding="utf-8") as fh:
            mapping = yaml.safe_load(fh)
        if not isinstance(mapping, dict):
            raise ConfigError(f"{path} does not hold a configuration mapping")
        return cls.from_mapping(mapping)

    def full_scale(self):
        """Paper-scale variant: finest meshes and 20 seeds."""
        return replace(self, dx_list=FULL_SCALE_DX, n_seeds=FULL_SCALE_SEEDS)


@dataclass(frozen=True)
class CellKey:
    """Coordinates of one study cell."""

    nsr: float
    dx: float
    seed_index: int
    regularizer: RegularizerKind


@dataclass
class CellResult:
    """Outcome of one (noise level, mesh, seed, penalty) cell."""

    operator: str
    kernel: str
    nsr: float
    dx: float
    seed: int
    regularizer: str
    n: int
    lam: float
    loss: float
    l2rho_error: float
    wall_time_s: float
    error: str = ""

    @property
    def ok(self):
        return self.error == ""


@dataclass(frozen=True)
class RateSummary:
    """Convergence-rate statistics for one (noise, penalty) group."""

    operator: str
    kernel: str
    nsr: float
    regularizer: str
    mean_rate: float
    sd_rate: float
    n_seeds: int
    rates: tuple = ()


@dataclass
class StudyArtifacts:
    """Everything a finished study produced."""

    config: StudyConfig
    cells: list
    rates: list
    profiles: list = field(default_factory=list)


def cell_noise_seed(master_seed, operator, kernel, nsr, dx, seed_index):
    """Deterministic per-cell seed, insensitive to execution order."""
    key = f"{master_seed}|{operator}|{kernel}|{nsr!r}|{dx!r}|{seed_index}"
    digest = hashlib.sha256(key.encode()).digest()
    return int.from_bytes(digest[:8], "big")


def grid_midpoints(r_grid):
    """Centers of the mesh cells whose right edges are the grid radii."""
    return r_grid.points - r_grid.dx / 2.0


def select_dimension(candidates):
    """Candidate with the smallest loss; ties favor the smaller dimension.

    ``candidates`` holds ``(triplet, EstimatorResult)`` pairs, one per
    admissible dimension.
    """
    if not candidates:
        raise NoCandidates("dimension selection needs at least one candidate")
    ordered = sorted(candidates, key=lambda pair: pair[1].space.n)
    best = ordered[0][1]
    for _, result in ordered[1:]:
        if result.loss < best.loss:
            best = result
    return best


def fit_rate(errors):
    """Least-squares slope of log error against log mesh size.

    Raises
    ------
    DegenerateFit
        With fewer than two distinct mesh sizes or nonpositive errors.
    """
    pairs = [(float(d), float(e)) for d, e in errors]
    if len({d for d, _ in pairs}) < 2:
        raise DegenerateFit("rate fitting needs at least two distinct mesh sizes")
    if any(e <= 0 for _, e in pairs):
        raise DegenerateFit("rate fitting needs positive errors")
    xs = np.log([d for d, _ in pairs])
    ys = np.log([e for _, e in pairs])
    return float(np.polyfit(xs, ys, 1)[0])


@dataclass
class PreparedGrid:
    """Noise-independent state shared by every cell at one mesh size."""

    operator: OperatorKind
    kernel_tag: str
    x_grid: object
    u_samples: np.ndarray
    f_clean: np.ndarray
    rho_full: object
    support_radius: float  # None when the data carries no kernel signal
    regression: RegressionData = None  # gNf slot is the clean one
    slabs: np.ndarray = None
    system_cache: dict = field(default_factory=dict)


def prepare_grid(cfg, dx, tol=GENERATOR_TOL):
    """Generate clean data and the noise-independent matrices for one mesh."""
    kernel = kernel_by_tag(cfg.kernel)
    x_grid = make_uniform_grid(cfg.x_min, cfg.x_max, dx)
    u_list = standard_u_set(cfg.operator)
    u_samples, f_clean = clean_forward_samples(cfg.operator, kernel, u_list, x_grid, tol=tol)
    clean = dataset_with_noise(cfg.operator, cfg.kernel, x_grid, u_samples, f_clean, 0.0, 0)
    rho_full = exploration_measure(clean)
    prepared = PreparedGrid(
        operator=cfg.operator,
        kernel_tag=cfg.kernel,
        x_grid=x_grid,
        u_samples=u_samples,
        f_clean=f_clean,
        rho_full=rho_full,
        support_radius=None,
    )
    try:
        R = estimate_support(clean, rho_full)
    except DegenerateSupport:
        return prepared  # no kernel signal anywhere; cells report zero kernels
    rd, slabs = regression_system(clean, R)
    prepared.support_radius = R
    prepared.regression = rd
    prepared.slabs = slabs
    return prepared


def _fit_options(cfg, regularizer):
    return FitOptions(
        regularizer=regularizer,
        basis=cfg.basis,
        bspline_degree=cfg.bspline_degree,
        dimension_fractions=cfg.dimension_fractions,
        n_lambda=cfg.n_lambda,
        rank_tol=cfg.rank_tol,
    )


def _truth_error(kernel, space, coefficients, rd):
    mids = grid_midpoints(rd.r_grid)
    truth = kernel(mids)
    estimate = space.evaluate(coefficients, mids)
    return l2rho_error(estimate, truth, rd.rho)


def run_cell(cfg, key, prepared=None):
    """Execute the full pipeline for one study cell.

    A dataset whose outputs carry no signal at all (an identically-zero
    kernel) yields the zero estimate rather than an error: nothing is
    identifiable and the zero kernel reproduces the data exactly.

    Returns
    -------
    CellResult

    Raises
    ------
    NumericalError
        Any upstream failure, its message tagged with the failing stage.
    """
    kernel = kernel_by_tag(cfg.kernel)
    start = time.perf_counter()
    stage = "generate"
    try:
        if prepared is None:
            prepared = prepare_grid(cfg, key.dx)
        noise_seed = cell_noise_seed(
            cfg.seed, cfg.operator.value, cfg.kernel, key.nsr, key.dx, key.seed_index
        )
        ds = dataset_with_noise(
            cfg.operator,
            cfg.kernel,
            prepared.x_grid,
            prepared.u_samples,
            prepared.f_clean,
            key.nsr,
            noise_seed,
        )
        if prepared.support_radius is None:
            # zero-signal data: report the zero kernel on the explored radii
            rho = prepared.rho_full
            truth = kernel(grid_midpoints(rho.r_grid))
            err = l2rho_norm(truth, rho)
            return CellResult(
                operator=cfg.operator.value,
                kernel=cfg.kernel,
                nsr=key.nsr,
                dx=key.dx,
                seed=key.seed_index,
                regularizer=key.regularizer.value,
                n=0,
                lam=0.0,
                loss=0.0,
                l2rho_error=err,
                wall_time_s=time.perf_counter() - start,
            )
        stage = "assembly"
        base = prepared.regression
        gNf = slab_gNf(prepared.slabs, ds.f_samples, ds.dx)
        rd = RegressionData(base.r_grid, base.G, gNf, base.rho)
        stage = "solve"
        report = fit_regression_data(
            rd, _fit_options(cfg, key.regularizer), prepared.system_cache
        )
        stage = "evaluate"
        err = _truth_error(kernel, report.result.space, report.result.coefficients, rd)
    except NumericalError as exc:
        raise type(exc)(f"[stage={stage}] {exc}") from exc
    return CellResult(
        operator=cfg.operator.value,
        kernel=cfg.kernel,
        nsr=key.nsr,
        dx=key.dx,
        seed=key.seed_index,
        regularizer=key.regularizer.value,
        n=report.result.space.n,
        lam=report.result.lam,
        loss=report.result.loss,
        l2rho_error=err,
        wall_time_s=time.perf_counter() - start,
    )


def _showcase_coordinates(cfg):
    """Cell used for the estimator-profile figure: the mesh nearest 0.05
    and the noise level nearest 1."""
    dx = min(cfg.dx_list, key=lambda d: abs(d - 0.05))
    nsr = min(cfg.nsr_list, key=lambda s: abs(s - 1.0))
    return dx, nsr


def _dx_block(cfg, dx):
    """All cells sharing one mesh size, plus any showcase profiles."""
    prepared = prepare_grid(cfg, dx)
    kernel = kernel_by_tag(cfg.kernel)
    showcase_dx, showcase_nsr = _showcase_coordinates(cfg)
    cells = []
    profiles = []
    for nsr in cfg.nsr_list:
        for seed_index in range(cfg.n_seeds):
            for reg in cfg.regularizers:
                key = CellKey(nsr=nsr, dx=dx, seed_index=seed_index, regularizer=reg)
                try:
                    cell = run_cell(cfg, key, prepared)
                except NumericalError as exc:
                    cell = CellResult(
                        operator=cfg.operator.value,
                        kernel=cfg.kernel,
                        nsr=nsr,
                        dx=dx,
                        seed=seed_index,
                        regularizer=reg.value,
                        n=0,
                        lam=float("nan"),
                        loss=float("nan"),
                        l2rho_error=float("nan"),
                        wall_time_s=0.0,
                        error=str(exc),
                    )
                cells.append(cell)
                want_profile = (
                    cell.ok
                    and dx == showcase_dx
                    and nsr == showcase_nsr
                    and seed_index == 0
                    and prepared.support_radius is not None
                )
                if want_profile:
                    profiles.append(_profile_rows(cfg, kernel, prepared, key))
    return cells, profiles


def _profile_rows(cfg, kernel, prepared, key):
    """Estimator-versus-truth profile data for one showcase cell."""
    noise_seed = cell_noise_seed(
        cfg.seed, cfg.operator.value, cfg.kernel, key.nsr, key.dx, key.seed_index
    )
    ds = dataset_with_noise(
        cfg.operator,
        cfg.kernel,
        prepared.x_grid,
        prepared.u_samples,
        prepared.f_clean,
        key.nsr,
        noise_seed,
    )
    base = prepared.regression
    gNf = slab_gNf(prepared.slabs, ds.f_samples, ds.dx)
    rd = RegressionData(base.r_grid, base.G, gNf, base.rho)
    report = fit_regression_data(rd, _fit_options(cfg, key.regularizer), prepared.system_cache)
    mids = grid_midpoints(rd.r_grid)
    return {
        "operator": cfg.operator.value,
        "kernel": cfg.kernel,
        "nsr": key.nsr,
        "dx": key.dx,
        "regularizer": key.regularizer.value,
        "r": mids,
        "truth": kernel(mids),
        "estimate": report.result.space.evaluate(report.result.coefficients, mids),
        "rho": rd.rho.weights,
    }


def _aggregate_rates(cfg, cells):
    """Per-seed slopes averaged into one summary per (noise, penalty)."""
    summaries = []
    for nsr in cfg.nsr_list:
        for reg in cfg.regularizers:
            rates = []
            for seed_index in range(cfg.n_seeds):
                pairs = [
                    (c.dx, c.l2rho_error)
                    for c in cells
                    if c.ok
                    and c.nsr == nsr
                    and c.seed == seed_index
                    and c.regularizer == reg.value
                    and c.l2rho_error > 0
                ]
                try:
                    rates.append(fit_rate(pairs))
                except DegenerateFit:
                    continue
            if not rates:
                continue
            arr = np.asarray(rates)
            summaries.append(
                RateSummary(
                    operator=cfg.operator.value,
                    kernel=cfg.kernel,
                    nsr=nsr,
                    regularizer=reg.value,
                    mean_rate=float(arr.mean()),
                    sd_rate=float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
                    n_seeds=int(arr.size),
                    rates=tuple(float(r) for r in arr),
                )
            )
    return summaries


def run_study(cfg):
    """Execute every cell of a study and aggregate convergence rates.

    Cells run grouped by mesh size (optionally across worker processes);
    failed cells are recorded with their stage-tagged error, excluded from
    the rate fits, and never abort the study.  When the config names an
    output directory the full report is written there.

    Returns
    -------
    (list of CellResult, list of RateSummary)
    """
    blocks = []
    if cfg.workers > 1 and len(cfg.dx_list) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_dx_block, cfg, dx) for dx in cfg.dx_list]
            blocks = [f.result() for f in futures]
    else:
        blocks = [_dx_block(cfg, dx) for dx in cfg.dx_list]

    cells = [cell for block, _ in blocks for cell in block]
    profiles = [row for _, rows in blocks for row in rows]
    reg_order = {r.value: i for i, r in enumerate(cfg.regularizers)}
    cells.sort(key=lambda c: (c.nsr, c.dx, c.seed, reg_order[c.regularizer]))
    rates = _aggregate_rates(cfg, cells)
    if cfg.out_dir is not None:
        emit_report(StudyArtifacts(cfg, cells, rates, profiles), cfg.out_dir)
    return cells, rates


# -- report emission ------------------------------------------------------------

_CELLS_HEADER = [
    "operator", "kernel", "nsr", "dx", "seed", "regularizer",
    "n", "lambda", "loss", "l2rho_error", "wall_time_s",
]
_RATES_HEADER = [
    "operator", "kernel", "nsr", "regularizer", "mean_rate", "sd_rate", "n_seeds",
]


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def emit_report(artifacts, out_dir):
    """Write the CSV tables, plot-data files, and figures for a study.

    Produces ``cells.csv`` (one row per successful cell), ``rates.csv``,
    ``failures.csv`` when any cell failed, the plot-data tables
    ``error_vs_dx.csv`` and ``profiles.csv``, and matching SVG figures.
    Timing values are real measurements and are the only nondeterministic
    column; everything else is a pure function of the config.
    """
    if not artifacts.cells:
        raise ConfigError("nothing to report: the study produced no cells")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    ok_cells = [c for c in artifacts.cells if c.ok]
    failures = [c for c in artifacts.cells if not c.ok]
    written.append(_write_csv(
        out / "cells.csv",
        _CELLS_HEADER,
        [
            [c.operator, c.kernel, c.nsr, c.dx, c.seed, c.regularizer,
             c.n, c.lam, c.loss, c.l2rho_error, c.wall_time_s]
            for c in ok_cells
        ],
    ))
    written.append(_write_csv(
        out / "rates.csv",
        _RATES_HEADER,
        [
            [r.operator, r.kernel, r.nsr, r.regularizer,
             r.mean_rate, r.sd_rate, r.n_seeds]
            for r in artifacts.rates
        ],
    ))
    if failures:
        written.append(_write_csv(
            out / "failures.csv",
            ["operator", "kernel", "nsr", "dx", "seed", "regularizer", "error"],
            [
                [c.operator, c.kernel, c.nsr, c.dx, c.seed, c.regularizer, c.error]
                for c in failures
            ],
        ))

    medians = _error_vs_dx_rows(ok_cells)
    written.append(_write_csv(
        out / "error_vs_dx.csv",
        ["operator", "kernel", "nsr", "regularizer", "dx",
         "median_l2rho_error", "median_loss"],
        medians,
    ))
    if artifacts.profiles:
        rows = []
        for p in artifacts.profiles:
            for r, truth, est, rho in zip(p["r"], p["truth"], p["estimate"], p["rho"]):
                rows.append([
                    p["operator"], p["kernel"], p["nsr"], p["dx"],
                    p["regularizer"], r, truth, est, rho,
                ])
        written.append(_write_csv(
            out / "profiles.csv",
            ["operator", "kernel", "nsr", "dx", "regularizer",
             "r", "truth", "estimate", "rho"],
            rows,
        ))
    written.extend(render_figures(artifacts, out))
    return written


def _error_vs_dx_rows(cells):
    groups = {}
    for c in cells:
        groups.setdefault((c.operator, c.kernel, c.nsr, c.regularizer, c.dx), []).append(c)
    rows = []
    for key in sorted(groups):
        bucket = groups[key]
        med_err = float(np.median([c.l2rho_error for c in bucket]))
        med_loss = float(np.median([c.loss for c in bucket]))
        rows.append([*key, med_err, med_loss])
    return rows


def render_figures(artifacts, out_dir):
    """Render the error-decay and profile figures as SVG."""
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "dartr"
    from matplotlib.figure import Figure

    out = Path(out_dir)
    written = []
    ok_cells = [c for c in artifacts.cells if c.ok and c.l2rho_error > 0]
    if ok_cells:
        regs = sorted({c.regularizer for c in ok_cells})
        fig = Figure(figsize=(4.2 * len(regs), 3.6))
        axes = fig.subplots(1, len(regs), squeeze=False)[0]
        for ax, reg in zip(axes, regs):
            for nsr in sorted({c.nsr for c in ok_cells}):
                pts = {}
                for c in ok_cells:
                    if c.regularizer == reg and c.nsr == nsr:
                        pts.setdefault(c.dx, []).append(c.l2rho_error)
                if not pts:
                    continue
                dxs = sorted(pts)
                ax.loglog(dxs, [np.median(pts[d]) for d in dxs], "o-", label=f"nsr={nsr:g}")
            ax.set_xlabel("mesh size")
            ax.set_ylabel("weighted L2 error")
            ax.set_title(reg)
            ax.legend(fontsize=7)
        fig.suptitle(f"{artifacts.config.operator.value} / {artifacts.config.kernel}")
        path = out / "error_vs_dx.svg"
        fig.savefig(path, metadata={"Date": None})
        written.append(path)
    if artifacts.profiles:
        fig = Figure(figsize=(4.2 * len(artifacts.profiles), 3.6))
        axes = fig.subplots(1, len(artifacts.profiles), squeeze=False)[0]
        for ax, p in zip(axes, artifacts.profiles):
            scale = max(np.max(np.abs(p["truth"])), 1e-12)
            rho_scaled = p["rho"] / max(np.max(p["rho"]), 1e-300) * scale
            ax.fill_between(p["r"], 0, rho_scaled, color="cyan", alpha=0.3,
                            label="measure (scaled)")
            ax.plot(p["r"], p["truth"], "k-", label="truth")
            ax.plot(p["r"], p["estimate"], "r--", label="estimate")
            ax.set_title(f'{p["regularizer"]} (nsr={p["nsr"]:g}, dx={p["dx"]:g})')
            ax.set_xlabel("r")
            ax.legend(fontsize=7)
        path = out / "profiles.svg"
        fig.savefig(path, metadata={"Date": None})
        written.append(path)
    return written
