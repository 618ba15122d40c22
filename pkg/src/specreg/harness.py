"""End-to-end convergence-rate experiment.

For each sample size n and repetition j a dataset is drawn with a seed mixed
from (base_seed, n, j), the kernel matrix is decomposed once, and every
requested (filter, c) pair is fitted with nu = c n^(beta / (s beta + 1)). The
L^2 error against the target is computed by composite Simpson, and a log-log
least-squares line through the per-n mean errors gives the empirical rate.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from .estimator import FittedEstimator, NonPSDGramError, decompose, regularization_from_n
from .filters import Filter, get_filter
from .mercer import Interval, Kernel, get_kernel
from .targets import SAMPLER, SeriesTarget, get_target, sample_data

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ExperimentConfig",
    "PRESETS",
    "load_config",
    "repetition_seed",
    "l2_error_simpson",
    "ResultRow",
    "SummaryRow",
    "RateReport",
    "simulate",
    "run_experiment",
    "summarize",
    "fit_rate",
    "emit_csv",
    "read_raw_csv",
    "emit_plot",
    "write_outputs",
    "OUTPUT_ENV",
]

log = logging.getLogger(__name__)

OUTPUT_ENV = "SPECREG_OUTPUT_DIR"
RAW_HEADER = ["n", "repetition", "seed", "nu", "error"]
SUMMARY_HEADER = ["n", "mean_error", "std_error", "count"]
RATE_HEADER = ["slope", "intercept", "r_squared", "theoretical_rate"]
ERROR_METRICS = ("l2", "l2_squared")


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: str = "min"
    filters: tuple = ("krr",)
    tau: float = 2.0
    tau_cap: float = 8.0
    target: str = "min_series"
    s: float = 0.4
    truncation: int = 3000
    beta: float = 2.0
    c: tuple = (1.0,)
    n_grid: tuple = (200, 400, 800, 1200, 1600, 2000)
    repetitions: int = 20
    noise_sigma: float = 1.0
    test_points: int = 10_000
    base_seed: int = 0
    error_metric: str = "l2"
    workers: int = 1
    output_dir: str = "results"
    prefix: str = "experiment"

    def __post_init__(self):
        n = list(self.n_grid)
        if not n or any(b <= a for a, b in zip(n, n[1:])) or n[0] < 1:
            raise ValueError("n_grid must be strictly increasing positive integers")
        if self.test_points < 2 or self.test_points % 2:
            raise ValueError("test_points must be even and >= 2")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if any(c <= 0 for c in self.c) or not self.c:
            raise ValueError("c values must be positive")
        if self.error_metric not in ERROR_METRICS:
            raise ValueError(f"error_metric must be one of {ERROR_METRICS}")
        if self.base_seed < 0:
            raise ValueError("base_seed must be non-negative")

    def filter_objects(self) -> list[Filter]:
        return [get_filter(name, tau=self.tau, tau_cap=self.tau_cap) for name in self.filters]


PRESETS = {
    "desk": {},
    "paper": {"n_grid": tuple(range(1000, 5001, 100)), "repetitions": 50},
}

_LIST_KEYS = {"filters": str, "c": float, "n_grid": int}
_ALIASES = {"filter": "filters"}


def _coerce(key: str, value):
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    if key in _LIST_KEYS:
        items = value if isinstance(value, list) else [value]
        return tuple(_LIST_KEYS[key](v) for v in items)
    kind = type(fields[key].default)
    if kind is int and isinstance(value, float) and not value.is_integer():
        raise ValueError(f"{key} must be an integer")
    return kind(value)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a flat TOML config. ``preset = "paper"`` seeds the paper grid."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    return config_from_mapping(raw, **overrides)


def config_from_mapping(raw: dict, **overrides) -> ExperimentConfig:
    raw = dict(raw)
    preset = raw.pop("preset", "desk")
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = dict(PRESETS[preset])
    for key, value in raw.items():
        key = _ALIASES.get(key, key)
        if key not in known:
            raise ValueError(f"unknown config key {key!r}")
        if isinstance(value, dict):
            raise ValueError(f"config must be flat; {key!r} is a table")
        values[key] = _coerce(key, value)
    values.update(overrides)
    return ExperimentConfig(**values)


def repetition_seed(base_seed: int, n: int, repetition: int) -> int:
    """Stable 64-bit seed for one (n, repetition) cell."""
    ss = np.random.SeedSequence([int(base_seed), int(n), int(repetition)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


# --------------------------------------------------------------------------
# quadrature


def _simpson_l2(residuals: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.sqrt(simpson(residuals**2, x=x, axis=0))


def l2_error_simpson(est, t: SeriesTarget | Callable, panels: int = 10_000, domain: Interval | None = None) -> float:
    """(int (est - f*)^2 dx)^(1/2) by composite Simpson with ``panels`` panels.

    ``est`` is a :class:`FittedEstimator` or any vectorised callable; ``t`` is
    a series target or a vectorised callable on ``domain`` (default [0, 1]).
    """
    if panels < 2 or panels % 2:
        raise ValueError("panels must be even and >= 2")
    if isinstance(t, SeriesTarget):
        domain = t.domain
        truth = lambda x: t.grid_values(panels)
    else:
        domain = domain or Interval()
        truth = t
    x = np.linspace(domain.lo, domain.hi, panels + 1)
    resid = np.asarray(est(x), dtype=float) - np.asarray(truth(x), dtype=float)
    return float(_simpson_l2(resid, x))


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True, order=True)
class ResultRow:
    filter: str
    c: float
    n: int
    repetition: int
    seed: int = field(compare=False)
    nu: float = field(compare=False)
    error: float = field(compare=False)
    status: str = field(default="ok", compare=False)


@dataclass(frozen=True)
class SummaryRow:
    n: int
    mean_error: float
    std_error: float
    count: int


@dataclass(frozen=True)
class RateReport:
    slope: float
    intercept: float
    r_squared: float
    theoretical_rate: float
    summary: tuple = ()

    def within(self, lo: float, hi: float, min_r2: float) -> bool:
        return lo <= self.slope <= hi and self.r_squared >= min_r2


_CHUNK = 2000


def _errors_for(kernel, x_test, f_test, dec, coef: np.ndarray) -> np.ndarray:
    """Simpson L^2 errors of the estimators in the columns of ``coef``."""
    sq = np.zeros((len(x_test), coef.shape[1]))
    for i in range(0, len(x_test), _CHUNK):
        pred = kernel.gram(x_test[i : i + _CHUNK], dec.points) @ coef
        sq[i : i + _CHUNK] = (pred - f_test[i : i + _CHUNK, None]) ** 2
    return np.sqrt(simpson(sq, x=x_test, axis=0))


def simulate(
    kernel: Kernel,
    target: SeriesTarget,
    filters: Sequence[Filter],
    cs: Sequence[float],
    n_grid: Sequence[int],
    repetitions: int,
    noise_sigma: float,
    beta: float,
    s: float,
    test_points: int = 10_000,
    base_seed: int = 0,
    error_metric: str = "l2",
    workers: int = 1,
) -> list[ResultRow]:
    """Rows for every (filter, c, n, repetition), sorted in that order.

    Each dataset is decomposed once and shared by all filters and c values.
    A failed fit is recorded with ``status`` set to the exception name.
    """
    x_test = np.linspace(target.domain.lo, target.domain.hi, test_points + 1)
    f_test = target.grid_values(test_points)

    def cell(n: int, j: int) -> list[ResultRow]:
        seed = repetition_seed(base_seed, n, j)
        nus = [regularization_from_n(beta, s, c, n) for c in cs]
        data = sample_data(target, n, noise_sigma, seed)
        try:
            dec = decompose(kernel, data.x)
        except (NonPSDGramError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("fit failed at n=%d rep=%d: %s", n, j, exc)
            return [
                ResultRow(f.name, c, n, j, seed, nu, float("nan"), type(exc).__name__)
                for f in filters
                for c, nu in zip(cs, nus)
            ]
        coef = np.concatenate([dec.coefficient_matrix(f, nus, data.y) for f in filters], axis=1)
        errs = _errors_for(kernel, x_test, f_test, dec, coef)
        if error_metric == "l2_squared":
            errs = errs**2
        rows, k = [], 0
        for f in filters:
            for c, nu in zip(cs, nus):
                rows.append(ResultRow(f.name, float(c), n, j, seed, nu, float(errs[k])))
                k += 1
        return rows

    cells = [(n, j) for n in n_grid for j in range(repetitions)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(lambda a: cell(*a), cells))
    else:
        chunks = [cell(n, j) for n, j in cells]
    return sorted(row for chunk in chunks for row in chunk)


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Run the configured grid; a pure function of ``cfg``."""
    return simulate(
        kernel=get_kernel(cfg.kernel),
        target=get_target(cfg.target, cfg.s, cfg.truncation),
        filters=cfg.filter_objects(),
        cs=cfg.c,
        n_grid=cfg.n_grid,
        repetitions=cfg.repetitions,
        noise_sigma=cfg.noise_sigma,
        beta=cfg.beta,
        s=cfg.s,
        test_points=cfg.test_points,
        base_seed=cfg.base_seed,
        error_metric=cfg.error_metric,
        workers=cfg.workers,
    )


def group_rows(rows: Iterable[ResultRow]) -> dict:
    """{(filter, c): rows} preserving row order."""
    out: dict = {}
    for r in rows:
        out.setdefault((r.filter, r.c), []).append(r)
    return out


def summarize(rows: Iterable[ResultRow]) -> list[SummaryRow]:
    """Per-n mean and sample standard deviation over successful rows."""
    by_n: dict = {}
    for r in rows:
        if r.status == "ok" and np.isfinite(r.error):
            by_n.setdefault(r.n, []).append(r.error)
    out = []
    for n in sorted(by_n):
        e = np.asarray(by_n[n])
        std = float(e.std(ddof=1)) if len(e) > 1 else 0.0
        out.append(SummaryRow(n, float(e.mean()), std, len(e)))
    return out


def fit_rate(rows: Iterable[ResultRow], s: float = 0.4, beta: float = 2.0) -> RateReport:
    """Fit log(mean error) = r log n + b over the distinct n in ``rows``."""
    rows = list(rows)
    groups = {(r.filter, r.c) for r in rows}
    if len(groups) > 1:
        raise ValueError(f"rows mix {len(groups)} (filter, c) groups; fit one at a time")
    summary = summarize(rows)
    if len(summary) < 3:
        raise ValueError("rate fit needs at least three distinct n")
    n = np.array([r.n for r in summary], dtype=float)
    m = np.array([r.mean_error for r in summary])
    if np.any(m <= 0):
        raise ValueError("mean error must be positive at every n")
    ln, lm = np.log(n), np.log(m)
    slope, intercept = np.polyfit(ln, lm, 1)
    resid = lm - (slope * ln + intercept)
    ss_tot = float(((lm - lm.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return RateReport(float(slope), float(intercept), r2, -s * beta / (s * beta + 1.0), tuple(summary))


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if not np.isfinite(v):
        return repr(v)
    return np.format_float_positional(v, precision=12, unique=False, fractional=False, trim="-")


def emit_csv(obj, path) -> None:
    """Write raw rows, a summary, or a :class:`RateReport` as CSV.

    Raw rows from failed fits carry ``error:<ExceptionName>`` in the error
    column.
    """
    if isinstance(obj, RateReport):
        header = RATE_HEADER
        lines = [[obj.slope, obj.intercept, obj.r_squared, obj.theoretical_rate]]
    else:
        items = list(obj)
        if items and isinstance(items[0], SummaryRow):
            header = SUMMARY_HEADER
            lines = [[r.n, r.mean_error, r.std_error, r.count] for r in items]
        else:
            header = RAW_HEADER
            lines = [
                [r.n, r.repetition, r.seed, r.nu, r.error if r.status == "ok" else f"error:{r.status}"]
                for r in items
            ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for line in lines:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in line])


def read_raw_csv(path, filter: str = "", c: float = 0.0) -> list[ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != RAW_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for rec in reader:
            err, status = rec["error"], "ok"
            if err.startswith("error:"):
                status, err = err.split(":", 1)[1], "nan"
            rows.append(
                ResultRow(filter, c, int(rec["n"]), int(rec["repetition"]), int(rec["seed"]), float(rec["nu"]), float(err), status)
            )
    return rows


def emit_plot(summary: Sequence[SummaryRow], rate: RateReport, path, title: str = "") -> None:
    """Log-log SVG: mean error, a one-standard-deviation band, and the dashed fit."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    summary = list(summary)
    if len(summary) < 2:
        raise ValueError("plot needs at least two n values")
    n = np.array([r.n for r in summary], dtype=float)
    m = np.array([r.mean_error for r in summary])
    sd = np.array([r.std_error for r in summary])
    with matplotlib.rc_context({"svg.fonttype": "none", "svg.hashsalt": "specreg", "svg.id": None}):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        ax.fill_between(n, np.clip(m - sd, m * 1e-3, None), m + sd, color="tab:green", alpha=0.3, lw=0)
        ax.plot(n, m, color="tab:blue", marker="o", ms=3, label="mean error")
        ax.plot(n, np.exp(rate.intercept) * n**rate.slope, "k--", lw=1, label="least-squares fit")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("n")
        ax.set_ylabel("L2 error")
        ax.text(0.05, 0.08, f"r = {rate.slope:.3f}", transform=ax.transAxes)
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right", fontsize=8)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def output_dir(cfg: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def write_outputs(cfg: ExperimentConfig, rows: Sequence[ResultRow]) -> list[Path]:
    """Raw, summary and rate CSVs plus an SVG for each (filter, c) group."""
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for (fname, c), group in group_rows(rows).items():
        stem = out / f"{cfg.prefix}_{cfg.kernel}_{fname}_c{_fmt(c)}"
        paths = [Path(f"{stem}_{kind}") for kind in ("raw.csv", "summary.csv", "rate.csv", "plot.svg")]
        emit_csv(group, paths[0])
        emit_csv(summarize(group), paths[1])
        written += paths[:2]
        try:
            rate = fit_rate(group, cfg.s, cfg.beta)
        except ValueError as exc:
            log.warning("no rate for %s c=%s: %s", fname, c, exc)
            continue
        emit_csv(rate, paths[2])
        emit_plot(rate.summary, rate, paths[3], title=f"{cfg.kernel} / {fname} / c={_fmt(c)}")
        written += paths[2:]
    meta = out / f"{cfg.prefix}_{cfg.kernel}_metadata.toml"
    with open(meta, "w") as fh:
        for f in dataclasses.fields(cfg):
            fh.write(f"{f.name} = {_toml(getattr(cfg, f.name))}\n")
        fh.write(f'sampler = "{SAMPLER}"\n')
    written.append(meta)
    return written


def _toml(v) -> str:
    if isinstance(v, str):
        return f'"{v}"'
    if isinstance(v, tuple):
        return "[" + ", ".join(_toml(x) for x in v) + "]"
    return repr(v)
