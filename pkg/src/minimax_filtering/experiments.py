"""Experiment configuration, validation and end-to-end runs.

Two experiments are provided. ``fig1`` estimates a sparse signal in a Haar
basis from white-Gaussian-noise observations; ``fig2`` estimates a constant
Poisson intensity. Each run writes a result table, an SVG plot of the mean
running loss, and a JSON manifest with the resolved config and checksums.
"""

from __future__ import annotations

import hashlib
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .capacity import ChannelModel, ConstraintSet, solve_capacity
from .distributions import DiscreteDistribution, DistributionError
from .gaussian_filter import CoefficientPrior, GramPathFilters, PiecewiseMinimaxFilter, haar_basis, sufficient_stats_path
from .poisson_filter import bayes_path_filter, ml_path_filter, uniform_path_filter
from .simulation import (HALF_SQUARED, NATURAL_POISSON, loss_values, simulate_basis_signal, simulate_poisson,
                         stderr, trial_rng)

SCHEMA_VERSION = 1
TRUTH_SALT = 1 << 62  # separates signal draws from noise draws for the same (seed, trial)

FIG1_FILTERS = ("minimax", "ml-hard", "linear", "genie")
FIG2_FILTERS = ("minimax", "ml", "uniform")

DEFAULTS = {
    "fig1": {
        "schema_version": SCHEMA_VERSION, "experiment": "fig1", "n": 7, "k": 2, "power_db": 4.0,
        "duty_cycle": None, "horizon": 10.0, "basis": "haar", "prior": "auto", "prior_atoms": 5,
        "stop_tol": 1e-5, "trials": 100, "dt": 0.01, "seed": 7, "units": "nats",
        "filters": list(FIG1_FILTERS), "plot": True,
    },
    "fig2": {
        "schema_version": SCHEMA_VERSION, "experiment": "fig2", "lo": 0.5, "hi": 2.0, "horizon": 10.0,
        "truths": [0.5, 1.0, 1.5, 2.0], "random_truth": True, "prior": "auto", "stop_tol": 1e-5,
        "trials": 100, "dt": 0.01, "seed": 7, "units": "nats", "filters": list(FIG2_FILTERS), "plot": True,
    },
}

REQUIRED = {
    "fig1": ("n", "k", "power_db", "horizon", "trials", "dt", "seed"),
    "fig2": ("lo", "hi", "horizon", "truths", "trials", "dt", "seed"),
}


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = list(diagnostics)


# --------------------------------------------------------------------------
# Configuration


@dataclass
class ExperimentConfig:
    values: dict
    source: str = "<defaults>"
    lines: dict = field(default_factory=dict)

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    def __getitem__(self, key):
        return self.values[key]

    @classmethod
    def defaults(cls, experiment: str, **overrides) -> "ExperimentConfig":
        if experiment not in DEFAULTS:
            raise ConfigError([f"unknown experiment {experiment!r}; choose fig1 or fig2"])
        vals = dict(DEFAULTS[experiment])
        vals.update({k: v for k, v in overrides.items() if v is not None})
        return cls(vals)

    @classmethod
    def from_text(cls, text: str, source: str = "<string>", fill_defaults: bool = True) -> "ExperimentConfig":
        try:
            root = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = f":{mark.line + 1}" if mark is not None else ""
            raise ConfigError([f"{source}{line}: cannot parse config: {getattr(exc, 'problem', exc)}"]) from None
        if not isinstance(data, dict):
            raise ConfigError([f"{source}:1: config must be a mapping of field names to values"])
        lines = {}
        if root is not None and isinstance(root, yaml.MappingNode):
            for k, _ in root.value:
                lines[k.value] = k.start_mark.line + 1
        vals = dict(data)
        if fill_defaults and vals.get("experiment") in DEFAULTS:
            merged = dict(DEFAULTS[vals["experiment"]])
            for key in REQUIRED[vals["experiment"]]:
                merged.pop(key, None)  # required fields must be given explicitly
            merged.update(vals)
            vals = merged
        return cls(vals, source, lines)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError([f"{p}: config file not found"])
        return cls.from_text(p.read_text(), str(p))

    def base_dir(self) -> Path:
        return Path(self.source).parent if Path(self.source).exists() else Path(".")

    def to_text(self) -> str:
        return yaml.safe_dump(self.values, sort_keys=True)


def _where(cfg: ExperimentConfig, key: str) -> str:
    line = cfg.lines.get(key)
    return f"{cfg.source}:{line}" if line else cfg.source


def validate(cfg: ExperimentConfig) -> list[str]:
    """Schema and semantic checks; an empty list means the config is runnable."""
    v = cfg.values
    diags = []

    def bad(key, msg):
        diags.append(f"{_where(cfg, key)}: {key}: {msg}")

    if v.get("schema_version") != SCHEMA_VERSION:
        bad("schema_version", f"expected {SCHEMA_VERSION}, got {v.get('schema_version')!r}")
    exp = v.get("experiment")
    if exp not in DEFAULTS:
        bad("experiment", f"must be one of {sorted(DEFAULTS)}, got {exp!r}")
        return diags
    known = set(DEFAULTS[exp])
    for key in v:
        if key not in known:
            bad(key, "unknown field")
    for key in REQUIRED[exp]:
        if key not in v or v[key] is None:
            diags.append(f"{cfg.source}: {key}: missing required field")

    def num(key, positive=True, integer=False, allow_zero=False):
        if key not in v or v[key] is None:
            return None
        x = v[key]
        if isinstance(x, bool) or not isinstance(x, (int, float)) or (integer and not float(x).is_integer()):
            bad(key, f"must be {'an integer' if integer else 'a number'}, got {x!r}")
            return None
        if positive and (x < 0 or (x == 0 and not allow_zero)):
            bad(key, f"must be {'nonnegative' if allow_zero else 'positive'}, got {x!r}")
            return None
        return x

    trials = num("trials", integer=True)
    dt = num("dt")
    T = num("horizon")
    num("seed", integer=True, allow_zero=True)
    if dt is not None and T is not None:
        steps = T / dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1):
            bad("dt", f"must divide the horizon {T}")
    if trials is not None and trials < 1:
        bad("trials", "must be >= 1")
    if v.get("units", "nats") not in ("nats", "bits"):
        bad("units", "must be 'nats' or 'bits'")
    num("stop_tol")
    roster = FIG1_FILTERS if exp == "fig1" else FIG2_FILTERS
    filters = v.get("filters", list(roster))
    if not isinstance(filters, list) or not filters or any(f not in roster for f in filters):
        bad("filters", f"must be a nonempty list drawn from {list(roster)}")

    if exp == "fig1":
        n = num("n", integer=True)
        k = num("k", integer=True, allow_zero=True)
        num("power_db", positive=False)
        if n is not None and k is not None and k > n:
            bad("k", f"must not exceed n={n}")
        if v.get("basis", "haar") != "haar":
            bad("basis", "only 'haar' is supported")
        q = v.get("duty_cycle")
        if q is not None and not (isinstance(q, (int, float)) and 0 < q <= 1):
            bad("duty_cycle", f"must lie in (0, 1], got {q!r}")
        num("prior_atoms", integer=True)
        _check_prior(cfg, diags, positive=False)
    else:
        lo = num("lo")
        hi = num("hi")
        if lo is not None and hi is not None and hi <= lo:
            bad("hi", f"must exceed lo={lo}")
        truths = v.get("truths")
        if not isinstance(truths, list) or not truths:
            if "truths" in v:
                bad("truths", "must be a nonempty list")
        elif lo is not None and hi is not None:
            for x in truths:
                if not isinstance(x, (int, float)) or not (lo <= x <= hi):
                    bad("truths", f"value {x!r} outside [lo, hi] = [{lo}, {hi}]")
        _check_prior(cfg, diags, positive=True, lo=lo, hi=hi)
    return diags


def _check_prior(cfg, diags, positive: bool, lo=None, hi=None):
    prior = cfg.values.get("prior", "auto")
    if prior == "auto":
        return
    path = Path(prior)
    if not path.is_absolute():
        path = cfg.base_dir() / path
    if not path.exists():
        diags.append(f"{_where(cfg, 'prior')}: prior: file {prior!r} does not exist (use 'auto' to solve for it)")
        return
    try:
        d = DiscreteDistribution.from_text(path.read_text())
    except DistributionError as exc:
        diags.append(f"{_where(cfg, 'prior')}: prior: {path}: {exc}")
        return
    if positive and np.any(d.atoms <= 0):
        diags.append(f"{_where(cfg, 'prior')}: prior: atom {d.atoms[d.atoms <= 0][0]:g} violates positivity; "
                     "poisson intensities must satisfy lo > 0")
    if positive and lo is not None and hi is not None and np.any((d.atoms < lo) | (d.atoms > hi)):
        diags.append(f"{_where(cfg, 'prior')}: prior: atoms must lie in [lo, hi] = [{lo}, {hi}]")


def load_prior(cfg: ExperimentConfig) -> tuple[DiscreteDistribution, dict]:
    """Prior from file, or from the capacity solver when ``prior: auto``."""
    v = cfg.values
    if v.get("prior", "auto") != "auto":
        path = Path(v["prior"])
        if not path.is_absolute():
            path = cfg.base_dir() / path
        d = DiscreteDistribution.from_text(path.read_text())
        return d, {"source": str(path)}
    if cfg.experiment == "fig1":
        P = 10 ** (v["power_db"] / 10)
        q = v.get("duty_cycle") or v["k"] / v["n"]
        res = solve_capacity(ChannelModel.awgn(), ConstraintSet(avg_power=P, duty_cycle=q), stop_tol=v["stop_tol"])
    else:
        res = solve_capacity(ChannelModel.poisson(v["horizon"]), ConstraintSet(peak_lo=v["lo"], peak_hi=v["hi"]),
                             stop_tol=v["stop_tol"])
    return res.prior, {"source": "auto", "capacity": res.to_dict()}


# --------------------------------------------------------------------------
# Runs


@dataclass
class CurveStats:
    """Per-trial running-loss curves for one (filter, source) cell."""

    totals: list = field(default_factory=list)
    curve_sum: np.ndarray | None = None

    def add(self, running: np.ndarray):
        self.totals.append(float(running[-1]))
        self.curve_sum = running.copy() if self.curve_sum is None else self.curve_sum + running

    @property
    def mean(self) -> float:
        return float(np.mean(self.totals))

    @property
    def se(self) -> float:
        return stderr(self.totals)

    def mean_curve(self) -> np.ndarray:
        return self.curve_sum / len(self.totals)


def _running(x, xhat, grid, loss):
    from scipy.integrate import cumulative_trapezoid

    return cumulative_trapezoid(loss_values(x, xhat, loss), grid, initial=0.0)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    grid: np.ndarray
    cells: dict  # (filter, source) -> CurveStats
    prior: DiscreteDistribution
    prior_info: dict
    worst: dict = field(default_factory=dict)  # filter -> source

    def table(self) -> str:
        scale = 1.0 if self.config.values.get("units", "nats") == "nats" else 1 / math.log(2)
        lines = ["filter,source,cmle,stderr,trials"]
        for (f, s), c in self.cells.items():
            lines.append(f"{f},{s},{c.mean * scale:.10g},{c.se * scale:.10g},{len(c.totals)}")
        for f, s in self.worst.items():
            c = self.cells[(f, s)]
            lines.append(f"{f},worst-case:{s},{c.mean * scale:.10g},{c.se * scale:.10g},{len(c.totals)}")
        return "\n".join(lines) + "\n"


def run_fig1(cfg: ExperimentConfig, prior: DiscreteDistribution | None = None, prior_info=None) -> ExperimentResult:
    v = cfg.values
    n, k, T, dt, seed, trials = int(v["n"]), int(v["k"]), float(v["horizon"]), float(v["dt"]), int(v["seed"]), int(v["trials"])
    P = 10 ** (v["power_db"] / 10)
    if prior is None:
        prior, prior_info = load_prior(cfg)
    coord = prior.pruned(int(v.get("prior_atoms", 5)))
    basis = haar_basis(n, T)
    filters = list(v.get("filters", FIG1_FILTERS))
    minimax = PiecewiseMinimaxFilter(basis, CoefficientPrior.iid(coord, n)) if "minimax" in filters else None
    gram_filters = None
    cells = {(f, "random"): CurveStats() for f in filters}
    grid = None
    for trial in range(trials):
        rng = trial_rng(seed, TRUTH_SALT + trial)
        support = np.sort(rng.choice(n, size=k, replace=False))
        a = np.zeros(n)
        a[support] = rng.normal(0.0, math.sqrt(n * P / k), size=k)
        path = simulate_basis_signal(a, basis, dt, seed, trial)
        if gram_filters is None:
            grid = path.grid
            gram_filters = GramPathFilters(basis, grid)
        ys = sufficient_stats_path(path, basis)
        for f in filters:
            if f == "minimax":
                xhat = minimax(path)
            elif f == "ml-hard":
                xhat = gram_filters.ml(ys, hard_k=k)
            elif f == "linear":
                xhat = gram_filters.linear(ys, P)
            else:
                xhat = gram_filters.genie(ys, support, P)
            cells[(f, "random")].add(_running(path.x, xhat, path.grid, HALF_SQUARED))
    return ExperimentResult(cfg, grid, cells, coord, prior_info or {})


def run_fig2(cfg: ExperimentConfig, prior: DiscreteDistribution | None = None, prior_info=None) -> ExperimentResult:
    v = cfg.values
    lo, hi, T, dt = float(v["lo"]), float(v["hi"]), float(v["horizon"]), float(v["dt"])
    seed, trials = int(v["seed"]), int(v["trials"])
    if prior is None:
        prior, prior_info = load_prior(cfg)
    filters = list(v.get("filters", FIG2_FILTERS))
    fns = {"minimax": bayes_path_filter(prior), "ml": ml_path_filter(lo, hi), "uniform": uniform_path_filter(lo, hi)}
    sources = {f"x={float(x):g}": float(x) for x in v["truths"]}
    cells = {}
    grid = None
    for s, x in sources.items():
        for f in filters:
            cells[(f, s)] = CurveStats()
        for trial in range(trials):
            path = simulate_poisson(x, T, dt, seed, trial)
            grid = path.grid
            for f in filters:
                cells[(f, s)].add(_running(path.x, fns[f](path), path.grid, NATURAL_POISSON))
    worst = {f: max(sources, key=lambda s: cells[(f, s)].mean) for f in filters}
    if v.get("random_truth", True):
        for f in filters:
            cells[(f, "uniform-random")] = CurveStats()
        for trial in range(trials):
            x = float(trial_rng(seed, TRUTH_SALT + trial).uniform(lo, hi))
            path = simulate_poisson(x, T, dt, seed, trial)
            for f in filters:
                cells[(f, "uniform-random")].add(_running(path.x, fns[f](path), path.grid, NATURAL_POISSON))
    return ExperimentResult(cfg, grid, cells, prior, prior_info or {}, worst)


def run_experiment(cfg: ExperimentConfig, **kw) -> ExperimentResult:
    diags = validate(cfg)
    if diags:
        raise ConfigError(diags)
    return (run_fig1 if cfg.experiment == "fig1" else run_fig2)(cfg, **kw)


def plot_curves(result: ExperimentResult, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "minimax-filtering"
    fig, ax = plt.subplots(figsize=(6, 4))
    if result.worst:
        for f, s in result.worst.items():
            ax.plot(result.grid, result.cells[(f, s)].mean_curve(), label=f"{f} ({s})")
        ax.set_title("worst-case running loss")
    else:
        for (f, s), c in result.cells.items():
            ax.plot(result.grid, c.mean_curve(), label=f)
        ax.set_title("average running loss")
    ax.set_xlabel("t")
    ax.set_ylabel("mean of int_0^t loss ds (nats)" if result.config.experiment == "fig2" else "mean of int_0^t loss ds")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_outputs(result: ExperimentResult, out_dir, plot: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result.config.experiment
    artifacts = {}
    table = out / f"{name}_table.csv"
    table.write_text(result.table())
    artifacts["table"] = table
    prior = out / f"{name}_prior.csv"
    prior.write_text(result.prior.to_text())
    artifacts["prior"] = prior
    if plot and result.config.values.get("plot", True):
        svg = out / f"{name}_curves.svg"
        plot_curves(result, svg)
        artifacts["plot"] = svg
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "package_version": __version__,
        "config": result.config.values,
        "seed": result.config.values["seed"],
        "trial_keys": "noise: Philox(seed, trial); truth: Philox(seed, 2**62 + trial)",
        "prior": {"atoms": result.prior.atoms.tolist(), "probs": result.prior.probs.tolist(), **result.prior_info},
        "artifacts": {k: {"path": p.name, "sha256": _sha256(p)} for k, p in artifacts.items()},
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
    }
    mpath = out / f"{name}_manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")
    artifacts["manifest"] = mpath
    return artifacts
