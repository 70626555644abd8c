"""Path simulation and Monte-Carlo estimation of causal estimation error.

Random numbers come from a Philox generator keyed by (seed, trial), so a
trial's draws do not depend on which other trials were run or in what order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .capacity import logsumexp, poisson_ymax
from .distributions import DiscreteDistribution

GAUSSIAN = "gaussian"
POISSON = "poisson"
HALF_SQUARED = "half-squared"
NATURAL_POISSON = "natural-poisson"


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    key = np.array([int(seed) & (2 ** 64 - 1), int(trial) & (2 ** 64 - 1)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def make_grid(T: float, dt: float) -> np.ndarray:
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise ValueError(f"dt={dt} must divide T={T}")
    return np.linspace(0.0, T, steps + 1)


@dataclass(frozen=True)
class PathRecord:
    """Sampled (X_t, Y_t) on a uniform grid; Y is cumulative."""

    grid: np.ndarray
    x: np.ndarray
    y: np.ndarray
    seed: int
    dt: float
    kind: str = GAUSSIAN
    trial: int = 0
    jumps: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (self.grid.size == self.x.size == self.y.size):
            raise ValueError("grid, x and y must have equal length")
        if self.kind == POISSON:
            if self.y[0] != 0 or np.any(np.diff(self.y) < 0):
                raise ValueError("counting path must start at 0 and be nondecreasing")

    @property
    def T(self) -> float:
        return float(self.grid[-1])


def simulate_awgn(x_fn, T: float, dt: float, seed: int, trial: int = 0, noise: bool = True) -> PathRecord:
    """Euler-Maruyama for dY = X_t dt + dW_t.

    ``x_fn`` maps an array of times to signal values (a scalar gives a DC signal).
    """
    grid = make_grid(T, dt)
    x = np.broadcast_to(x_fn(grid) if callable(x_fn) else np.float64(x_fn), grid.shape).astype(float)
    inc = x[:-1] * dt
    if noise:
        inc = inc + math.sqrt(dt) * trial_rng(seed, trial).standard_normal(grid.size - 1)
    y = np.concatenate([[0.0], np.cumsum(inc)])
    return PathRecord(grid, x, y, seed, dt, GAUSSIAN, trial)


def simulate_basis_signal(coef, basis, dt: float, seed: int, trial: int = 0, noise: bool = True) -> PathRecord:
    from .gaussian_filter import reconstruct

    return simulate_awgn(lambda t: reconstruct(coef, basis, t), basis.T, dt, seed, trial, noise)


def simulate_poisson(intensity: float, T: float, dt: float, seed: int, trial: int = 0) -> PathRecord:
    """Homogeneous Poisson counting process by exponential inter-arrival times."""
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    grid = make_grid(T, dt)
    rng = trial_rng(seed, trial)
    jumps = []
    t = 0.0
    batch = max(int(intensity * T * 1.5) + 16, 16)
    while True:
        gaps = rng.exponential(1.0 / intensity, size=batch)
        times = t + np.cumsum(gaps)
        jumps.append(times[times <= T])
        if times[-1] > T:
            break
        t = float(times[-1])
    jumps = np.concatenate(jumps)
    y = np.searchsorted(jumps, grid, side="right").astype(float)
    return PathRecord(grid, np.full(grid.size, float(intensity)), y, seed, dt, POISSON, trial, jumps)


# --------------------------------------------------------------------------
# Losses and cmle


def loss_values(x, xhat, loss: str) -> np.ndarray:
    x = np.asarray(x, float)
    xhat = np.asarray(xhat, float)
    if loss == HALF_SQUARED:
        return 0.5 * (x - xhat) ** 2
    if loss == NATURAL_POISSON:
        if np.any(xhat <= 0):
            raise ValueError("natural Poisson loss needs strictly positive estimates")
        with np.errstate(divide="ignore", invalid="ignore"):
            xlog = np.where(x > 0, x * np.log(x / xhat), 0.0)
        return xlog - x + xhat
    raise ValueError(f"unknown loss {loss!r}")


def path_loss(path: PathRecord, xhat, loss: str) -> float:
    """Trapezoidal time integral of the loss along one path."""
    return float(integrate.trapezoid(loss_values(path.x, xhat, loss), path.grid))


def path_loss_curve(path: PathRecord, xhat, loss: str) -> np.ndarray:
    """Running integral int_0^t l ds at every grid point."""
    return integrate.cumulative_trapezoid(loss_values(path.x, xhat, loss), path.grid, initial=0.0)


def cmle_estimate(filt: Callable[[PathRecord], np.ndarray], simulate: Callable[[int], PathRecord],
                  loss: str, trials: int) -> tuple[float, float]:
    """Monte-Carlo cmle: mean and standard error of the per-path loss integral.

    ``simulate(trial)`` returns the trial's path and ``filt(path)`` the causal
    estimate at every grid time. Trials are reduced in index order.
    """
    vals = cmle_samples(filt, simulate, loss, trials)
    return float(vals.mean()), stderr(vals)


def cmle_samples(filt, simulate, loss: str, trials: int) -> np.ndarray:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    out = np.empty(trials)
    for i in range(trials):
        path = simulate(i)
        out[i] = path_loss(path, filt(path), loss)
    return out


def stderr(vals) -> float:
    vals = np.asarray(vals, float)
    if vals.size < 2:
        return float("nan")
    return float(vals.std(ddof=1) / math.sqrt(vals.size))


# --------------------------------------------------------------------------
# DC sources: Bayes filters under a discrete mixture and the output-KL oracle


def dc_mixture_filter(mixture: DiscreteDistribution, kind: str):
    """Posterior-mean filter for a constant signal drawn from ``mixture``."""
    a = mixture.atoms
    logp = np.log(mixture.probs)

    def filt(path: PathRecord) -> np.ndarray:
        t = path.grid[:, None]
        y = path.y[:, None]
        if kind == GAUSSIAN:
            ll = a * y - 0.5 * a ** 2 * t
        else:
            ll = y * np.log(a) - a * t
        logw = logp + ll
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        return (w @ a) / w.sum(axis=1)

    return filt


def gaussian_dc_bayes_filter(path: PathRecord, prior_var: float = 1.0) -> np.ndarray:
    """E[X | Y_t] for X ~ N(0, prior_var) constant."""
    return prior_var * path.y / (1.0 + prior_var * path.grid)


def kl_output_oracle(source, mixture: DiscreteDistribution, kind: str, T: float) -> float:
    """D(P_{Y_T} || Q_{Y_T}) for a DC source against a discrete mixture.

    ``source`` is a constant x, or for the Gaussian channel a tuple
    ("normal", var) meaning X ~ N(0, var). Y_T is sufficient for DC signals,
    so this equals the path-space divergence.
    """
    if kind == GAUSSIAN:
        return _kl_gaussian(source, mixture, T)
    if kind == POISSON:
        return _kl_poisson(float(source), mixture, T)
    raise ValueError(f"unknown channel kind {kind!r}")


def _kl_gaussian(source, mixture: DiscreteDistribution, T: float) -> float:
    a, logp = mixture.atoms, np.log(mixture.probs)
    if isinstance(source, tuple):
        mu, var = 0.0, T + source[1] * T * T
    else:
        mu, var = float(source) * T, T
    sd = math.sqrt(var)

    def integrand(y):
        lp = -0.5 * (y - mu) ** 2 / var - 0.5 * math.log(2 * math.pi * var)
        lq = logsumexp(logp - 0.5 * (y - a * T) ** 2 / T) - 0.5 * math.log(2 * math.pi * T)
        return math.exp(lp) * (lp - lq)

    lo = min(mu - 12 * sd, a.min() * T - 12 * math.sqrt(T))
    hi = max(mu + 12 * sd, a.max() * T + 12 * math.sqrt(T))
    pts = np.unique(np.clip(np.concatenate([[mu], a * T]), lo, hi))
    val, err = integrate.quad(integrand, lo, hi, points=pts, epsabs=1e-11, epsrel=1e-12, limit=1000)
    if err > 1e-8:
        raise RuntimeError(f"KL quadrature error estimate {err:.3g}")
    return max(val, 0.0)


def _kl_poisson(x: float, mixture: DiscreteDistribution, T: float) -> float:
    if x <= 0:
        raise ValueError("poisson source must be positive")
    a, p = mixture.atoms, mixture.probs
    if np.any(a <= 0):
        return math.inf
    ymax = poisson_ymax(T * max(x, a.max()))
    y = np.arange(ymax + 1, dtype=float)
    lg = gammaln(y + 1)
    lp = y * math.log(x * T) - x * T - lg
    lq = logsumexp(np.log(p)[:, None] + y * np.log(a * T)[:, None] - (a * T)[:, None] - lg, axis=0)
    return max(float(np.sum(np.exp(lp) * (lp - lq))), 0.0)


# --------------------------------------------------------------------------
# Regret reports


@dataclass
class RegretRow:
    filter: str
    source: str
    cmle: float
    stderr: float
    regret: float
    kl: float | None = None


@dataclass
class RegretReport:
    rows: list
    trials: int

    def worst_case(self, filter_name: str) -> RegretRow:
        rows = [r for r in self.rows if r.filter == filter_name]
        return max(rows, key=lambda r: r.regret)

    @property
    def filters(self) -> list:
        return list(dict.fromkeys(r.filter for r in self.rows))

    def to_table(self) -> str:
        lines = ["filter,source,cmle,stderr,regret,kl"]
        for r in self.rows:
            kl = "" if r.kl is None else f"{r.kl:.10g}"
            lines.append(f"{r.filter},{r.source},{r.cmle:.10g},{r.stderr:.10g},{r.regret:.10g},{kl}")
        return "\n".join(lines) + "\n"


def regret_report(filters: Mapping[str, Callable], sources: Mapping[str, Callable[[int], PathRecord]],
                  loss: str, trials: int, benchmarks: Mapping[str, float] | None = None,
                  kl: Mapping[tuple, float] | None = None) -> RegretReport:
    """cmle and regret of every filter on every source.

    Sources are deterministic signals unless ``benchmarks`` supplies the
    cmle of the source's own Bayes filter. Every filter sees the same paths.
    """
    benchmarks = benchmarks or {}
    rows = []
    for sname, sim in sources.items():
        paths = [sim(i) for i in range(trials)]
        for fname, filt in filters.items():
            vals = np.array([path_loss(p, filt(p), loss) for p in paths])
            m = float(vals.mean())
            rows.append(RegretRow(fname, sname, m, stderr(vals), m - benchmarks.get(sname, 0.0),
                                  None if kl is None else kl.get((fname, sname))))
    return RegretReport(rows, trials)
