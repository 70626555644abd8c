"""Filters for a constant intensity X in [a, A] observed through a Poisson process.

Y_t = N_t is sufficient for X given the path up to t, so every filter here is
a function of (t, N_t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .distributions import DiscreteDistribution


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class DcScenario:
    lo: float
    hi: float
    horizon: float
    truth: float

    def __post_init__(self):
        if not (0 < self.lo < self.hi):
            raise ValueError("need 0 < lo < hi")
        if not (self.lo <= self.truth <= self.hi):
            raise ValueError("truth must lie in [lo, hi]")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")


def poisson_posterior_mean(prior: DiscreteDistribution, t, count):
    """E[X | N_t = count] under a discrete prior, in the log domain."""
    a = prior.atoms
    if np.any(a <= 0):
        raise ValueError("prior atoms must be positive")
    t_arr = np.asarray(t, float)
    c_arr = np.asarray(count, float)
    tt, cc = np.broadcast_arrays(t_arr, c_arr)
    logw = np.log(prior.probs) + cc[..., None] * np.log(a) - tt[..., None] * a
    logw = logw - logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    out = (w @ a) / w.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def ml_clipped(t, count, lo: float, hi: float):
    """min(max(lo, count / t), hi); returns lo at t = 0."""
    t_arr = np.asarray(t, float)
    c_arr = np.asarray(count, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(t_arr > 0, c_arr / np.where(t_arr > 0, t_arr, 1.0), lo)
    out = np.clip(raw, lo, hi)
    return float(out) if out.ndim == 0 else out


def uniform_prior_filter(t: float, count: int, lo: float, hi: float) -> float:
    """Posterior mean of X ~ Uniform[lo, hi] given N_t = count.

    Uses (count+1)/t + (e^{-lo t} lo^{count+1} - e^{-hi t} hi^{count+1}) / (t J),
    J = int_lo^hi e^{-x t} x^count dx, with every exponential scaled by the
    integrand's maximum on [lo, hi].
    """
    if t <= 0:
        return 0.5 * (lo + hi)
    return _uniform_cached(float(t), int(count), float(lo), float(hi))


@lru_cache(maxsize=200_000)
def _uniform_cached(t: float, y: int, lo: float, hi: float) -> float:
    def logf(x):
        return y * math.log(x) - x * t

    mode = min(max(y / t, lo), hi)
    m = logf(mode)
    pts = [mode] if lo < mode < hi else None
    J, err = integrate.quad(lambda x: math.exp(logf(x) - m), lo, hi, points=pts,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    if not (J > 0) or err > 1e-10 * J:
        raise QuadratureError(f"uniform-prior integral failed (relative error {err / max(J, 1e-300):.3g})")
    boundary = math.exp(logf(lo) + math.log(lo) - m) - math.exp(logf(hi) + math.log(hi) - m)
    est = (y + 1) / t + boundary / (t * J)
    span = hi - lo
    if not (lo - 1e-7 * span <= est <= hi + 1e-7 * span):
        raise QuadratureError(f"uniform-prior estimate {est} left [{lo}, {hi}]")
    return min(max(est, lo), hi)


# --------------------------------------------------------------------------
# Path filters: estimate at every grid time from (t, N_t)


def bayes_path_filter(prior: DiscreteDistribution):
    return lambda path: poisson_posterior_mean(prior, path.grid, path.y)


def ml_path_filter(lo: float, hi: float):
    return lambda path: ml_clipped(path.grid, path.y, lo, hi)


def uniform_path_filter(lo: float, hi: float):
    def filt(path):
        return np.array([uniform_prior_filter(t, int(c), lo, hi) for t, c in zip(path.grid, path.y)])

    return filt


def discretized_uniform(lo: float, hi: float, atoms: int = 400) -> DiscreteDistribution:
    """Midpoint discretization of Uniform[lo, hi]."""
    h = (hi - lo) / atoms
    return DiscreteDistribution(lo + h * (np.arange(atoms) + 0.5), np.full(atoms, 1.0 / atoms))

