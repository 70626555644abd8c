"""Capacity-achieving input distributions for scalar Gaussian and Poisson channels.

For a fixed number of atoms the locations and probabilities are optimized
jointly by SQP, then the probabilities are polished by constrained
Blahut-Arimoto, whose KL projection supplies the Lagrange multipliers for the
power and duty-cycle costs. The atom count grows until the optimized mutual
information stops improving."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import gammaln

from .distributions import MERGE_TOL, DiscreteDistribution, normalize

logger = logging.getLogger(__name__)

AWGN = "awgn-unit-variance"
POISSON = "poisson-exposure"

BA_MAX_ITER = 10_000
KKT_WARN = 1e-3
PRUNE_MASS = 1e-12  # atoms lighter than this are dropped from the final prior
POISSON_TAIL = 1e-12
_GH_NODES = 160
_HALF_LOG_2PI_E = 0.5 * math.log(2 * math.pi * math.e)


class CapacityError(RuntimeError):
    """Numerical failure in a capacity computation.

    ``last_iterate`` carries the final input distribution when available.
    """

    def __init__(self, msg, last_iterate=None, achieved=None):
        super().__init__(msg)
        self.last_iterate = last_iterate
        self.achieved = achieved


class InfeasibleConstraints(ValueError):
    pass


@dataclass(frozen=True)
class ChannelModel:
    kind: str
    exposure: float | None = None

    def __post_init__(self):
        if self.kind not in (AWGN, POISSON):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.kind == POISSON and not (self.exposure is not None and self.exposure > 0):
            raise ValueError("poisson channel needs a positive exposure")

    @classmethod
    def awgn(cls) -> "ChannelModel":
        return cls(AWGN)

    @classmethod
    def poisson(cls, exposure: float) -> "ChannelModel":
        return cls(POISSON, float(exposure))


@dataclass(frozen=True)
class ConstraintSet:
    avg_power: float | None = None
    duty_cycle: float | None = None
    peak_lo: float | None = None
    peak_hi: float | None = None

    def check(self, channel: ChannelModel) -> None:
        if all(v is None for v in (self.avg_power, self.duty_cycle, self.peak_lo, self.peak_hi)):
            raise InfeasibleConstraints("at least one constraint is required")
        if self.duty_cycle is not None and not (0 < self.duty_cycle <= 1):
            raise InfeasibleConstraints("duty_cycle must lie in (0, 1]")
        if self.avg_power is not None and self.avg_power < 0:
            raise InfeasibleConstraints("avg_power must be nonnegative")
        if channel.kind == AWGN:
            if self.avg_power is None:
                raise InfeasibleConstraints("awgn capacity needs an average power constraint")
            if self.peak_lo is not None or self.peak_hi is not None:
                raise InfeasibleConstraints("peak constraints are only supported for the poisson channel")
        else:
            if self.peak_lo is None or self.peak_hi is None:
                raise InfeasibleConstraints("poisson capacity needs peak_lo and peak_hi")
            if self.peak_lo <= 0:
                raise InfeasibleConstraints("poisson inputs must satisfy peak_lo > 0")
            if self.peak_hi < self.peak_lo:
                raise InfeasibleConstraints("peak_hi must be >= peak_lo")
            if self.avg_power is not None or self.duty_cycle is not None:
                raise InfeasibleConstraints("power/duty constraints are only supported for awgn")


@dataclass
class CapacityResult:
    prior: DiscreteDistribution
    mi_nats: float
    kkt_slack: float
    atom_count_history: list = field(default_factory=list)
    multipliers: tuple = (0.0, 0.0)
    status: str = "ok"

    @property
    def mi_bits(self) -> float:
        return self.mi_nats / math.log(2)

    def to_dict(self) -> dict:
        return {
            "atoms": self.prior.atoms.tolist(),
            "probs": self.prior.probs.tolist(),
            "mi_nats": self.mi_nats,
            "mi_bits": self.mi_bits,
            "kkt_slack": self.kkt_slack,
            "multipliers": list(self.multipliers),
            "atom_count_history": [list(h) for h in self.atom_count_history],
            "status": self.status,
        }


def logsumexp(x, axis=None, b=None):
    """Plain numpy log-sum-exp (scipy's version is slow on tiny arrays)."""
    x = np.asarray(x, float)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    if b is not None:
        e = e * b
    s = np.sum(e, axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(s) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


# --------------------------------------------------------------------------
# Blahut-Arimoto on a finite channel matrix


def _row_divergences(W: np.ndarray, logW: np.ndarray, qy: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logq = np.log(qy)
    terms = np.where(W > 0, W * (logW - logq), 0.0)
    return terms.sum(axis=1)


def blahut_arimoto(transition, tol: float = 1e-9, max_iter: int = BA_MAX_ITER, init=None):
    """Capacity of a discrete memoryless channel.

    ``transition[i, j]`` is P(y=j | x=i). Returns ``(w, capacity)`` where ``w``
    is a DiscreteDistribution over the row indices. Iteration stops once the
    upper bound ``max_i D(W_i || q)`` is within ``tol`` of the achieved I.
    """
    W = np.asarray(transition, dtype=float)
    if W.ndim != 2 or W.shape[0] == 0:
        raise ValueError("transition must be a nonempty 2-D array")
    if np.any(W < 0) or np.any(np.abs(W.sum(axis=1) - 1) > 1e-9):
        raise ValueError("transition rows must be probability vectors")
    k = W.shape[0]
    with np.errstate(divide="ignore"):
        logW = np.where(W > 0, np.log(W), 0.0)
    p = np.full(k, 1.0 / k) if init is None else np.asarray(init, float) / np.sum(init)
    for _ in range(max_iter):
        d = _row_divergences(W, logW, p @ W)
        lower = float(p @ d)
        upper = float(d.max())
        if upper - lower < tol:
            return DiscreteDistribution(np.arange(k, dtype=float), p), max(lower, 0.0)
        logp = np.log(np.maximum(p, 1e-300)) + d
        p = np.exp(logp - logsumexp(logp))
    raise CapacityError(
        f"blahut_arimoto did not converge in {max_iter} iterations (gap {upper - lower:.3g})",
        last_iterate=p,
        achieved=lower,
    )


def kl_project(logits: np.ndarray, costs: np.ndarray, budgets: np.ndarray, lam0=None):
    """KL projection of softmax(logits) onto {p : p @ costs <= budgets}.

    Solves the dual min_{lam >= 0} logsumexp(logits - costs @ lam) + lam @ budgets
    by projected Newton with Armijo backtracking. Returns ``(p, lam)``.
    """
    r = budgets.size
    if r == 0:
        return np.exp(logits - logsumexp(logits)), np.zeros(0)
    lam = np.zeros(r) if lam0 is None else np.maximum(np.asarray(lam0, float), 0.0)

    def dual(l):
        return logsumexp(logits - costs @ l) + l @ budgets

    f = dual(lam)
    for _ in range(200):
        z = logits - costs @ lam
        p = np.exp(z - logsumexp(z))
        m = p @ costs
        g = budgets - m
        free = (lam > 0) | (g < 0)
        if not free.any() or np.abs(g[free]).max() < 1e-15 * (1.0 + np.abs(budgets).max()):
            break
        H = (costs * p[:, None]).T @ costs - np.outer(m, m)
        Hf = H[np.ix_(free, free)]
        step = np.zeros(r)
        # min-norm Newton step: costs may be collinear on the current atoms
        step[free] = np.linalg.lstsq(Hf, g[free], rcond=1e-12)[0]
        new, fn = _armijo(dual, lam, f, g, step)
        if fn >= f:
            grad_step = np.where(free, g, 0.0)
            new, fn = _armijo(dual, lam, f, g, grad_step / max(np.abs(grad_step).max(), 1e-300))
            if fn >= f:
                break
        moved = np.abs(new - lam).max()
        lam, f = new, fn
        if moved < 1e-14 * max(1.0, np.abs(lam).max()):
            break
    z = logits - costs @ lam
    return np.exp(z - logsumexp(z)), lam


def _armijo(fun, lam, f, g, step):
    t = 1.0
    while t >= 1e-12:
        new = np.maximum(lam - t * step, 0.0)
        fn = fun(new)
        if fn <= f - 1e-4 * (g @ (lam - new)):
            return new, fn
        t *= 0.5
    return lam, f


# --------------------------------------------------------------------------
# Per-channel information densities D(P_{Y|x} || Q_Y) and their x-derivatives


class _AwgnKernel:
    def __init__(self, n_nodes: int = _GH_NODES):
        z, w = np.polynomial.hermite_e.hermegauss(n_nodes)
        self.z = z
        self.w = w / w.sum()

    def divergence(self, xs, atoms, probs, deriv: bool = False, chunk: int = 2048):
        xs = np.atleast_1d(np.asarray(xs, float))
        logp = np.log(np.maximum(probs, 1e-300))
        D = np.empty(xs.size)
        dD = np.empty(xs.size) if deriv else None
        for s in range(0, xs.size, chunk):
            y = xs[s:s + chunk, None] + self.z[None, :]
            diff = y[:, :, None] - atoms[None, None, :]
            logits = logp - 0.5 * diff ** 2
            lq = logsumexp(logits, axis=2)
            D[s:s + chunk] = (-0.5 * self.z ** 2 - lq) @ self.w
            if deriv:
                r = np.exp(logits - lq[:, :, None])
                dD[s:s + chunk] = (r * diff).sum(axis=2) @ self.w
        return (D, dD) if deriv else D


class _PoissonKernel:
    def __init__(self, exposure: float, x_max: float):
        self.exposure = float(exposure)
        self.y = np.arange(poisson_ymax(self.exposure * x_max) + 1, dtype=float)
        self.lgy = gammaln(self.y + 1)

    def logpmf(self, xs):
        mu = self.exposure * np.asarray(xs, float)[:, None]
        return self.y * np.log(mu) - mu - self.lgy

    def divergence(self, xs, atoms, probs, deriv: bool = False):
        xs = np.atleast_1d(np.asarray(xs, float))
        la = self.logpmf(atoms)
        lq = logsumexp(la + np.log(np.maximum(probs, 1e-300))[:, None], axis=0)
        lx = self.logpmf(xs)
        px = np.exp(lx)
        ratio = lx - lq
        D = (px * ratio).sum(axis=1)
        if not deriv:
            return D
        score = self.y[None, :] / xs[:, None] - self.exposure
        return D, (px * score * ratio).sum(axis=1)


def poisson_ymax(mean: float, tail: float = POISSON_TAIL) -> int:
    """Smallest y with P(Poisson(mean) > y) < tail."""
    y = int(max(mean + 10 * math.sqrt(mean + 1) + 10, 10))
    while stats.poisson.sf(y, mean) >= tail:
        y = int(y * 1.5) + 1
    lo = 0
    while lo < y:
        mid = (lo + y) // 2
        if stats.poisson.sf(mid, mean) < tail:
            y = mid
        else:
            lo = mid + 1
    return y


def _kernel_for(channel: ChannelModel, x_max: float):
    if channel.kind == AWGN:
        return _AwgnKernel()
    return _PoissonKernel(channel.exposure, x_max)


# --------------------------------------------------------------------------
# Mutual information


def mi_awgn(prior: DiscreteDistribution, epsabs: float = 1e-10) -> float:
    """I(A; A + W) for unit-variance Gaussian W, by adaptive quadrature."""
    if len(prior) == 1:
        return 0.0
    a, p = prior.atoms, prior.probs
    logp = np.log(p)
    log_norm = -0.5 * math.log(2 * math.pi)

    def neg_q_log_q(y):
        lq = logsumexp(logp - 0.5 * (y - a) ** 2) + log_norm
        return -math.exp(lq) * lq

    lo, hi = a[0] - 9.0, a[-1] + 9.0
    pts = np.unique(np.concatenate([a, 0.5 * (a[1:] + a[:-1])]))
    h, err = integrate.quad(neg_q_log_q, lo, hi, points=pts, epsabs=epsabs, epsrel=1e-12, limit=1000)
    if not np.isfinite(h) or err > 1e-8:
        raise CapacityError(f"mi_awgn quadrature failed (error estimate {err:.3g})", achieved=err)
    return max(h - _HALF_LOG_2PI_E, 0.0)


def mi_poisson(prior: DiscreteDistribution, exposure: float) -> float:
    """I(X; Poisson(exposure * X)) by truncated summation over the output."""
    if np.any(prior.atoms <= 0):
        raise ValueError("poisson inputs must be strictly positive")
    if exposure <= 0:
        raise ValueError("exposure must be positive")
    if len(prior) == 1:
        return 0.0
    kern = _PoissonKernel(exposure, prior.atoms[-1])
    d = kern.divergence(prior.atoms, prior.atoms, prior.probs)
    return max(float(prior.probs @ d), 0.0)


def mutual_information(prior: DiscreteDistribution, channel: ChannelModel) -> float:
    if channel.kind == AWGN:
        return mi_awgn(prior)
    return mi_poisson(prior, channel.exposure)


# --------------------------------------------------------------------------
# Solver on a fixed atom count


@dataclass
class _Problem:
    kernel: object
    budgets: np.ndarray  # (P, q) for awgn, empty for poisson
    lo: float
    hi: float
    symmetric: bool

    def costs(self, atoms):
        if not self.symmetric:
            return np.zeros((atoms.size, 0))
        return np.stack([atoms ** 2, (atoms != 0).astype(float)], axis=1)

    def unpack(self, v):
        """Optimizer vector -> (atoms, probs)."""
        m = v.size // 2
        loc, w = v[:m], np.maximum(v[m:], 0.0)
        if self.symmetric:
            atoms = np.concatenate([-loc[::-1], [0.0], loc])
            probs = np.concatenate([0.5 * w[::-1], [max(1.0 - w.sum(), 0.0)], 0.5 * w])
        else:
            atoms, probs = loc, w
        return atoms, probs

    def pack(self, atoms, probs):
        if self.symmetric:
            k = atoms.size // 2
            return np.concatenate([atoms[k + 1:], probs[k + 1:] + probs[:k][::-1]])
        return np.concatenate([atoms, probs])

    def neg_mi(self, v):
        m = v.size // 2
        atoms, probs = self.unpack(v)
        D, dD = self.kernel.divergence(atoms, atoms, probs, deriv=True)
        mi = probs @ D
        if self.symmetric:
            k = m
            g_loc = probs[k + 1:] * dD[k + 1:] - probs[:k][::-1] * dD[:k][::-1]
            g_w = 0.5 * (D[k + 1:] + D[:k][::-1]) - D[k]
        else:
            g_loc = probs * dD
            g_w = D - 1.0
        return -mi, -np.concatenate([g_loc, g_w])


def _sqp(prob: _Problem, v0, maxiter=500):
    m = v0.size // 2
    if prob.symmetric:
        P, q = prob.budgets
        cons = [
            {"type": "ineq", "fun": lambda v: P - v[m:] @ v[:m] ** 2,
             "jac": lambda v: -np.concatenate([2 * v[m:] * v[:m], v[:m] ** 2])},
            {"type": "ineq", "fun": lambda v: q - v[m:].sum(),
             "jac": lambda v: -np.concatenate([np.zeros(m), np.ones(m)])},
        ]
    else:
        cons = [{"type": "eq", "fun": lambda v: v[m:].sum() - 1.0,
                 "jac": lambda v: np.concatenate([np.zeros(m), np.ones(m)])}]
    bounds = [(prob.lo, prob.hi)] * m + [(0.0, 1.0)] * m
    res = optimize.minimize(prob.neg_mi, v0, jac=True, method="SLSQP", bounds=bounds,
                            constraints=cons, options={"maxiter": maxiter, "ftol": 1e-15})
    v = res.x.copy()
    v[:m] = np.clip(v[:m], prob.lo, prob.hi)
    v[m:] = np.clip(v[m:], 0.0, 1.0)
    if not prob.symmetric:
        v[m:] /= v[m:].sum()
    return v


def _constrained_ba(prob: _Problem, atoms, p, tol=1e-12, max_iter=BA_MAX_ITER):
    """Blahut-Arimoto with cost multipliers on fixed atoms.

    Each step multiplies p by exp(D(P_{Y|x_j} || Q)) and KL-projects onto the
    cost constraints; the projection's dual variables are the multipliers.
    Stops when the dual upper bound is within ``tol`` of the achieved I.
    """
    C = prob.costs(atoms)
    b = prob.budgets
    lam = np.zeros(b.size)
    gap = np.inf
    for it in range(max_iter):
        d = prob.kernel.divergence(atoms, atoms, p)
        lower = float(p @ d)
        upper = float((d - C @ lam).max() + lam @ b)
        gap = upper - lower
        if it > 0 and gap < tol:
            break
        p, lam = kl_project(np.log(np.maximum(p, 1e-300)) + d, C, b, lam)
    return p, lam, gap


def _solve_fixed(prob: _Problem, atoms0, probs0):
    """Joint SQP over locations and probabilities, then a BA polish."""
    v = _sqp(prob, prob.pack(np.asarray(atoms0, float), np.asarray(probs0, float)))
    atoms, probs = prob.unpack(v)
    probs = probs / probs.sum()
    p, lam, gap = _constrained_ba(prob, atoms, probs)
    mi = float(p @ prob.kernel.divergence(atoms, atoms, p))
    return atoms, p, lam, mi


def _feasible(prob: _Problem, atoms, p, slack=1e-9):
    if prob.budgets.size == 0:
        return True
    return bool(np.all(p @ prob.costs(atoms) <= prob.budgets + slack))


# --------------------------------------------------------------------------
# Public solver


def solve_capacity(
    channel: ChannelModel,
    constraints: ConstraintSet,
    stop_tol: float = 1e-5,
    n_starts: int = 5,
    seed: int = 0,
    max_atoms: int = 31,
) -> CapacityResult:
    """Capacity-achieving discrete prior by atom-count growth.

    The atom count starts at three and grows (by two for the symmetric AWGN
    parametrization, by one for Poisson) until the optimized mutual information
    improves by less than ``stop_tol`` nats.
    """
    constraints.check(channel)
    rng = np.random.default_rng(seed)

    if channel.kind == AWGN:
        P = float(constraints.avg_power)
        q = 1.0 if constraints.duty_cycle is None else float(constraints.duty_cycle)
        if P == 0:
            prior = DiscreteDistribution.point_mass(0.0)
            return CapacityResult(prior, 0.0, 0.0, [(1, 0.0)], (0.0, 0.0))
        prob = _Problem(_AwgnKernel(), np.array([P, q]), lo=0.0,
                        hi=max(30.0, 10 * math.sqrt(P / q)), symmetric=True)
        m = 1
    else:
        a, A = float(constraints.peak_lo), float(constraints.peak_hi)
        if A - a < 1e-12:
            prior = DiscreteDistribution.point_mass(a)
            return CapacityResult(prior, 0.0, 0.0, [(1, 0.0)], ())
        prob = _Problem(_PoissonKernel(channel.exposure, A), np.zeros(0), lo=a, hi=A, symmetric=False)
        m = 3

    history = []
    best = None
    while True:
        cands = []
        for s in range(n_starts):
            x0, p0 = _initial(prob, m, s, best, rng)
            atoms, p, lam, mi = _solve_fixed(prob, x0, p0)
            if _feasible(prob, atoms, p):
                cands.append((mi, atoms, p, lam))
        if not cands:
            raise CapacityError("no feasible solution found", last_iterate=best)
        cand = max(cands, key=lambda c: c[0])
        count = cand[1].size
        # the smaller optimum is feasible at this count, so the optimum is at least as good
        history.append((count, cand[0] if best is None else max(cand[0], best[0])))
        logger.info("atoms=%d mi=%.10f", count, cand[0])
        improved = best is None or cand[0] - best[0] >= stop_tol
        if not improved:
            break  # keep the smaller configuration
        best = cand
        if count + (2 if prob.symmetric else 1) > max_atoms:
            logger.warning("atom budget exhausted before MI increment fell below stop_tol")
            break
        m += 1

    _, atoms, p, lam = best
    p = np.where(p < PRUNE_MASS, 0.0, p)
    prior = normalize(p, atoms, merge_tol=MERGE_TOL)
    mi = mutual_information(prior, channel)
    mult = tuple(float(v) for v in lam) if lam.size else ()
    result = CapacityResult(prior, mi, 0.0, history, mult)
    grid = default_certificate_grid(result, channel, constraints)
    result.kkt_slack = kkt_certificate(result, channel, grid)
    if result.kkt_slack > KKT_WARN:
        result.status = "warning"
        logger.warning("KKT slack %.3g exceeds %.0e", result.kkt_slack, KKT_WARN)
    return result


def _initial(prob: _Problem, m, start, best, rng):
    """Starting atoms/probabilities; start 0 warm-starts from the previous optimum."""
    if prob.symmetric:
        P, q = prob.budgets
        scale = math.sqrt(P / q)
        if start == 0 and best is not None:
            atoms, probs = best[1], best[2]
            k = atoms.size // 2
            u = np.append(atoms[k + 1:], atoms[-1] + 2.5)
            half = probs[k + 1:]
            half = np.append(half * (1 - 1e-3), half.sum() * 1e-3)
            return prob.unpack(np.concatenate([u, 2 * half]))
        if start == 0:
            u = scale * np.arange(1, m + 1) / m
        else:
            u = np.sort(rng.uniform(0.3, 2.5 * scale, size=m))
        w = np.full(m, min(q, 0.5) / m)
        # keep the start feasible for the power budget
        w *= min(1.0, P / float(w @ u ** 2))
        return prob.unpack(np.concatenate([u, w]))
    lo, hi = prob.lo, prob.hi
    if start == 0 and best is not None:
        x = best[1]
        j = int(np.argmax(np.diff(x)))
        x0 = np.sort(np.append(x, 0.5 * (x[j] + x[j + 1])))
    elif start == 0:
        x0 = np.linspace(lo, hi, m)
    else:
        x0 = np.sort(np.concatenate([[lo, hi], rng.uniform(lo, hi, size=m - 2)]))
    return x0, np.full(m, 1.0 / m)


# --------------------------------------------------------------------------
# KKT certificate


def information_density(result: CapacityResult, channel: ChannelModel, xs) -> np.ndarray:
    """i(x) = D(P_{Y|x} || Q*_Y) - lam1 x^2 - lam2 1{x != 0}."""
    xs = np.asarray(xs, float)
    prior = result.prior
    kern = _kernel_for(channel, max(float(np.max(xs)), float(prior.atoms[-1])))
    d = kern.divergence(xs, prior.atoms, prior.probs)
    if channel.kind == AWGN and result.multipliers:
        l1, l2 = result.multipliers
        d = d - l1 * xs ** 2 - l2 * (xs != 0)
    return d


def kkt_certificate(result: CapacityResult, channel: ChannelModel, grid) -> float:
    """Largest excess of the information density over its prior average.

    At a constrained capacity optimum i(x) equals its p-average on the
    support and never exceeds it elsewhere, so the return value is ~0.
    """
    grid = np.asarray(grid, float)
    i_grid = information_density(result, channel, grid)
    i_atoms = information_density(result, channel, result.prior.atoms)
    nu = float(result.prior.probs @ i_atoms)
    return float(max(i_grid.max(), i_atoms.max()) - nu)


def default_certificate_grid(result: CapacityResult, channel: ChannelModel,
                             constraints: ConstraintSet | None = None, step: float = 1e-3):
    """Grid for :func:`kkt_certificate`.

    Poisson: the peak interval. AWGN: the symmetric hull of the support, since a
    finite-atom approximation of a prior with unbounded support cannot satisfy
    the equalizer condition beyond its outermost atom.
    """
    a = result.prior.atoms
    if channel.kind == AWGN:
        r = float(np.max(np.abs(a)))
        if r == 0:
            return np.array([0.0])
        n = int(round(2 * r / step))
        return np.linspace(-r, r, n + 1)
    if constraints is not None and constraints.peak_lo is not None:
        lo, hi = float(constraints.peak_lo), float(constraints.peak_hi)
    else:
        lo, hi = float(a[0]), float(a[-1])
    if hi - lo < step:
        return a.copy()
    n = int(round((hi - lo) / step))
    return np.linspace(lo, hi, n + 1)
