"""Finite-instance checks of regret-capacity, equalizer, strong-regret and
directed-information relations."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .capacity import ChannelModel, ConstraintSet, blahut_arimoto, logsumexp, solve_capacity
from .distributions import DiscreteDistribution, JointPmf


class EqualizerViolation(RuntimeError):
    pass


def _sources(sources) -> np.ndarray:
    W = np.asarray(sources, float)
    if W.ndim != 2 or W.shape[0] < 1:
        raise ValueError("sources must be a (num_sources, alphabet) array")
    if np.any(W < 0) or np.any(np.abs(W.sum(axis=1) - 1) > 1e-9):
        raise ValueError("each source must be a pmf")
    return W


def kl_rows(W: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D(P_theta || q) for every row of W."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(W > 0, W * (np.log(W) - np.log(q)), 0.0)
    return t.sum(axis=1)


def minimax_kl(sources, tol: float = 1e-12) -> tuple[float, np.ndarray]:
    """min over output pmfs q of max_theta D(P_theta || q).

    Solved directly on the output simplex in epigraph form by SQP; this does
    not use the capacity computation.
    """
    W = _sources(sources)
    used = W.sum(axis=0) > 0
    W = W[:, used]
    K, M = W.shape
    if M == 1:
        q = np.zeros(used.size)
        q[used] = 1.0
        return 0.0, q

    def D(q):
        return kl_rows(W, q)

    def D_jac(q):
        return -np.where(W > 0, W / q, 0.0)

    q0 = W.mean(axis=0)
    s0 = float(D(q0).max())
    cons = [
        {"type": "ineq", "fun": lambda v: v[-1] - D(v[:-1]),
         "jac": lambda v: np.hstack([-D_jac(v[:-1]), np.ones((K, 1))])},
        {"type": "eq", "fun": lambda v: v[:-1].sum() - 1.0,
         "jac": lambda v: np.concatenate([np.ones(M), [0.0]])},
    ]
    res = optimize.minimize(lambda v: v[-1], np.append(q0, s0), jac=lambda v: np.eye(M + 1)[-1],
                            method="SLSQP", constraints=cons, bounds=[(1e-300, 1.0)] * M + [(0, None)],
                            options={"maxiter": 1000, "ftol": tol})
    q = np.clip(res.x[:-1], 1e-300, None)
    q = q / q.sum()
    val = float(D(q).max())
    if not res.success and val > s0:
        q, val = q0, s0
    full = np.zeros(used.size)
    full[used] = q
    return val, full


@dataclass
class RegretCapacityResult:
    capacity: float
    minimax: float
    gap: float
    weights: DiscreteDistribution
    mixture: np.ndarray


def regret_capacity_oracle(sources, tol: float = 1e-8) -> RegretCapacityResult:
    """Capacity of theta -> Y and the minimax divergence, computed independently."""
    W = _sources(sources)
    w, C = blahut_arimoto(W, tol=tol)
    mm, q = minimax_kl(W)
    return RegretCapacityResult(C, mm, abs(C - mm), w, q)


def minimax_mixture(sources, tol: float = 1e-8) -> tuple[DiscreteDistribution, float]:
    """Capacity-achieving weights w* over source indices and the capacity.

    Checks that D(P_theta || Q*) equals the capacity on the support of w*.
    """
    W = _sources(sources)
    w, C = blahut_arimoto(W, tol=tol * 1e-2)
    q = w.probs @ W[w.atoms.astype(int)]
    d = kl_rows(W, q)
    idx = w.atoms.astype(int)
    on = idx[w.probs > math.sqrt(tol)]
    dev = float(np.abs(d[on] - C).max()) if on.size else 0.0
    if dev > 10 * tol:
        raise EqualizerViolation(f"equalizer violated by {dev:.3g} on the support")
    return w, C


def weights_on_sources(w: DiscreteDistribution, k: int) -> np.ndarray:
    out = np.zeros(k)
    out[w.atoms.astype(int)] = w.probs
    return out


@dataclass
class StrongRegretResult:
    eps: float
    bad_mass: float
    bound: float
    passed: bool


def strong_regret_check(regrets, w, minimax_nats: float, eps: float, stat_tol: float = 0.0) -> StrongRegretResult:
    """Mass of {theta : regret <= (1 - eps) minimax} against e * 2^(-eps * minimax).

    ``w`` is a weight vector aligned with ``regrets`` (or a distribution over
    source indices). The exponent uses minimax in bits.
    """
    regrets = np.asarray(regrets, float)
    if isinstance(w, DiscreteDistribution):
        w = weights_on_sources(w, regrets.size)
    w = np.asarray(w, float)
    bad = regrets <= (1 - eps) * minimax_nats
    mass = float(w[bad].sum())
    bound = math.e * 2.0 ** (-eps * minimax_nats / math.log(2))
    return StrongRegretResult(eps, mass, bound, mass <= bound + stat_tol)


# --------------------------------------------------------------------------
# Directed information


def _split_axes(joint: JointPmf):
    nd = len(joint.dims)
    if nd % 2:
        raise ValueError("joint must have axes (X_1..X_n, Y_1..Y_n)")
    n = nd // 2
    return n, list(range(n)), list(range(n, 2 * n))


def directed_info_discrete(joint: JointPmf) -> float:
    """sum_i I(X^i; Y_i | Y^{i-1}) by exhaustive marginalization."""
    n, xs, ys = _split_axes(joint)

    def H(axes):
        return joint.entropy(axes) if axes else 0.0

    total = 0.0
    for i in range(1, n + 1):
        total += H(ys[:i]) - H(ys[:i - 1]) - H(xs[:i] + ys[:i]) + H(xs[:i] + ys[:i - 1])
    return max(total, 0.0)


def mutual_info_discrete(joint: JointPmf) -> float:
    """I(X^n; Y^n)."""
    n, xs, ys = _split_axes(joint)
    return max(joint.entropy(xs) + joint.entropy(ys) - joint.entropy(), 0.0)


# --------------------------------------------------------------------------
# i.i.d. versus constrained joint prior


@dataclass
class IidGapResult:
    n: int
    iid_bound: float
    joint_mi: float
    joint_se: float
    gap: float
    support_size: int


def constrained_product_prior(coord: DiscreteDistribution, n: int, P: float, q: float):
    """coord^n conditioned on (1/n) sum a_i^2 <= P and (1/n) #{a_i != 0} <= q.

    Returns (atoms N x n, probs). Enumerates only vectors with at most
    floor(q n) nonzero entries.
    """
    a, p = coord.atoms, coord.probs
    zero = np.isclose(a, 0.0, atol=1e-12)
    nz_vals, nz_p = a[~zero], p[~zero]
    p0 = float(p[zero].sum())
    kmax = int(math.floor(q * n + 1e-12))
    rows, probs = [], []
    for k in range(0, kmax + 1):
        for pos in itertools.combinations(range(n), k):
            for vals in itertools.product(range(nz_vals.size), repeat=k):
                v = np.zeros(n)
                v[list(pos)] = nz_vals[list(vals)]
                if (v ** 2).sum() > n * P + 1e-9:
                    continue
                pr = p0 ** (n - k) * float(np.prod(nz_p[list(vals)])) if k else p0 ** n
                if pr > 0:
                    rows.append(v)
                    probs.append(pr)
    if not rows:
        raise ValueError("constraint set has no mass under the product prior")
    probs = np.array(probs)
    return np.array(rows), probs / probs.sum()


def mc_mi_gaussian_mixture(atoms: np.ndarray, probs: np.ndarray, samples: int, seed: int):
    """Monte-Carlo I(A; A + W) for A discrete in R^n, W ~ N(0, I).

    Returns (estimate, standard error).
    """
    if atoms.shape[0] == 1:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    idx = rng.choice(atoms.shape[0], size=samples, p=probs)
    w = rng.standard_normal((samples, atoms.shape[1]))
    b = atoms[idx] + w
    logp = np.log(probs)
    vals = np.empty(samples)
    chunk = max(1, 2_000_000 // atoms.shape[0])
    for s in range(0, samples, chunk):
        bb = b[s:s + chunk]
        d2 = ((bb[:, None, :] - atoms[None, :, :]) ** 2).sum(axis=2)
        lq = logsumexp(logp - 0.5 * d2, axis=1)
        vals[s:s + chunk] = -0.5 * (w[s:s + chunk] ** 2).sum(axis=1) - lq
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def lemma3_gap(n: int, P: float, q: float, stop_tol: float = 1e-5, samples: int = 100_000,
               seed: int = 0, coord: DiscreteDistribution | None = None) -> IidGapResult:
    """n I(P_d) versus the MI of P_d^n conditioned on the n-letter constraints."""
    if coord is None:
        if P == 0:
            coord = DiscreteDistribution.point_mass(0.0)
        else:
            res = solve_capacity(ChannelModel.awgn(), ConstraintSet(avg_power=P, duty_cycle=q), stop_tol=stop_tol)
            coord = res.prior
    from .capacity import mi_awgn

    iid = n * mi_awgn(coord)
    atoms, probs = constrained_product_prior(coord, n, P, q)
    mi, se = mc_mi_gaussian_mixture(atoms, probs, samples, seed)
    return IidGapResult(n, iid, mi, se, max(iid - mi, 0.0), atoms.shape[0])
