"""Sparse coefficient estimation in white Gaussian noise.

The signal is X_t = sum_i A_i phi_i(t) for an orthonormal family phi_i on
[0, T], observed through dY_t = X_t dt + dW_t. The basis projections
Ytilde_i(t) = int_0^t phi_i dY_s are sufficient, and Ytilde(t) ~ N(Gamma(t) A,
Gamma(t)) where Gamma(t) is the running Gram matrix of the basis.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .distributions import DiscreteDistribution

ENUM_CAP = 300_000
EIGEN_RTOL = 1e-10


class EnumerationCapExceeded(ValueError):
    pass


# --------------------------------------------------------------------------
# Basis


@dataclass(frozen=True)
class BasisSystem:
    """Orthonormal functions that are constant on ``L`` equal segments of [0, T].

    ``values[i, s]`` is phi_i on segment s. Functions are indexed from 0.
    """

    T: float
    values: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be an (n, segments) array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        h = self.T / v.shape[1]
        outer = np.einsum("is,js->sij", v, v) * h
        cum = np.concatenate([np.zeros((1,) + outer.shape[1:]), np.cumsum(outer, axis=0)])
        object.__setattr__(self, "_cum", cum)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def segments(self) -> int:
        return self.values.shape[1]

    @property
    def segment_length(self) -> float:
        return self.T / self.segments

    def segment(self, t) -> np.ndarray:
        """Index of the segment containing t (right-continuous; T maps to the last)."""
        s = np.floor(np.asarray(t, float) / self.segment_length + 1e-12).astype(int)
        return np.clip(s, 0, self.segments - 1)

    def eval(self, i: int, t) -> np.ndarray:
        return self.values[i, self.segment(t)]

    def vector(self, t) -> np.ndarray:
        """phi(t) as an n-vector (or n x len(t) for array t)."""
        return self.values[:, self.segment(t)]

    def gram(self, t: float) -> np.ndarray:
        """Gamma(t)_{ij} = int_0^t phi_i phi_j ds, in closed form."""
        if t < 0 or t > self.T * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.T}]")
        t = min(float(t), self.T)
        h = self.segment_length
        j = min(int(np.floor(t / h + 1e-12)), self.segments)
        g = self._cum[j].copy()
        if j < self.segments:
            v = self.values[:, j]
            g += (t - j * h) * np.outer(v, v)
        return g


def haar_basis(n: int, T: float) -> BasisSystem:
    """First ``n`` functions of the Haar system on [0, T].

    The enumeration is the constant function followed by the wavelets
    psi_{j,k}, level j = 0, 1, ... and shift k = 0..2^j - 1 within a level.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if T <= 0:
        raise ValueError("T must be positive")
    if n == 1:
        return BasisSystem(T, np.full((1, 1), 1 / np.sqrt(T)))
    J = int(np.ceil(np.log2(n)))  # levels 0..J-1 are needed
    L = 2 ** J
    vals = np.zeros((n, L))
    vals[0] = 1 / np.sqrt(T)
    idx = 1
    for j in range(J):
        width = L // 2 ** j
        amp = np.sqrt(2 ** j / T)
        for k in range(2 ** j):
            if idx == n:
                break
            vals[idx, k * width:k * width + width // 2] = amp
            vals[idx, k * width + width // 2:(k + 1) * width] = -amp
            idx += 1
    return BasisSystem(T, vals)


def reconstruct(coef, basis: BasisSystem, t) -> np.ndarray | float:
    """X_t = sum_i coef_i phi_i(t)."""
    out = np.asarray(coef, float) @ basis.vector(t)
    return float(out) if np.ndim(out) == 0 else out


def sufficient_stats(path, basis: BasisSystem, t: float) -> np.ndarray:
    """Ytilde(t) by the left-endpoint sum over path increments up to t."""
    grid = path.grid
    if t > grid[-1] + 1e-12:
        raise ValueError(f"t={t} beyond path horizon {grid[-1]}")
    k = int(np.searchsorted(grid, t + 1e-9 * path.dt, side="right")) - 1
    dy = np.diff(path.y[:k + 1])
    return basis.vector(grid[:k]) @ dy


def sufficient_stats_path(path, basis: BasisSystem) -> np.ndarray:
    """Ytilde(t_k) at every grid point, shape (len(grid), n)."""
    phi = basis.vector(path.grid[:-1])  # n x M
    inc = phi * np.diff(path.y)
    return np.concatenate([np.zeros((1, basis.n)), np.cumsum(inc.T, axis=0)])


# --------------------------------------------------------------------------
# Whitening


@dataclass(frozen=True)
class WhitenedObservation:
    """z = Lambda^{-1/2} V^T Ytilde(t), so that z ~ N(design @ A, I)."""

    t: float
    z: np.ndarray
    design: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    n: int

    @property
    def effective_dim(self) -> int:
        return self.z.size

    @property
    def degenerate(self) -> bool:
        return self.z.size == 0


def whiten(basis: BasisSystem, t: float, ytilde, eigen_tol: float | None = None) -> WhitenedObservation:
    """Project onto the eigenvectors of Gamma(t) with eigenvalue above tolerance.

    The default tolerance is 1e-10 times the largest eigenvalue. At t = 0 every
    eigenvalue is dropped and the observation is marked degenerate.
    """
    return whiten_gram(basis.gram(t), ytilde, t, eigen_tol)


def whiten_gram(gram: np.ndarray, ytilde, t: float = float("nan"), eigen_tol: float | None = None):
    ytilde = np.asarray(ytilde, float)
    n = gram.shape[0]
    lam, V = np.linalg.eigh(gram)
    top = lam.max() if lam.size else 0.0
    tol = EIGEN_RTOL * top if eigen_tol is None else eigen_tol
    keep = lam > max(tol, 0.0) if top > 0 else np.zeros(n, bool)
    lam, V = lam[keep], V[:, keep]
    z = (V.T @ ytilde) / np.sqrt(lam)
    design = np.sqrt(lam)[:, None] * V.T
    return WhitenedObservation(float(t), z, design, V, lam, n)


# --------------------------------------------------------------------------
# Priors and filters


@dataclass(frozen=True)
class CoefficientPrior:
    """I.i.d. discrete prior, or zero-mean Gaussian with optional known support."""

    n: int
    coord: DiscreteDistribution | None = None
    variance: float | None = None
    support: tuple | None = None
    cap: int = ENUM_CAP

    def __post_init__(self):
        if (self.coord is None) == (self.variance is None):
            raise ValueError("give exactly one of coord or variance")
        if self.coord is not None and len(self.coord) ** self.n > self.cap:
            raise EnumerationCapExceeded(
                f"{len(self.coord)}^{self.n} joint atoms exceed the cap {self.cap}; "
                "use a smaller n or merge/prune prior atoms")

    @classmethod
    def iid(cls, coord: DiscreteDistribution, n: int, cap: int = ENUM_CAP) -> "CoefficientPrior":
        return cls(n, coord=coord, cap=cap)

    @classmethod
    def gaussian(cls, variance: float, n: int, support: Sequence[int] | None = None) -> "CoefficientPrior":
        return cls(n, variance=float(variance), support=None if support is None else tuple(support))

    def grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Joint atoms (N x n) and their log prior weights."""
        a, p = self.coord.atoms, self.coord.probs
        idx = np.array(list(itertools.product(range(len(a)), repeat=self.n)), dtype=int).reshape(-1, self.n)
        return a[idx], np.log(p)[idx].sum(axis=1)


def _softmax(logw):
    w = np.exp(logw - logw.max())  # single global max subtraction
    return w / w.sum()


def minimax_filter(obs: WhitenedObservation, prior: CoefficientPrior):
    """Posterior mean of A under the i.i.d. discrete prior by full enumeration.

    Returns ``(coef_estimate, weights)`` with weights over ``prior.grid()``.
    """
    atoms, logp = prior.grid()
    if obs.degenerate:
        w = _softmax(logp)
        return w @ atoms, w
    r = obs.z[None, :] - atoms @ obs.design.T
    w = _softmax(logp - 0.5 * np.einsum("ij,ij->i", r, r))
    return w @ atoms, w


def ml_filter(obs: WhitenedObservation, hard_k: int | None = None, soft_tau: float | None = None) -> np.ndarray:
    """Pseudoinverse estimate, optionally hard- or soft-thresholded."""
    if obs.degenerate:
        return np.zeros(obs.n)
    a = np.linalg.pinv(obs.design) @ obs.z
    if hard_k is not None:
        out = np.zeros_like(a)
        if hard_k > 0:
            keep = np.argsort(-np.abs(a), kind="stable")[:hard_k]
            out[keep] = a[keep]
        a = out
    if soft_tau is not None:
        a = np.sign(a) * np.maximum(np.abs(a) - soft_tau, 0.0)
    return a


def linear_nosparsity_filter(obs: WhitenedObservation, P: float) -> np.ndarray:
    """Bayes estimate under A ~ N(0, P I): P V (P Lambda + I)^{-1} V^T Ytilde."""
    if obs.degenerate:
        return np.zeros(obs.n)
    vty = np.sqrt(obs.eigvals) * obs.z
    return P * obs.eigvecs @ (vty / (P * obs.eigvals + 1.0))


def genie_filter(obs: WhitenedObservation, support: Sequence[int], n: int, P: float) -> np.ndarray:
    """Bayes estimate when the support (size k) is known and A_S ~ N(0, (nP/k) I)."""
    out = np.zeros(n)
    support = np.asarray(sorted(set(int(i) for i in support)), dtype=int)
    if support.size == 0 or obs.degenerate:
        return out
    if support.min() < 0 or support.max() >= n:
        raise ValueError("support index out of range")
    s2 = n * P / support.size
    U = obs.design[:, support]
    S = s2 * U @ U.T + np.eye(U.shape[0])
    out[support] = s2 * U.T @ np.linalg.solve(S, obs.z)
    return out


# --------------------------------------------------------------------------
# Path-level evaluation


def _whitened_along(path, basis: BasisSystem):
    ys = sufficient_stats_path(path, basis)
    for k, t in enumerate(path.grid):
        yield k, whiten(basis, t, ys[k])


def filter_path(path, basis: BasisSystem, estimator) -> np.ndarray:
    """Apply ``estimator(obs) -> coef`` at every grid time; returns Xhat_t."""
    xhat = np.empty(path.grid.size)
    for k, obs in _whitened_along(path, basis):
        xhat[k] = reconstruct(estimator(obs), basis, path.grid[k])
    return xhat


class PiecewiseMinimaxFilter:
    """Minimax filter along a whole path for a piecewise-constant basis.

    Uses log L(a) = a^T Ytilde - a^T Gamma a / 2, which equals the whitened
    likelihood up to a constant because Ytilde lies in the range of Gamma.
    On segment j, Gamma(t) = Gamma(s_j) + (t - s_j) phi_j phi_j^T, so each grid
    step costs O(N) in the number of joint atoms.
    """

    def __init__(self, basis: BasisSystem, prior: CoefficientPrior):
        self.basis = basis
        self.atoms, self.logp = prior.grid()
        self.s = self.atoms @ basis.values  # N x segments: phi_j^T a
        h = basis.segment_length
        cum = np.cumsum(np.concatenate([np.zeros((self.atoms.shape[0], 1)), self.s ** 2 * h], axis=1), axis=1)
        self.quad0 = cum  # a^T Gamma(s_j) a
        self.prior_mean = _softmax(self.logp) @ self.atoms

    def __call__(self, path) -> np.ndarray:
        b = self.basis
        grid = path.grid
        seg = b.segment(grid[:-1])
        dy = np.diff(path.y)
        lin = np.zeros(self.atoms.shape[0])  # a^T Ytilde
        xhat = np.empty(grid.size)
        xhat[0] = reconstruct(self.prior_mean, b, grid[0])
        for k in range(grid.size - 1):
            j = seg[k]
            lin += self.s[:, j] * dy[k]
            t = grid[k + 1]
            jt = int(b.segment(t))
            dt = t - jt * b.segment_length
            loglik = lin - 0.5 * (self.quad0[:, jt] + dt * self.s[:, jt] ** 2)
            w = _softmax(self.logp + loglik)
            xhat[k + 1] = w @ self.s[:, jt]
        return xhat


class GramPathFilters:
    """ML, linear and genie estimates along a path, batched over grid times.

    With Ytilde in the range of Gamma the whitened closed forms reduce to
    Gamma^+ Ytilde, (I/P + Gamma)^{-1} Ytilde and, on the support S,
    (I/s2 + Gamma_SS)^{-1} Ytilde_S. Grams and pseudoinverses depend only on
    the grid, so they are computed once and shared by every path.
    """

    def __init__(self, basis: BasisSystem, grid: np.ndarray):
        self.basis = basis
        self.grid = np.asarray(grid, float)
        self.grams = np.stack([basis.gram(t) for t in self.grid])
        top = np.linalg.eigvalsh(self.grams)[:, -1]
        pinv = np.zeros_like(self.grams)
        ok = top > 0
        pinv[ok] = np.linalg.pinv(self.grams[ok], rcond=EIGEN_RTOL, hermitian=True)
        self.pinv = pinv
        self.phi = basis.vector(self.grid).T  # K x n

    def _x(self, coef):
        return np.einsum("kn,kn->k", coef, self.phi)

    def ml(self, ys: np.ndarray, hard_k: int | None = None) -> np.ndarray:
        a = np.einsum("kij,kj->ki", self.pinv, ys)
        if hard_k is not None:
            order = np.argsort(-np.abs(a), axis=1, kind="stable")
            mask = np.zeros_like(a, bool)
            if hard_k > 0:
                np.put_along_axis(mask, order[:, :hard_k], True, axis=1)
            a = np.where(mask, a, 0.0)
        return self._x(a)

    def linear(self, ys: np.ndarray, P: float) -> np.ndarray:
        n = self.basis.n
        if P <= 0:
            return np.zeros(self.grid.size)
        a = np.linalg.solve(np.eye(n) / P + self.grams, ys[..., None])[..., 0]
        return self._x(a)

    def genie(self, ys: np.ndarray, support, P: float) -> np.ndarray:
        n = self.basis.n
        S = np.asarray(sorted(set(int(i) for i in support)), dtype=int)
        if S.size == 0:
            return np.zeros(self.grid.size)
        s2 = n * P / S.size
        G = self.grams[:, S[:, None], S[None, :]]
        a = np.zeros((self.grid.size, n))
        a[:, S] = np.linalg.solve(np.eye(S.size) / s2 + G, ys[:, S, None])[..., 0]
        return self._x(a)
