"""Finite discrete distributions over the reals and basic information functionals.

All information quantities are in nats.
"""

from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PROB_TOL = 1e-12
MERGE_TOL = 1e-9


class DistributionError(ValueError):
    """Raised for malformed or degenerate distributions."""


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite set of mass points with probabilities.

    Atoms are strictly increasing and probabilities sum to one. Instances are
    immutable; the underlying arrays are marked read-only.
    """

    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float).reshape(-1)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if atoms.size == 0 or atoms.size != probs.size:
            raise DistributionError("atoms and probs must have equal, nonzero length")
        if not np.all(np.isfinite(atoms)):
            raise DistributionError("atoms must be finite")
        if np.any(probs < 0):
            raise DistributionError("probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise DistributionError(f"probabilities sum to {probs.sum():.15g}, not 1")
        if np.any(np.diff(atoms) <= 0):
            raise DistributionError("atoms must be strictly increasing")
        atoms.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def point_mass(cls, x: float) -> "DiscreteDistribution":
        return cls(np.array([float(x)]), np.array([1.0]))

    @classmethod
    def uniform(cls, atoms: Sequence[float]) -> "DiscreteDistribution":
        return normalize(np.ones(len(atoms)), atoms)

    def __len__(self) -> int:
        return self.atoms.size

    @property
    def mean(self) -> float:
        return moment(self, 1)

    def nonzero_mass(self, tol: float = 0.0) -> float:
        """Probability of atoms with |x| > tol."""
        return float(self.probs[np.abs(self.atoms) > tol].sum())

    def merged(self, tol: float = MERGE_TOL) -> "DiscreteDistribution":
        """Merge atoms closer than ``tol``; merged atom sits at the weighted mean."""
        return normalize(self.probs, self.atoms, merge_tol=tol)

    def pruned(self, max_atoms: int) -> "DiscreteDistribution":
        """Keep the ``max_atoms`` most probable atoms and renormalize.

        Atoms whose probabilities tie (within 1e-9 relative) are dropped
        together so that symmetric priors stay symmetric; the result may then
        hold fewer than ``max_atoms`` atoms.
        """
        if max_atoms < 1:
            raise DistributionError("max_atoms must be positive")
        if len(self) <= max_atoms:
            return self
        order = np.argsort(-self.probs, kind="stable")
        keep = order[:max_atoms]
        cutoff = self.probs[order[max_atoms]]
        scale = max(self.probs.max(), 1e-300)
        keep = keep[np.abs(self.probs[keep] - cutoff) > 1e-9 * scale]
        if keep.size == 0:
            raise DistributionError("cannot prune: all atoms tie in probability")
        return normalize(self.probs[keep], self.atoms[keep])

    def to_text(self) -> str:
        """Two-column delimited block ``atom,prob`` in ascending atom order."""
        buf = io.StringIO()
        buf.write("atom,prob\n")
        for a, p in zip(self.atoms, self.probs):
            buf.write(f"{a:.17g},{p:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "DiscreteDistribution":
        atoms, masses = [], []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.lower().replace(" ", "") == "atom,prob":
                continue
            parts = [s for s in line.replace("\t", ",").split(",") if s.strip()]
            if len(parts) != 2:
                raise DistributionError(f"line {lineno}: expected 'atom,prob', got {raw!r}")
            try:
                atoms.append(float(parts[0]))
                masses.append(float(parts[1]))
            except ValueError as exc:
                raise DistributionError(f"line {lineno}: {exc}") from None
        if not atoms:
            raise DistributionError("no atoms found")
        return normalize(masses, atoms)


def normalize(
    masses: Iterable[float],
    atoms: Iterable[float],
    merge_tol: float | None = None,
) -> DiscreteDistribution:
    """Build a distribution with probabilities proportional to ``masses``.

    Atoms are sorted ascending and zero-mass atoms are dropped. Duplicate atoms
    raise unless ``merge_tol`` is given, in which case atoms closer than
    ``merge_tol`` are merged and their masses summed.
    """
    m = np.asarray(list(masses) if not isinstance(masses, np.ndarray) else masses, dtype=float)
    a = np.asarray(list(atoms) if not isinstance(atoms, np.ndarray) else atoms, dtype=float)
    m, a = m.reshape(-1), a.reshape(-1)
    if m.size != a.size or m.size == 0:
        raise DistributionError("masses and atoms must have equal, nonzero length")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise DistributionError("masses must be finite and nonnegative")
    if m.sum() <= 0:
        raise DistributionError("degenerate distribution: all masses are zero")
    order = np.argsort(a, kind="stable")
    a, m = a[order], m[order]
    if merge_tol is None:
        if np.any(np.diff(a) == 0):
            raise DistributionError("atom collision: duplicate atoms")
    else:
        a, m = _merge_close(a, m, merge_tol)
    keep = m > 0
    a, m = a[keep], m[keep]
    p = m / m.sum()
    # renormalize once more so the sum is exact to rounding
    p = p / p.sum()
    return DiscreteDistribution(a, p)


def _merge_close(a: np.ndarray, m: np.ndarray, tol: float):
    out_a, out_m = [], []
    start = 0
    for i in range(1, a.size + 1):
        if i == a.size or a[i] - a[i - 1] >= tol:
            seg_m = m[start:i]
            seg_a = a[start:i]
            tot = seg_m.sum()
            out_a.append(float(seg_a @ seg_m / tot) if tot > 0 else float(seg_a.mean()))
            out_m.append(float(tot))
            start = i
    return np.array(out_a), np.array(out_m)


def moment(d: DiscreteDistribution, k: int) -> float:
    """Raw moment E[X^k]."""
    if k < 1 or int(k) != k:
        raise ValueError("k must be a positive integer")
    return float(np.dot(d.probs, d.atoms ** int(k)))


def kl_discrete(p: DiscreteDistribution, q: DiscreteDistribution, tol: float = MERGE_TOL) -> float:
    """D(p || q) in nats, aligning atoms that agree within ``tol``.

    Returns ``math.inf`` (and warns) when p puts mass where q has none.
    """
    union = np.union1d(p.atoms, q.atoms)
    # collapse near-identical atoms coming from different supports
    keep = np.concatenate([[True], np.diff(union) >= tol])
    union = union[keep]
    pi = _on_grid(p, union, tol)
    qi = _on_grid(q, union, tol)
    if np.any((pi > 0) & (qi <= 0)):
        warnings.warn("kl_discrete: p not absolutely continuous w.r.t. q", RuntimeWarning, stacklevel=2)
        return math.inf
    s = pi > 0
    return float(max(np.sum(pi[s] * np.log(pi[s] / qi[s])), 0.0))


def _on_grid(d: DiscreteDistribution, grid: np.ndarray, tol: float) -> np.ndarray:
    idx = np.searchsorted(grid, d.atoms - tol)
    out = np.zeros(grid.size)
    for i, a, p in zip(idx, d.atoms, d.probs):
        if i >= grid.size or abs(grid[i] - a) >= tol:
            i = int(np.argmin(np.abs(grid - a)))
        out[i] += p
    return out


@dataclass(frozen=True)
class JointPmf:
    """Probability table over a finite product alphabet."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.size == 0:
            raise DistributionError("empty table")
        if np.any(t < 0):
            raise DistributionError("joint pmf entries must be nonnegative")
        if abs(t.sum() - 1.0) > PROB_TOL:
            raise DistributionError(f"joint pmf sums to {t.sum():.15g}, not 1")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def from_masses(cls, masses) -> "JointPmf":
        m = np.asarray(masses, dtype=float)
        if m.sum() <= 0:
            raise DistributionError("degenerate distribution: all masses are zero")
        return cls(m / m.sum())

    @property
    def dims(self) -> tuple[int, ...]:
        return self.table.shape

    def marginal(self, axes: Sequence[int]) -> np.ndarray:
        """Marginal table over ``axes`` (kept in the given order)."""
        axes = list(axes)
        drop = tuple(i for i in range(self.table.ndim) if i not in axes)
        m = self.table.sum(axis=drop) if drop else self.table
        kept = sorted(axes)
        return np.moveaxis(m, [kept.index(a) for a in axes], list(range(len(axes))))

    def entropy(self, axes: Sequence[int] | None = None) -> float:
        t = self.table if axes is None else self.marginal(axes)
        return entropy(t)


def entropy(p) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def nats_to_bits(x: float) -> float:
    return x / math.log(2.0)
