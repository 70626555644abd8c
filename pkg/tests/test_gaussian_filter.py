import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_filtering.distributions import DiscreteDistribution, normalize
from minimax_filtering.gaussian_filter import (CoefficientPrior, EnumerationCapExceeded, GramPathFilters,
                                               PiecewiseMinimaxFilter, filter_path, genie_filter, haar_basis,
                                               linear_nosparsity_filter, minimax_filter, ml_filter, reconstruct,
                                               sufficient_stats, sufficient_stats_path, whiten, whiten_gram)
from minimax_filtering.simulation import simulate_awgn, simulate_basis_signal

from oracles import brute_path_posterior, gaussian_conditional_mean

P = 10 ** 0.4
BASIS7 = haar_basis(7, 10.0)


def _numeric_gram(basis, t, step=1e-4):
    s = np.arange(0, t, step) + step / 2
    phi = basis.vector(s)
    return phi @ phi.T * step


# --------------------------------------------------------------------------
# Basis


def test_haar_n1():
    b = haar_basis(1, 4.0)
    assert b.eval(0, 1.3) == pytest.approx(0.5)
    np.testing.assert_allclose(b.gram(1.0), [[0.25]])


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 7, 8])
def test_gram_endpoints(n):
    b = haar_basis(n, 10.0)
    np.testing.assert_allclose(b.gram(10.0), np.eye(n), atol=1e-9)
    np.testing.assert_array_equal(b.gram(0.0), np.zeros((n, n)))


def test_gram_symmetric_psd():
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, 10, 20):
        g = BASIS7.gram(t)
        np.testing.assert_allclose(g, g.T)
        assert np.linalg.eigvalsh(g).min() >= -1e-12


def test_gram_matches_quadrature():
    np.testing.assert_allclose(BASIS7.gram(5.0), _numeric_gram(BASIS7, 5.0), atol=1e-6)
    np.testing.assert_allclose(BASIS7.gram(3.3), _numeric_gram(BASIS7, 3.3), atol=1e-6)


def test_haar_n7_structure():
    v = BASIS7.values
    assert v.shape == (7, 8)
    # constant, level-0 wavelet, two level-1 wavelets, first three level-2 wavelets
    assert np.all(v[0] == v[0, 0])
    assert np.all(v[1, :4] > 0) and np.all(v[1, 4:] < 0)
    assert np.count_nonzero(v[2]) == 4 and np.count_nonzero(v[3]) == 4
    assert all(np.count_nonzero(v[i]) == 2 for i in (4, 5, 6))


# --------------------------------------------------------------------------
# Sufficient statistics and whitening


def test_sufficient_stats_noiseless_unit_coefficient():
    e1 = np.eye(7)[0]
    path = simulate_basis_signal(e1, BASIS7, 0.01, 0, noise=False)
    np.testing.assert_allclose(sufficient_stats(path, BASIS7, 10.0), e1, atol=1e-12)


def test_sufficient_stats_zero_path():
    path = simulate_basis_signal(np.zeros(7), BASIS7, 0.01, 0, noise=False)
    np.testing.assert_array_equal(sufficient_stats(path, BASIS7, 7.0), np.zeros(7))


def test_sufficient_stats_refinement():
    a = np.array([1.0, -2.0, 0.0, 0.5, 0.0, 3.0, 0.0])
    fine = simulate_basis_signal(a, BASIS7, 0.001, 11)
    coarse = type(fine)(fine.grid[::10], fine.x[::10], fine.y[::10], fine.seed, 0.01)
    for t in (2.5, 6.0, 10.0):
        np.testing.assert_allclose(sufficient_stats(coarse, BASIS7, t), sufficient_stats(fine, BASIS7, t), atol=1e-3)


def test_sufficient_stats_path_agrees():
    path = simulate_basis_signal(np.arange(7.0), BASIS7, 0.05, 3)
    ys = sufficient_stats_path(path, BASIS7)
    for k in (0, 17, 100, 200):
        np.testing.assert_allclose(ys[k], sufficient_stats(path, BASIS7, path.grid[k]), atol=1e-12)


def test_sufficient_stats_beyond_horizon():
    path = simulate_basis_signal(np.zeros(7), BASIS7, 0.1, 0)
    with pytest.raises(ValueError):
        sufficient_stats(path, BASIS7, 10.5)


def test_whiten_at_horizon():
    y = np.random.default_rng(1).normal(size=7)
    obs = whiten(BASIS7, 10.0, y)
    np.testing.assert_allclose(obs.eigvals, np.ones(7))
    assert np.linalg.norm(obs.z) == pytest.approx(np.linalg.norm(y))


def test_whiten_at_zero_is_degenerate():
    obs = whiten(BASIS7, 0.0, np.zeros(7))
    assert obs.degenerate and obs.effective_dim == 0


def test_whiten_design_identity():
    obs = whiten(BASIS7, 5.0, np.ones(7))
    np.testing.assert_allclose(obs.design @ obs.design.T, np.diag(obs.eigvals), atol=1e-9)
    assert np.linalg.matrix_rank(obs.design) == obs.effective_dim == 4


def test_whitened_noise_is_white():
    t = 5.0
    zs = []
    for trial in range(10_000):
        path = simulate_awgn(0.0, 10.0, 0.05, 123, trial)
        zs.append(whiten(BASIS7, t, sufficient_stats(path, BASIS7, t)).z)
    cov = np.cov(np.array(zs).T)
    assert np.abs(cov - np.eye(cov.shape[0])).max() <= 5e-2


# --------------------------------------------------------------------------
# Filters


def _obs(t=6.0, seed=0, n=7, basis=BASIS7):
    rng = np.random.default_rng(seed)
    a = np.zeros(n)
    a[rng.choice(n, 2, replace=False)] = rng.normal(0, 3, 2)
    path = simulate_basis_signal(a, basis, 0.01, seed)
    return whiten(basis, t, sufficient_stats(path, basis, t)), path


def test_minimax_point_mass_prior():
    obs, _ = _obs()
    prior = CoefficientPrior.iid(DiscreteDistribution.point_mass(1.5), 7)
    a, w = minimax_filter(obs, prior)
    np.testing.assert_allclose(a, np.full(7, 1.5))


def test_minimax_degenerate_returns_prior_mean():
    obs = whiten(BASIS7, 0.0, np.zeros(7))
    d = normalize([0.2, 0.5, 0.3], [-1, 0, 2])
    a, _ = minimax_filter(obs, CoefficientPrior.iid(d, 7))
    np.testing.assert_allclose(a, np.full(7, d.mean), atol=1e-12)


def test_minimax_two_dim_hand_enumeration():
    b2 = haar_basis(2, 1.0)
    d = normalize([0.25, 0.5, 0.25], [-1.0, 0.0, 2.0])
    obs = whiten(b2, 0.75, np.array([0.4, -0.9]))
    a, w = minimax_filter(obs, CoefficientPrior.iid(d, 2))
    num = np.zeros(2)
    den = 0.0
    for i, j in itertools.product(range(3), repeat=2):
        v = np.array([d.atoms[i], d.atoms[j]])
        r = obs.z - obs.design @ v
        wt = d.probs[i] * d.probs[j] * math.exp(-0.5 * r @ r)
        num += wt * v
        den += wt
    np.testing.assert_allclose(a, num / den, atol=1e-12)


def test_minimax_enumeration_cap():
    with pytest.raises(EnumerationCapExceeded, match="cap"):
        CoefficientPrior.iid(DiscreteDistribution.uniform(range(7)), 7)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 10), st.integers(0, 10_000))
def test_minimax_within_atom_hull(t, seed):
    d = normalize([0.1, 0.7, 0.2], [-2.0, 0.0, 3.0])
    b3 = haar_basis(3, 10.0)
    obs = whiten(b3, t, np.random.default_rng(seed).normal(0, 10, 3))
    a, _ = minimax_filter(obs, CoefficientPrior.iid(d, 3))
    assert np.all(a >= -2.0 - 1e-12) and np.all(a <= 3.0 + 1e-12)


def test_ml_at_horizon_is_ytilde():
    y = np.random.default_rng(2).normal(size=7)
    np.testing.assert_allclose(ml_filter(whiten(BASIS7, 10.0, y)), y, atol=1e-12)


def test_ml_hard_zero():
    obs, _ = _obs()
    np.testing.assert_array_equal(ml_filter(obs, hard_k=0), np.zeros(7))


def test_ml_degenerate_is_zero():
    np.testing.assert_array_equal(ml_filter(whiten(BASIS7, 0.0, np.zeros(7))), np.zeros(7))


def test_pseudoinverse_identities():
    rng = np.random.default_rng(7)
    A = rng.normal(size=(7, 7))
    A[:, 3] = A[:, 0] + A[:, 1]  # rank deficient
    obs = whiten_gram(A @ A.T, rng.normal(size=7))
    D = obs.design
    X = np.linalg.pinv(D)
    for lhs, rhs in ((D @ X @ D, D), (X @ D @ X, X), ((D @ X).T, D @ X), ((X @ D).T, X @ D)):
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 7), st.floats(0.5, 10), st.integers(0, 1000))
def test_ml_hard_support_bound(k, t, seed):
    y = np.random.default_rng(seed).normal(0, 5, 7)
    assert np.count_nonzero(ml_filter(whiten(BASIS7, t, y), hard_k=k)) <= k


def test_soft_threshold_shrinks():
    y = np.array([3.0, -0.5, 1.0, 0, 0, 0, 0])
    a = ml_filter(whiten(BASIS7, 10.0, y), soft_tau=1.0)
    np.testing.assert_allclose(a, [2.0, 0.0, 0.0, 0, 0, 0, 0], atol=1e-12)


def test_linear_small_power():
    obs, _ = _obs()
    assert np.abs(linear_nosparsity_filter(obs, 1e-14)).max() < 1e-12


def test_linear_at_horizon_is_scalar_shrinkage():
    y = np.random.default_rng(3).normal(size=7)
    np.testing.assert_allclose(linear_nosparsity_filter(whiten(BASIS7, 10.0, y), P), P / (P + 1) * y, atol=1e-12)


@pytest.mark.parametrize("t", [0.7, 3.0, 5.0, 9.9])
def test_linear_matches_gaussian_conditioning(t):
    obs, path = _obs(t)
    y = sufficient_stats(path, BASIS7, t)
    G = BASIS7.gram(t)
    ref = gaussian_conditional_mean(P * np.eye(7), G, G, y)
    np.testing.assert_allclose(linear_nosparsity_filter(obs, P), ref, atol=1e-10)


def test_genie_full_support_is_linear():
    obs, _ = _obs(4.0)
    np.testing.assert_allclose(genie_filter(obs, range(7), 7, P), linear_nosparsity_filter(obs, P), atol=1e-12)


def test_genie_single_coordinate_at_horizon():
    y = np.random.default_rng(4).normal(size=7)
    obs = whiten(BASIS7, 10.0, y)
    out = genie_filter(obs, [3], 7, P)
    ref = np.zeros(7)
    ref[3] = 7 * P / (7 * P + 1) * (obs.eigvecs @ obs.z)[3]
    np.testing.assert_allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("t", [1.0, 5.0, 8.2])
def test_genie_matches_gaussian_conditioning(t):
    obs, path = _obs(t, seed=5)
    S = [1, 5]
    y = sufficient_stats(path, BASIS7, t)
    G = BASIS7.gram(t)
    cov = np.zeros((7, 7))
    cov[S, S] = 7 * P / 2
    np.testing.assert_allclose(genie_filter(obs, S, 7, P), gaussian_conditional_mean(cov, G, G, y), atol=1e-10)


def test_genie_empty_support():
    obs, _ = _obs()
    np.testing.assert_array_equal(genie_filter(obs, [], 7, P), np.zeros(7))


def test_reconstruct_examples():
    t = np.linspace(0, 10, 33)
    np.testing.assert_allclose(reconstruct(np.eye(7)[0], BASIS7, t), BASIS7.eval(0, t))
    np.testing.assert_array_equal(reconstruct(np.zeros(7), BASIS7, t), np.zeros(33))


def test_parseval():
    c = np.random.default_rng(9).normal(size=7)
    s = np.arange(0, 10, 1e-4) + 5e-5
    val = np.sum(reconstruct(c, BASIS7, s) ** 2) * 1e-4
    assert val == pytest.approx(c @ c, rel=1e-9)


# --------------------------------------------------------------------------
# Path-level equivalences


def test_markov_sufficiency_small_instance():
    d = normalize([0.2, 0.6, 0.2], [-1.5, 0.0, 1.5])
    basis = haar_basis(3, 2.0)
    path = simulate_basis_signal(np.array([1.5, 0.0, -1.5]), basis, 0.1, 21)
    prior = CoefficientPrior.iid(d, 3)
    for t in (0.5, 1.2, 2.0):
        k = int(round(t / 0.1))
        _, w = minimax_filter(whiten(basis, t, sufficient_stats(path, basis, t)), prior)
        ref = brute_path_posterior(d.atoms, d.probs, 3, basis.values, 2.0, path.grid[:k + 1], path.y[:k + 1])
        assert 0.5 * np.abs(w - ref).sum() <= 1e-9


def test_piecewise_minimax_matches_enumeration():
    d = normalize([0.1, 0.8, 0.1], [-2.5, 0.0, 2.5])
    basis = haar_basis(5, 10.0)
    prior = CoefficientPrior.iid(d, 5)
    path = simulate_basis_signal(np.array([0, 2.5, 0, 0, -2.5]), basis, 0.05, 4)
    fast = PiecewiseMinimaxFilter(basis, prior)(path)
    slow = filter_path(path, basis, lambda o: minimax_filter(o, prior)[0])
    np.testing.assert_allclose(fast, slow, atol=1e-10)


def test_gram_path_filters_match_whitened_forms():
    a = np.array([0, 3.0, 0, 0, -2.0, 0, 0])
    path = simulate_basis_signal(a, BASIS7, 0.05, 8)
    ys = sufficient_stats_path(path, BASIS7)
    F = GramPathFilters(BASIS7, path.grid)
    np.testing.assert_allclose(F.ml(ys, 2), filter_path(path, BASIS7, lambda o: ml_filter(o, hard_k=2)), atol=1e-10)
    np.testing.assert_allclose(F.linear(ys, P), filter_path(path, BASIS7, lambda o: linear_nosparsity_filter(o, P)),
                               atol=1e-10)
    np.testing.assert_allclose(F.genie(ys, [1, 4], P),
                               filter_path(path, BASIS7, lambda o: genie_filter(o, [1, 4], 7, P)), atol=1e-10)
