import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minimax_filtering.capacity import (CapacityError, CapacityResult, ChannelModel, ConstraintSet,
                                        InfeasibleConstraints, blahut_arimoto, default_certificate_grid,
                                        kkt_certificate, mi_awgn, mi_poisson, solve_capacity)
from minimax_filtering.distributions import DiscreteDistribution, normalize

from oracles import awgn_grid_oracle, h2, mi_awgn_trapezoid, mi_poisson_direct, poisson_info_density


@pytest.fixture(scope="module")
def ps_result():
    return solve_capacity(ChannelModel.poisson(10.0), ConstraintSet(peak_lo=0.5, peak_hi=2.0))


# --------------------------------------------------------------------------
# Blahut-Arimoto


def test_ba_identity_channel():
    w, C = blahut_arimoto(np.eye(2))
    assert C == pytest.approx(math.log(2), abs=1e-9)
    np.testing.assert_allclose(w.probs, [0.5, 0.5], atol=1e-9)


def test_ba_single_row():
    w, C = blahut_arimoto(np.array([[0.3, 0.7]]))
    assert C == pytest.approx(0.0, abs=1e-15)


def test_ba_bsc_matches_closed_form():
    p = 0.11
    _, C = blahut_arimoto(np.array([[1 - p, p], [p, 1 - p]]))
    assert C / math.log(2) == pytest.approx((math.log(2) - h2(p)) / math.log(2), abs=1e-9)
    assert C / math.log(2) == pytest.approx(0.5004, abs=1e-3)  # quoted value is rounded


def test_ba_rejects_non_stochastic_rows():
    with pytest.raises(ValueError):
        blahut_arimoto(np.array([[0.5, 0.6], [0.5, 0.5]]))


def test_ba_nonconvergence_carries_last_iterate():
    W = np.array([[0.9, 0.1, 0.0], [0.1, 0.8, 0.1], [0.0, 0.3, 0.7]])
    with pytest.raises(CapacityError) as exc:
        blahut_arimoto(W, tol=1e-14, max_iter=2)
    assert exc.value.last_iterate is not None


def _grid_capacity(W, step=0.01):
    k = W.shape[0]
    best = 0.0
    ticks = np.arange(0, 1 + step / 2, step)
    for head in itertools.product(ticks, repeat=k - 1):
        s = sum(head)
        if s > 1 + 1e-12:
            continue
        p = np.array(list(head) + [1 - s])
        q = p @ W
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(W > 0, W * np.log(W / q), 0.0)
        best = max(best, float(p @ t.sum(axis=1)))
    return best


@pytest.mark.parametrize("k", [2, 3])
def test_ba_matches_simplex_grid_search(k):
    rng = np.random.default_rng(k)
    for _ in range(3):
        W = rng.dirichlet(np.ones(4), size=k)
        _, C = blahut_arimoto(W)
        assert abs(C - _grid_capacity(W)) <= 1e-3
        assert C >= _grid_capacity(W) - 1e-12


# --------------------------------------------------------------------------
# Mutual information


def test_mi_awgn_point_mass():
    assert mi_awgn(DiscreteDistribution.point_mass(1.3)) == 0.0


def test_mi_awgn_binary_matches_trapezoid():
    d = normalize([1, 1], [-1, 1])
    assert mi_awgn(d) == pytest.approx(mi_awgn_trapezoid([-1, 1], [0.5, 0.5]), abs=1e-6)


def test_mi_awgn_vanishes_monotonically():
    vals = [mi_awgn(normalize([1, 1], [-a, a])) for a in (1.0, 0.5, 0.1, 0.01, 1e-3)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-6


def test_mi_poisson_point_mass():
    assert mi_poisson(DiscreteDistribution.point_mass(0.7), 10.0) == 0.0


def test_mi_poisson_matches_direct_sum():
    d = normalize([1, 1], [0.5, 2.0])
    assert mi_poisson(d, 10.0) == pytest.approx(mi_poisson_direct([0.5, 2.0], [0.5, 0.5], 10.0), abs=1e-10)


def test_mi_poisson_uninformative_limit():
    d = normalize([1, 1], [0.5, 2.0])
    vals = [mi_poisson(d, T) for T in (1.0, 1e-2, 1e-4)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[-1] < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.05, 1), min_size=4, max_size=4), st.lists(st.floats(0.05, 1), min_size=4, max_size=4),
       st.floats(0.05, 0.95))
def test_mi_concave_in_probabilities(m1, m2, lam):
    atoms = [-2.0, -0.5, 0.4, 1.7]
    p = np.array(m1) / sum(m1)
    q = np.array(m2) / sum(m2)
    mix = lam * p + (1 - lam) * q
    f = lambda v: mi_awgn(DiscreteDistribution(atoms, v))
    assert f(mix) >= lam * f(p) + (1 - lam) * f(q) - 1e-9
    pa = [0.5, 0.9, 1.4, 2.0]
    g = lambda v: mi_poisson(DiscreteDistribution(pa, v), 10.0)
    assert g(mix) >= lam * g(p) + (1 - lam) * g(q) - 1e-9


# --------------------------------------------------------------------------
# Solver


def test_constraint_validation():
    with pytest.raises(InfeasibleConstraints):
        solve_capacity(ChannelModel.poisson(1.0), ConstraintSet(peak_lo=0.0, peak_hi=1.0))
    with pytest.raises(InfeasibleConstraints):
        solve_capacity(ChannelModel.awgn(), ConstraintSet(duty_cycle=0.5))
    with pytest.raises(InfeasibleConstraints):
        solve_capacity(ChannelModel.awgn(), ConstraintSet())
    with pytest.raises(ValueError):
        ChannelModel("poisson-exposure", 0.0)


def test_zero_power_gives_point_mass():
    r = solve_capacity(ChannelModel.awgn(), ConstraintSet(avg_power=0.0, duty_cycle=0.5))
    assert r.prior.atoms.tolist() == [0.0] and r.mi_nats == 0.0


def test_awgn_unit_power_near_grid_oracle():
    P = 1.0
    r = solve_capacity(ChannelModel.awgn(), ConstraintSet(avg_power=P, duty_cycle=1.0))
    lower, upper, _, _ = awgn_grid_oracle(P, 1.0, L=6.0, h=0.02, max_iter=3000)
    assert abs(r.mi_nats - lower) <= 1e-2
    assert r.mi_nats <= 0.5 * math.log(1 + P)
    assert np.dot(r.prior.probs, r.prior.atoms ** 2) <= P + 1e-9


def test_poisson_solution_properties(ps_result):
    r = ps_result
    assert r.status == "ok"
    assert r.prior.atoms.min() >= 0.5 - 1e-12 and r.prior.atoms.max() <= 2.0 + 1e-12
    hist = [mi for _, mi in r.atom_count_history]
    assert all(b >= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] - hist[-2] < 1e-5
    assert r.mi_nats == pytest.approx(mi_poisson_direct(r.prior.atoms, r.prior.probs, 10.0), abs=1e-9)


def test_awgn_duty_cycle_constraints_and_history():
    P, q = 10 ** 0.4, 2 / 7
    r = solve_capacity(ChannelModel.awgn(), ConstraintSet(avg_power=P, duty_cycle=q))
    assert np.dot(r.prior.probs, r.prior.atoms ** 2) <= P + 1e-9
    assert r.prior.nonzero_mass() <= q + 1e-9
    np.testing.assert_allclose(r.prior.atoms, -r.prior.atoms[::-1], atol=1e-9)
    hist = [mi for _, mi in r.atom_count_history]
    assert all(b >= a for a, b in zip(hist, hist[1:]))
    assert hist[-1] - hist[-2] < 1e-5
    assert r.kkt_slack <= 1e-4
    assert r.mi_nats == pytest.approx(mi_awgn_trapezoid(r.prior.atoms, r.prior.probs), abs=1e-6)


# --------------------------------------------------------------------------
# KKT certificate


def test_kkt_degenerate_peak():
    r = solve_capacity(ChannelModel.poisson(10.0), ConstraintSet(peak_lo=1.0, peak_hi=1.0))
    assert kkt_certificate(r, ChannelModel.poisson(10.0), [1.0]) == 0.0


def test_kkt_ps_slack_and_independent_density(ps_result):
    ch = ChannelModel.poisson(10.0)
    grid = np.linspace(0.5, 2.0, 1501)
    slack = kkt_certificate(ps_result, ch, grid)
    assert slack <= 1e-4
    ind = poisson_info_density(grid, ps_result.prior.atoms, ps_result.prior.probs, 10.0)
    assert ind.max() - ps_result.mi_nats <= 1e-4
    on = poisson_info_density(ps_result.prior.atoms, ps_result.prior.atoms, ps_result.prior.probs, 10.0)
    np.testing.assert_allclose(on, ps_result.mi_nats, atol=1e-4)


def test_kkt_detects_perturbed_prior(ps_result):
    ch = ChannelModel.poisson(10.0)
    p = ps_result.prior.probs.copy()
    p[0] *= 1.05
    bad = CapacityResult(normalize(p, ps_result.prior.atoms), 0.0, 0.0, [], ())
    grid = default_certificate_grid(bad, ch, ConstraintSet(peak_lo=0.5, peak_hi=2.0))
    assert kkt_certificate(bad, ch, grid) > 1e-3
