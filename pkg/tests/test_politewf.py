import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmac.duality import covariance_transform
from bmac.harness import PHI_A
from bmac.linalg import herm, is_psd
from bmac.politewf import (
    check_structure,
    estimate_multiplier,
    kkt_residual,
    solve_level_multi,
    waterfill_at_level,
    whiten_channel,
    wsr_gradient,
)
from bmac.streams import weighted_sum_rate

import oracles
from conftest import crandn, random_covs, random_network, random_phi, random_psd

seeds = st.integers(0, 2**32 - 1)


def _single(rng, nr, nt, P=10.0):
    return random_network(rng, 1, nt=nt, nr=nr, phi=[[0]], weights=[1.0], power=P)


@settings(max_examples=40)
@given(seeds, st.integers(1, 4), st.integers(1, 4), st.floats(0.1, 100.0))
def test_identity_whitening_is_classical_waterfilling(seed, nr, nt, P):
    rng = np.random.default_rng(seed)
    H = crandn(rng, nr, nt)
    wc = whiten_channel(H, np.eye(nr), np.eye(nt))
    mu, (res,) = solve_level_multi([wc], [1.0], None, P)
    cap, nu = oracles.waterfill_bisection(H, P)
    rate = np.linalg.slogdet(np.eye(nr) + H @ res.Sigma @ H.conj().T)[1]
    assert rate == pytest.approx(cap, abs=1e-9)
    assert res.level == pytest.approx(nu, rel=1e-9)
    assert np.real(np.trace(res.Sigma)) == pytest.approx(P, rel=1e-12)


@settings(max_examples=40)
@given(seeds, st.integers(1, 4), st.floats(0.1, 50.0))
def test_multi_level_matches_bisection(seed, L, budget):
    rng = np.random.default_rng(seed)
    chans = [whiten_channel(crandn(rng, 3, 2), random_psd(rng, 3, 3) + np.eye(3),
                            random_psd(rng, 2, 2) + np.eye(2)) for _ in range(L)]
    w = rng.uniform(0.2, 2.0, L)
    mu, res = solve_level_multi(chans, w, None, budget)
    ref = oracles.level_bisection([c.delta for c in chans], w, [c.mode_costs() for c in chans], budget)
    assert mu == pytest.approx(ref, rel=1e-9)
    assert sum(r.power for r in res) == pytest.approx(budget, rel=1e-10)
    for r, wl in zip(res, w):
        assert r.level == pytest.approx(wl / mu)
        assert np.all(r.d >= 0)
        # the power cost of a mode is its transmit trace
        assert np.real(np.trace(r.Sigma)) == pytest.approx(r.power, rel=1e-10, abs=1e-12)


def test_waterfill_at_level(rng):
    wc = whiten_channel(crandn(rng, 3, 3), np.eye(3), np.eye(3))
    assert np.all(waterfill_at_level(wc, 0.0).d == 0)
    r = waterfill_at_level(wc, 10.0)
    np.testing.assert_allclose(r.d, np.maximum(10.0 - 1 / wc.delta**2, 0))
    assert is_psd(r.Sigma)
    with pytest.raises(ValueError):
        waterfill_at_level(wc, -1.0)


def test_level_solver_errors(rng):
    wc = whiten_channel(crandn(rng, 2, 2), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        solve_level_multi([wc], [1.0], None, 0.0)
    with pytest.raises(ValueError):
        solve_level_multi([wc], [0.0], None, 1.0)
    zero = whiten_channel(np.zeros((2, 2)), np.eye(2), np.eye(2))
    assert zero.rank == 0
    with pytest.raises(ValueError):
        solve_level_multi([zero], [1.0], None, 1.0)


def test_zero_weight_link_gets_nothing(rng):
    chans = [whiten_channel(crandn(rng, 2, 2), np.eye(2), np.eye(2)) for _ in range(2)]
    _, res = solve_level_multi(chans, [1.0, 0.0], None, 5.0)
    assert res[1].power == 0.0 and res[0].power == pytest.approx(5.0)


def test_whiten_channel_truncates_rank(rng):
    h = crandn(rng, 3, 1) @ crandn(rng, 1, 3)
    wc = whiten_channel(h, np.eye(3), np.eye(3))
    assert wc.rank == 1
    np.testing.assert_allclose((wc.F * wc.delta) @ wc.G.conj().T, h, atol=1e-12)


def test_single_user_optimum_has_pwf_structure(rng):
    net = _single(rng, 3, 3)
    wc = whiten_channel(net.H[0][0], np.eye(3), np.eye(3))
    _, (res,) = solve_level_multi([wc], [1.0], None, net.power)
    duals = covariance_transform(net, [res.Sigma]).reverse_covs
    (chk,) = check_structure(net, [res.Sigma], duals)
    assert chk.is_pwf and chk.level == pytest.approx(res.level, rel=1e-9)
    rep = kkt_residual(net, [res.Sigma], mu=1.0 / res.level)
    assert rep.aggregate <= 1e-8
    assert estimate_multiplier(net, [res.Sigma]) == pytest.approx(1.0 / res.level, rel=1e-9)


def test_random_point_is_not_pwf(rng):
    net = _single(rng, 3, 3)
    s = [random_psd(rng, 3, net.power)]
    duals = covariance_transform(net, s).reverse_covs
    assert not check_structure(net, s, duals)[0].is_pwf
    assert kkt_residual(net, s).aggregate > 1e-3


def test_zero_covariance_reports_zero_level(rng):
    net = random_network(rng, 2, phi=[[0, 1], [0, 0]])
    covs = [np.zeros((2, 2), complex), random_psd(rng, 2, 3.0)]
    duals = covariance_transform(net, covs).reverse_covs
    assert check_structure(net, covs, duals)[0].level == 0.0


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(1, 3))
def test_gradient_matches_finite_differences(seed, L):
    rng = np.random.default_rng(seed)
    net = random_network(rng, L, nt=2, nr=3, phi=random_phi(rng, L))
    covs = random_covs(rng, net)
    grads = wsr_gradient(net, covs)
    ln2 = np.log(2.0)
    f = lambda c: weighted_sum_rate(net, c) * ln2
    for _ in range(5):
        dirs = [herm(crandn(rng, n, n)) for n in net.nt]
        h = 1e-5
        fd = (f([s + h * d for s, d in zip(covs, dirs)]) - f([s - h * d for s, d in zip(covs, dirs)])) / (2 * h)
        an = sum(float(np.real(np.sum(A.T * d))) for A, d in zip(grads, dirs))
        assert an == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_gradient_with_mutual_interference(rng):
    net = random_network(rng, 3, phi=PHI_A)
    covs = random_covs(rng, net)
    g = wsr_gradient(net, covs)
    assert all(np.allclose(A, A.conj().T) for A in g)
