import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmac.algorithms import RunOptions, algorithm_pt
from bmac.duality import (
    check_matrix_equation,
    covariance_transform,
    dual_network,
    explicit_dual,
    macbc_flipped_transform,
    reverse_transform,
)
from bmac.harness import FIG3_PHI, PHI_A, PHI_B, PHI_C, PHI_D
from bmac.netmodel import itree_index
from bmac.politewf import check_structure
from bmac.streams import link_rates

from conftest import random_covs, random_network, random_phi, random_psd

seeds = st.integers(0, 2**32 - 1)
FIXTURES = [PHI_A, PHI_B, PHI_C, PHI_D]


def _net_for(rng, L, n_ant, kind, **kw):
    if kind == "fixture" and L == 3:
        phi = FIXTURES[rng.integers(4)]
    else:
        phi = random_phi(rng, L)
    nt = rng.integers(1, n_ant + 1, L)
    nr = rng.integers(1, n_ant + 1, L)
    return random_network(rng, L, nt=nt, nr=nr, phi=phi, **kw)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 5), st.integers(1, 4), st.sampled_from(["fixture", "random"]), st.booleans())
def test_transform_invariants(seed, L, n_ant, kind, low_rank):
    rng = np.random.default_rng(seed)
    net = _net_for(rng, L, n_ant, kind)
    covs = random_covs(rng, net, rank_drop=low_rank)
    rep = covariance_transform(net, covs)
    assert rep.power_out == pytest.approx(rep.power_in, rel=1e-9)
    assert np.all(rep.reverse_rates >= rep.forward_rates - 1e-9)
    np.testing.assert_allclose(rep.per_link_equiv_power[:, 0], rep.per_link_equiv_power[:, 1], rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(rep.forward_rates, link_rates(net, covs), atol=1e-12)
    assert rep.reverse_covs.role == "reverse" and rep.reverse_covs.is_valid()


@settings(max_examples=20, deadline=None)
@given(seeds, st.integers(1, 4))
def test_transform_with_constraint_and_colored_noise(seed, L):
    rng = np.random.default_rng(seed)
    net = random_network(rng, L, nt=2, nr=3, phi=random_phi(rng, L),
                         noise_covs=[random_psd(rng, 3, 3) + 0.3 * np.eye(3) for _ in range(L)],
                         link_constraints=[random_psd(rng, 2, 2) + 0.3 * np.eye(2) for _ in range(L)])
    covs = random_covs(rng, net)
    rep = covariance_transform(net, covs)
    p_in = sum(np.real(np.trace(s @ net.constraint(l))) for l, s in enumerate(covs))
    p_out = sum(np.real(np.trace(s @ net.noise(l))) for l, s in enumerate(rep.reverse_covs))
    assert p_in == pytest.approx(rep.power_in) and p_out == pytest.approx(p_in, rel=1e-9)
    assert np.all(rep.reverse_rates >= rep.forward_rates - 1e-9)


def test_orthostream_mode_also_works(rng):
    net = random_network(rng, 3, nt=3, nr=3, phi=PHI_B)
    covs = random_covs(rng, net)
    rep = covariance_transform(net, covs, mode="orthostream")
    assert rep.power_out == pytest.approx(rep.power_in, rel=1e-9)
    assert np.all(rep.reverse_rates >= rep.forward_rates - 1e-9)


def test_zero_link_is_carried_through(rng):
    net = random_network(rng, 2, phi=[[0, 1], [1, 0]])
    covs = [np.zeros((2, 2), complex), random_psd(rng, 2, 5.0)]
    rep = covariance_transform(net, covs)
    assert not np.any(rep.reverse_covs[0])
    assert rep.power_out == pytest.approx(5.0)


def test_reverse_transform_returns_forward_role(rng):
    net = random_network(rng, 3, phi=PHI_C)
    covs = random_covs(rng, net)
    duals = covariance_transform(net, covs).reverse_covs
    back = reverse_transform(net, duals)
    assert back.reverse_covs.role == "forward"
    assert back.power_out == pytest.approx(net.power, rel=1e-9)
    # going back never loses rate either
    assert np.all(link_rates(net, back.reverse_covs) >= link_rates(net, duals, "reverse") - 1e-9)


@pytest.fixture(scope="module")
def pt_points():
    out = []
    for seed in range(4):
        rng = np.random.default_rng(100 + seed)
        L = 2 + seed % 2
        phi = [[0, 1], [0, 0]] if L == 2 else FIG3_PHI["A"][:3, :3]
        net = random_network(rng, L, nt=2, nr=2, phi=phi)
        rep = algorithm_pt(net, RunOptions(max_iter=3000, rel_tol=0.0, step_tol=1e-10))
        out.append((net, rep))
    return out


def test_explicit_dual_at_fixed_point(pt_points):
    for net, rep in pt_points:
        assert rep.converged
        duals = covariance_transform(net, rep.final_covs).reverse_covs
        assert all(c.is_pwf for c in check_structure(net, rep.final_covs, duals))
        exp = explicit_dual(net, rep.final_covs, duals=duals)
        for a, b in zip(exp, duals):
            assert np.linalg.norm(a - b) <= 1e-6
        assert check_matrix_equation(net, rep.final_covs, duals).max() <= 1e-8
        flipped = macbc_flipped_transform(net, rep.final_covs, itree_index(net))
        for a, b in zip(flipped, duals):
            assert np.linalg.norm(a - b) <= 1e-6


def test_explicit_dual_rejects_non_pwf(rng):
    net = random_network(rng, 2, phi=[[0, 1], [1, 0]])
    covs = random_covs(rng, net)
    duals = covariance_transform(net, covs).reverse_covs
    with pytest.raises(ValueError):
        explicit_dual(net, covs, duals=duals)
    with pytest.raises(ValueError):
        explicit_dual(net, covs)
    assert len(explicit_dual(net, covs, levels=[1.0, 1.0])) == 2


def test_flipped_needs_itree(rng):
    net = random_network(rng, 3, phi=PHI_D)
    with pytest.raises(ValueError):
        macbc_flipped_transform(net, random_covs(rng, net), [0, 1, 2])


def test_dual_network(rng):
    A = np.diag([2.0, 1.0])
    net = random_network(rng, 2, link_constraints=[A, A])
    dual = dual_network(net)
    np.testing.assert_array_equal(dual.noise(0), A)
    np.testing.assert_array_equal(dual.constraint(0), np.eye(2))
    partial = random_network(rng, 2, noise_covs=[np.eye(2), None])
    with pytest.raises(ValueError):
        dual_network(partial)
