import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bmac.harness import FIG3_PHI, PHI_A, PHI_B, PHI_C, PHI_D
from bmac.netmodel import (
    Network,
    apply_orders,
    assign_orders,
    interference_graph,
    is_itree_order,
    itree_index,
    permute_network,
    reverse_network,
    validate_network,
    whiten,
    z_concavity_check,
)
from bmac.streams import link_rates, weighted_sum_rate

import oracles
from conftest import crandn, random_covs, random_network, random_phi, random_psd

seeds = st.integers(0, 2**32 - 1)


def _fig1_net(rng, phi):
    # T2 and T3 share a transmitter, R1 and R2 share a receiver
    return random_network(rng, 3, phi=phi, tx_group=(0, 1, 1), rx_group=(0, 0, 1))


@pytest.mark.parametrize("phi", [PHI_A, PHI_B, PHI_C, PHI_D])
def test_fixture_couplings_are_valid(rng, phi):
    assert validate_network(_fig1_net(rng, phi)) == []


def test_diagonal_coupling_is_reported(rng):
    phi = PHI_A.copy()
    phi[1, 1] = 1
    errs = validate_network(_fig1_net(rng, phi))
    assert len(errs) == 1 and "phi[1,1]" in errs[0]


def test_shared_receiver_needs_equal_dims(rng):
    H = [[crandn(rng, 2, 2), crandn(rng, 2, 2)], [crandn(rng, 3, 2), crandn(rng, 3, 2)]]
    net = Network(H=H, phi=[[0, 1], [0, 0]], weights=[1, 1], power=1.0, rx_group=(0, 0))
    errs = validate_network(net)
    assert len(errs) == 1 and "receive" in errs[0]


def test_other_violations(rng):
    net = random_network(rng, 2, phi=[[0, 2], [0, 0]], weights=[1.0, -1.0], power=0.0)
    errs = validate_network(net)
    assert any("not binary" in e for e in errs)
    assert any("weights" in e for e in errs)
    assert any("power" in e for e in errs)
    bad_noise = random_network(rng, 2, noise_covs=[np.eye(2), -np.eye(2)])
    assert any("positive definite" in e for e in validate_network(bad_noise))


def test_interference_graph_edges():
    g = interference_graph(PHI_B)
    assert set(g.edges) == {(1, 0), (2, 0), (0, 2), (1, 2)}


@settings(max_examples=25)
@given(seeds, st.integers(1, 4))
def test_reverse_is_involution(seed, L):
    rng = np.random.default_rng(seed)
    net = random_network(rng, L, nt=2, nr=3, phi=random_phi(rng, L),
                         noise_covs=[random_psd(rng, 3, 3) + np.eye(3) for _ in range(L)],
                         link_constraints=[random_psd(rng, 2, 2) + np.eye(2) for _ in range(L)])
    back = reverse_network(reverse_network(net))
    assert np.array_equal(back.phi, net.phi)
    for l in range(L):
        assert np.array_equal(back.noise(l), net.noise(l))
        assert np.array_equal(back.constraint(l), net.constraint(l))
        for k in range(L):
            assert np.array_equal(back.H[l][k], net.H[l][k])
    assert net.reverse.reverse is net


def test_reverse_swaps_constraint_and_noise(rng):
    A = np.diag([2.0, 3.0])
    B = np.diag([5.0, 7.0])
    net = random_network(rng, 2, link_constraints=[A, A], noise_covs=[B, B])
    rev = net.reverse
    for l in range(2):
        np.testing.assert_array_equal(rev.constraint(l), B)
        np.testing.assert_array_equal(rev.noise(l), A)


def test_reverse_mac_coupling(rng):
    L = 4
    phi = np.triu(np.ones((L, L), dtype=int), 1)  # phi[l, k] = 1 for k > l
    rev = random_network(rng, L, phi=phi).reverse
    assert np.array_equal(rev.phi, np.tril(np.ones((L, L), dtype=int), -1))


def test_fig3_orders():
    perm = itree_index(FIG3_PHI["A"])
    assert perm is not None and is_itree_order(FIG3_PHI["A"], perm)
    assert itree_index(FIG3_PHI["B"]) is None
    for phi in (PHI_A, PHI_B, PHI_C, PHI_D):
        assert itree_index(phi) is None


def test_itree_tie_break_lowest_index():
    assert itree_index(np.zeros((3, 3), dtype=int)) == [0, 1, 2]
    # link 2 interferes with nobody, so it is peeled first
    phi = np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]])
    assert itree_index(phi) == [0, 1, 2]
    phi = np.array([[0, 0, 0], [1, 0, 0], [0, 0, 0]])
    assert itree_index(phi) == [1, 0, 2]


@settings(max_examples=200)
@given(seeds, st.integers(1, 8), st.floats(0.05, 0.9))
def test_itree_matches_cycle_oracle(seed, L, density):
    rng = np.random.default_rng(seed)
    phi = random_phi(rng, L, density)
    perm = itree_index(phi)
    assert (perm is None) == oracles.has_cycle(phi)
    if perm is not None:
        assert sorted(perm) == list(range(L))
        p = phi[np.ix_(perm, perm)]
        assert not np.any(np.tril(p))
        # the reverse network is an iTree under the reversed labels
        rp = phi.T[np.ix_(perm[::-1], perm[::-1])]
        assert not np.any(np.tril(rp))


def test_permute_network_relabels(rng):
    net = random_network(rng, 3, phi=FIG3_PHI["A"][:3, :3])
    perm = [2, 0, 1]
    p = permute_network(net, perm)
    for a in range(3):
        for b in range(3):
            assert np.array_equal(p.H[a][b], net.H[perm[a]][perm[b]])
            assert p.phi[a, b] == net.phi[perm[a], perm[b]]


def test_mac_order_by_weight(rng):
    net = random_network(rng, 2, weights=[1.0, 2.0], rx_group=(0, 0))
    (g,) = assign_orders(net, [("mac", [0, 1])])
    assert g.qualifies and g.order == (0, 1)
    phi = apply_orders(net.phi, [g])
    # link 0 decoded first sees link 1; link 1 is decoded interference-free
    assert phi.tolist() == [[0, 1], [0, 0]]


def test_bc_order_by_weight(rng):
    net = random_network(rng, 3, weights=[1.0, 3.0, 2.0], tx_group=(0, 0, 0))
    (g,) = assign_orders(net, [("bc", [0, 1, 2])])
    assert g.order == (1, 2, 0)
    # the last-encoded link suffers no interference from the earlier ones
    phi = apply_orders(net.phi, [g])
    assert phi[0].tolist() == [0, 0, 0]
    assert phi[1].tolist() == [1, 0, 1]


def test_order_ties_and_singletons(rng):
    net = random_network(rng, 3, weights=[1.0, 1.0, 1.0])
    g, single = assign_orders(net, [("mac", [2, 0]), ("bc", [1])])
    assert g.order == (0, 2)
    assert single.order == (1,) and single.phi_block.tolist() == [[0]]
    with pytest.raises(IndexError):
        assign_orders(net, [("mac", [0, 5])])


def test_equal_weight_orders_reach_equal_optimum():
    # 2-user SISO MAC, equal weights: both SIC orders give the same best sum-rate
    g1, g2, P = 2.0, 0.7, 10.0
    a, _ = oracles.siso_mac_example(g1, g2, 1.0, 1.0, P)
    b, _ = oracles.siso_mac_example(g2, g1, 1.0, 1.0, P)
    assert a == pytest.approx(b, abs=1e-9)


def test_non_pseudo_group_is_reported(rng):
    phi = np.array([[0, 1, 1], [1, 0, 0], [0, 0, 0]])
    net = random_network(rng, 3, phi=phi)
    (g,) = assign_orders(net, [("mac", [0, 1])])
    assert not g.qualifies and g.order is None and g.reason


def test_whiten_identity(rng):
    net = random_network(rng, 2)
    white, wmap = whiten(net)
    for l in range(2):
        for k in range(2):
            np.testing.assert_allclose(white.H[l][k], net.H[l][k], atol=1e-14)
        np.testing.assert_allclose(wmap.tx_isqrt[l], np.eye(2), atol=1e-14)


def test_whiten_siso_scalar():
    net = Network(H=[[np.array([[2.0]])]], phi=[[0]], weights=[1.0], power=4.0,
                  link_constraints=[np.array([[4.0]])], noise_covs=[np.array([[1.0]])])
    white, wmap = whiten(net)
    assert white.H[0][0][0, 0] == pytest.approx(1.0)
    p_white = 4.0
    (s,) = wmap.to_original([np.array([[p_white]])])
    assert s[0, 0].real == pytest.approx(1.0)
    assert link_rates(white, [np.array([[p_white]])])[0] == pytest.approx(np.log2(1 + 4 * 1.0))
    assert link_rates(net, [s])[0] == pytest.approx(np.log2(1 + 4 * 1.0))


@settings(max_examples=20)
@given(seeds)
def test_whiten_preserves_rates(seed):
    rng = np.random.default_rng(seed)
    L = 2
    net = random_network(rng, L, nt=2, nr=3, phi=[[0, 1], [1, 0]],
                         noise_covs=[random_psd(rng, 3, 3) + 0.2 * np.eye(3) for _ in range(L)],
                         link_constraints=[random_psd(rng, 2, 2) + 0.2 * np.eye(2) for _ in range(L)])
    white, wmap = whiten(net)
    s_white = random_covs(rng, white)
    s = wmap.to_original(s_white)
    np.testing.assert_allclose(link_rates(net, s), link_rates(white, s_white), atol=1e-10)
    np.testing.assert_allclose(wmap.to_whitened(s), s_white, atol=1e-10)


def test_whiten_rejects_indefinite(rng):
    net = random_network(rng, 1, phi=[[0]], noise_covs=[np.diag([1.0, -1.0])])
    with pytest.raises(ValueError):
        whiten(net)


def test_z_concavity_examples():
    w = z_concavity_check(np.eye(2), 2 * np.eye(2), 1.0, 1.0)
    assert w.concave and w.min_eig == pytest.approx(3.0)
    w = z_concavity_check(2 * np.eye(2), np.eye(2), 1.0, 1.0)
    assert not w.concave and w.min_eig == pytest.approx(-3.0)
    assert not z_concavity_check(np.eye(2), 2 * np.eye(2), 2.0, 1.0)
    with pytest.raises(ValueError):
        z_concavity_check(np.ones((2, 3)), np.ones((2, 3)), 1, 1)


def _z_pair(rng, n=3):
    H22 = crandn(rng, n, n)
    H12 = crandn(rng, n, n)
    smin = np.linalg.svd(H22, compute_uv=False)[-1]
    smax = np.linalg.svd(H12, compute_uv=False)[0]
    return H12 * (0.9 * smin / smax), H22


def test_z_concavity_second_difference(rng):
    n = 3
    H12, H22 = _z_pair(rng, n)
    H11 = crandn(rng, n, n)
    w1, w2 = 0.8, 1.2
    assert z_concavity_check(H12, H22, w1, w2)
    f, _ = oracles.z_objective(H11, H12, H22, w1, w2)
    S1 = random_psd(rng, n, 2.0)
    for _ in range(20):
        a, b = random_psd(rng, n, 3.0), random_psd(rng, n, 3.0)
        for t in np.linspace(0.1, 0.9, 5):
            h = 0.05
            vals = [f([S1, a + (t + d) * (b - a)]) for d in (-h, 0.0, h)]
            assert vals[0] - 2 * vals[1] + vals[2] <= 1e-8


def test_weighted_sum_rate_single_link(rng):
    net = random_network(rng, 1, phi=[[0]], weights=[2.0])
    s = [random_psd(rng, 2, 5.0)]
    h = net.H[0][0]
    expect = 2.0 * np.linalg.slogdet(np.eye(2) + h @ s[0] @ h.conj().T)[1] / np.log(2)
    assert weighted_sum_rate(net, s) == pytest.approx(expect, rel=1e-12)
