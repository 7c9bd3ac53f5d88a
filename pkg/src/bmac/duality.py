"""Forward-to-reverse covariance maps.

``covariance_transform`` is the general stream-based map.  At polite
water-filling points it has the closed form of ``explicit_dual`` and, on
acyclic networks, agrees with the flipped-channel map of
``macbc_flipped_transform``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import herm, pd_solve, psd_inv_sqrt, psd_sqrt
from .netmodel import Network, is_itree_order, reverse_network
from .politewf import check_structure, whiten_channel
from .streams import (
    CovarianceSet,
    StreamDecomposition,
    crosstalk,
    decompose_network,
    duality_powers,
    forward_sinr,
    interference_covariances,
    link_rates,
)

__all__ = [
    "TransformReport",
    "covariance_transform",
    "reverse_transform",
    "explicit_dual",
    "check_matrix_equation",
    "macbc_flipped_transform",
    "dual_network",
    "equivalent_traces",
]


@dataclass(frozen=True)
class TransformReport:
    """Result of mapping forward covariances to the reverse links.

    ``per_link_equiv_power[l]`` is ``(Tr(S_l Omega_hat_l), Tr(S_hat_l Omega_l))``,
    the traces of the two equivalent covariances, which agree link by link.
    Rates are in bits.
    """

    reverse_covs: CovarianceSet
    forward_rates: np.ndarray
    reverse_rates: np.ndarray
    power_in: float
    power_out: float
    per_link_equiv_power: np.ndarray
    streams: StreamDecomposition
    sinr: np.ndarray
    omegas: list
    omegas_hat: list

    def weighted_reverse_rate(self, weights) -> float:
        return float(np.asarray(weights) @ self.reverse_rates)


def equivalent_traces(covs, duals, omegas, omegas_hat) -> np.ndarray:
    return np.array(
        [
            [float(np.real(np.sum(s * oh.T))), float(np.real(np.sum(sh * o.T)))]
            for s, sh, o, oh in zip(covs, duals, omegas, omegas_hat)
        ]
    )


def covariance_transform(net: Network, covs, mode: str = "eigen") -> TransformReport:
    """Map forward covariances to reverse covariances with at least the same rates.

    Every ``S_l`` is split into beams, each beam gets an MMSE-SIC receiver
    ``r``, reverse powers ``q`` are chosen so every reverse beam meets the
    forward SINR, and ``S_hat_l = sum_m q_lm r_lm r_lm^H``.

    Raises
    ------
    DualityError
        When the reverse-power system is infeasible.
    """
    covs = covs if isinstance(covs, CovarianceSet) else CovarianceSet(tuple(covs))
    omegas = interference_covariances(net, covs, "forward")
    dec = decompose_network(net, covs, mode, omegas)
    psi = crosstalk(net, dec)
    q = duality_powers(dec, psi)
    dec.q = dec.split(q)
    duals = []
    for l in range(net.L):
        R = dec.R[l]
        duals.append(herm((R * dec.q[l]) @ R.conj().T))
    duals = CovarianceSet(tuple(duals), "reverse")
    omegas_hat = interference_covariances(net, duals, "reverse")
    fwd = link_rates(net, covs, "forward", omegas=omegas)
    rev = link_rates(net, duals, "reverse", omegas=omegas_hat)
    p_in = sum(float(np.real(np.sum(s * net.constraint(l).T))) for l, s in enumerate(covs))
    p_out = sum(float(np.real(np.sum(s * net.noise(l).T))) for l, s in enumerate(duals))
    return TransformReport(
        reverse_covs=duals,
        forward_rates=fwd,
        reverse_rates=rev,
        power_in=p_in,
        power_out=p_out,
        per_link_equiv_power=equivalent_traces(covs, duals, omegas, omegas_hat),
        streams=dec,
        sinr=forward_sinr(dec, psi),
        omegas=omegas,
        omegas_hat=omegas_hat,
    )


def reverse_transform(net: Network, duals, mode: str = "eigen") -> TransformReport:
    """Map reverse covariances back to forward ones (the same map on the reverse network).

    The ``reverse_covs`` field of the result holds forward-role covariances.
    """
    rep = covariance_transform(net.reverse, CovarianceSet(tuple(duals), "forward"), mode)
    fwd = CovarianceSet(rep.reverse_covs.sigma, "forward")
    return TransformReport(
        fwd,
        rep.forward_rates,
        rep.reverse_rates,
        rep.power_in,
        rep.power_out,
        rep.per_link_equiv_power,
        rep.streams,
        rep.sinr,
        rep.omegas,
        rep.omegas_hat,
    )


def explicit_dual(net: Network, covs, levels=None, duals=None, tol: float = 1e-6) -> CovarianceSet:
    """Closed-form reverse covariances at a polite water-filling point.

    ``S_hat_l = nu_l (Omega_l^{-1} - (H_ll S_l H_ll^H + Omega_l)^{-1})``.

    Parameters
    ----------
    levels : sequence of float, optional
        Water levels.  Recovered from ``duals`` when omitted.
    duals : CovarianceSet, optional
        Matched reverse covariances.  When given, the forward set must pass
        the structure check or ``ValueError`` is raised.
    """
    if duals is not None:
        checks = check_structure(net, covs, duals, tol)
        bad = [l for l, c in enumerate(checks) if not c.is_pwf]
        if bad:
            raise ValueError(f"links {bad} do not have the polite water-filling structure")
        if levels is None:
            levels = [c.level for c in checks]
    if levels is None:
        raise ValueError("need either water levels or matched reverse covariances")
    omegas = interference_covariances(net, covs, "forward")
    out = []
    for l in range(net.L):
        s = covs[l]
        n = omegas[l].shape[0]
        if not np.any(s):
            out.append(np.zeros((n, n), dtype=complex))
            continue
        h = net.H[l][l]
        eye = np.eye(n, dtype=complex)
        oi = pd_solve(omegas[l], eye)
        ti = pd_solve(herm(omegas[l] + h @ s @ h.conj().T), eye)
        out.append(herm(levels[l] * (oi - ti)))
    return CovarianceSet(tuple(out), "reverse")


def check_matrix_equation(net: Network, covs, duals) -> np.ndarray:
    """Per-link ``||Omega_hat^{-1} H^H S_hat H - S H^H Omega^{-1} H||_F``.

    Vanishes at polite water-filling pairs.
    """
    omegas = interference_covariances(net, covs, "forward")
    omegas_hat = interference_covariances(net, duals, "reverse")
    res = []
    for l in range(net.L):
        h = net.H[l][l]
        lhs = pd_solve(omegas_hat[l], h.conj().T @ duals[l] @ h)
        rhs = covs[l] @ h.conj().T @ pd_solve(omegas[l], h)
        res.append(float(np.linalg.norm(lhs - rhs)))
    return np.array(res)


def macbc_flipped_transform(net: Network, covs, itree_order) -> CovarianceSet:
    """Reverse covariances by flipping each whitened channel.

    With ``Omega^{-1/2} H Omega_hat^{-1/2} = F Delta G^H``,
    ``S_hat = Omega^{-1/2} F G^H Omega_hat^{1/2} S Omega_hat^{1/2} G F^H Omega^{-1/2}``.
    ``Omega_hat`` depends on reverse covariances of links that precede in
    ``itree_order``, so the links are processed in that order.
    """
    order = list(itree_order)
    if sorted(order) != list(range(net.L)) or not is_itree_order(net.phi, order):
        raise ValueError("flipped transform needs an acyclic (iTree) order")
    omegas = interference_covariances(net, covs, "forward")
    duals: list = [None] * net.L
    for l in order:
        om_hat = net.constraint(l).copy()
        for k in np.flatnonzero(net.phi[:, l]):
            h = net.H[k][l]
            om_hat = om_hat + h.conj().T @ duals[k] @ h
        om_hat = herm(om_hat)
        wc = whiten_channel(net.H[l][l], omegas[l], om_hat)
        sq_hat = psd_sqrt(om_hat)
        a = psd_inv_sqrt(omegas[l]) @ wc.F @ wc.G.conj().T @ sq_hat
        duals[l] = herm(a @ covs[l] @ a.conj().T)
    return CovarianceSet(tuple(duals), "reverse")


def dual_network(net: Network) -> Network:
    """Dual of a network with one linear constraint and colored noise.

    Channels are conjugate-transposed, the coupling is transposed, and the
    noise covariances become the constraint matrices and vice versa.
    Unspecified matrices are identity; a list with only some entries set is
    rejected.
    """
    for mats, name in ((net.noise_covs, "noise_covs"), (net.link_constraints, "link_constraints")):
        if mats is not None and any(m is None for m in mats) and not all(m is None for m in mats):
            raise ValueError(f"{name} is only partially specified")
    return reverse_network(net)
