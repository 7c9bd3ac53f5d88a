"""Polite water-filling.

A link's channel is whitened on the receive side by its interference
covariance ``Omega`` and on the transmit side by the reverse-link
interference covariance ``Omega_hat``.  Water-filling over the singular
modes of that channel, then undoing the transmit whitening, gives a
covariance that accounts for the harm the link does to others.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import herm, psd_inv_sqrt, psd_sqrt, pd_solve
from .netmodel import Network
from .streams import interference_covariances

__all__ = [
    "WhitenedChannel",
    "WaterfillResult",
    "StructureCheck",
    "KKTReport",
    "whiten_channel",
    "waterfill_at_level",
    "solve_level_multi",
    "check_structure",
    "wsr_gradient",
    "kkt_residual",
    "estimate_multiplier",
]

RANK_RTOL = 1e-12


@dataclass(frozen=True)
class WhitenedChannel:
    """Thin SVD ``F diag(delta) G^H`` of ``Omega^{-1/2} H Omega_hat^{-1/2}``."""

    Hbar: np.ndarray
    F: np.ndarray
    delta: np.ndarray
    G: np.ndarray
    rx_isqrt: np.ndarray
    tx_isqrt: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.delta.size)

    @property
    def tx_basis(self) -> np.ndarray:
        """``Omega_hat^{-1/2} G``; its column norms are the mode power costs."""
        return self.tx_isqrt @ self.G

    def mode_costs(self) -> np.ndarray:
        return np.sum(np.abs(self.tx_basis) ** 2, axis=0)


@dataclass(frozen=True)
class WaterfillResult:
    d: np.ndarray
    level: float
    Sigma: np.ndarray
    rho: np.ndarray

    @property
    def power(self) -> float:
        return float(self.rho @ self.d)


def whiten_channel(H: np.ndarray, Omega: np.ndarray, OmegaHat: np.ndarray) -> WhitenedChannel:
    """Whiten ``H`` on both sides and take its rank-truncated thin SVD.

    Singular values below ``1e-12`` times the largest are dropped.
    """
    H = np.asarray(H, dtype=complex)
    a = psd_inv_sqrt(Omega)
    b = psd_inv_sqrt(OmegaHat)
    hbar = a @ H @ b
    if hbar.size == 0:
        F = np.zeros((H.shape[0], 0), dtype=complex)
        return WhitenedChannel(hbar, F, np.zeros(0), np.zeros((H.shape[1], 0), dtype=complex), a, b)
    F, s, Vh = np.linalg.svd(hbar, full_matrices=False)
    keep = s > RANK_RTOL * s[0] if s.size and s[0] > 0 else np.zeros(s.size, bool)
    return WhitenedChannel(hbar, F[:, keep], s[keep], Vh[keep].conj().T, a, b)


def _result(wc: WhitenedChannel, d: np.ndarray, level: float, rho=None) -> WaterfillResult:
    basis = wc.tx_basis
    sigma = herm((basis * d) @ basis.conj().T)
    if rho is None:
        rho = wc.mode_costs()
    return WaterfillResult(d, float(level), sigma, np.asarray(rho, dtype=float))


def waterfill_at_level(wc: WhitenedChannel, nu: float) -> WaterfillResult:
    """Mode powers ``(nu - 1/delta^2)^+`` mapped back through the transmit whitener."""
    if nu < 0:
        raise ValueError("water level must be nonnegative")
    d = np.maximum(nu - 1.0 / wc.delta**2, 0.0)
    return _result(wc, d, nu)


def solve_level_multi(
    channels: Sequence[WhitenedChannel],
    weights,
    rhos=None,
    budget: float = 1.0,
) -> tuple[float, list[WaterfillResult]]:
    """Joint water-filling with levels ``w_l / mu`` under one power budget.

    Finds ``mu`` such that ``d_li = (w_l/mu - 1/delta_li^2)^+`` satisfies
    ``sum rho_li d_li = budget``.  Each round computes ``mu`` in closed form
    over the active modes and drops every mode that came out negative;
    the round count is bounded by the number of modes.

    Parameters
    ----------
    channels : sequence of WhitenedChannel
    weights : (L,) array
    rhos : sequence of arrays, or None
        Per-mode power costs.  Defaults to the column norms of
        ``Omega_hat^{-1/2} G``; pass ones for a plain trace budget.
    budget : float

    Returns
    -------
    mu : float
    results : list of WaterfillResult
        Levels are ``w_l / mu`` for every link, including rank-0 ones.
    """
    weights = np.asarray(weights, dtype=float)
    if rhos is None:
        rhos = [wc.mode_costs() for wc in channels]
    rhos = [np.broadcast_to(np.asarray(r, dtype=float), wc.delta.shape) for r, wc in zip(rhos, channels)]
    if budget <= 0:
        raise ValueError("power budget must be positive")
    link = np.concatenate([np.full(wc.rank, l) for l, wc in enumerate(channels)]).astype(int)
    if link.size == 0:
        raise ValueError("every channel has rank 0; no power can be allocated")
    inv_d2 = np.concatenate([1.0 / wc.delta**2 for wc in channels])
    rho = np.concatenate(rhos)
    w = weights[link]
    if np.any(rho <= 0):
        raise ValueError("mode power costs must be positive")
    active = w > 0
    if not np.any(active):
        raise ValueError("all weights are zero")
    while True:
        mu = np.sum(rho[active] * w[active]) / (budget + np.sum(rho[active] * inv_d2[active]))
        d = w / mu - inv_d2
        neg = active & (d < 0)
        if not np.any(neg):
            break
        active &= ~neg
    d = np.where(active, np.maximum(d, 0.0), 0.0)
    out, start = [], 0
    for l, wc in enumerate(channels):
        n = wc.rank
        out.append(_result(wc, d[start:start + n], weights[l] / mu, rho[start:start + n]))
        start += n
    return float(mu), out


@dataclass(frozen=True)
class StructureCheck:
    is_pwf: bool
    level: float
    residual: float
    dual_residual: float


def _level_profile(x: np.ndarray, inv_d2: np.ndarray, scale: float) -> float:
    on = x > 1e-9 * scale
    if not np.any(on):
        return 0.0
    return float(np.mean(x[on] + inv_d2[on]))


def check_structure(net: Network, covs, duals, tol: float = 1e-6) -> list[StructureCheck]:
    """Test whether each link covariance has the polite water-filling form.

    With ``Q = Omega_hat^{1/2} S Omega_hat^{1/2}`` the test recovers a single
    level ``nu`` from the modes of the whitened channel and measures
    ``||Q - G (nu - Delta^-2)^+ G^H||_F``.  The dual side is checked the same
    way on ``Omega^{1/2} S_hat Omega^{1/2}`` against ``F``.  A link passes
    when both gaps are at most ``tol * (1 + ||Q||_F)``.
    """
    omegas = interference_covariances(net, covs, "forward")
    omegas_hat = interference_covariances(net, duals, "reverse")
    out = []
    for l in range(net.L):
        sigma, sigma_hat = covs[l], duals[l]
        wc = whiten_channel(net.H[l][l], omegas[l], omegas_hat[l])
        sq_hat = psd_sqrt(omegas_hat[l])
        sq = psd_sqrt(omegas[l])
        Q = herm(sq_hat @ sigma @ sq_hat)
        Qh = herm(sq @ sigma_hat @ sq)
        scale = 1.0 + np.linalg.norm(Q)
        inv_d2 = 1.0 / wc.delta**2
        x = np.real(np.einsum("im,ij,jm->m", wc.G.conj(), Q, wc.G))
        nu = _level_profile(x, inv_d2, scale)
        d = np.maximum(nu - inv_d2, 0.0)
        res = float(np.linalg.norm(Q - (wc.G * d) @ wc.G.conj().T))
        dres = float(np.linalg.norm(Qh - (wc.F * d) @ wc.F.conj().T))
        ok = res <= tol * scale and dres <= tol * (1.0 + np.linalg.norm(Qh))
        out.append(StructureCheck(bool(ok), nu, res, dres))
    return out


def wsr_gradient(net: Network, covs, omegas=None) -> list[np.ndarray]:
    """Gradient of the weighted sum-rate (nats) with respect to each ``S_l``.

    For Hermitian ``X`` the directional derivative along ``X`` at link
    ``l`` is ``Re Tr(A_l X)``.
    """
    L = net.L
    if omegas is None:
        omegas = interference_covariances(net, covs, "forward")
    # (Omega_k + H S H^H)^{-1} and Omega_k^{-1} - (Omega_k + H S H^H)^{-1}
    full_inv, penalty = [], []
    for k in range(L):
        h = net.H[k][k]
        tot = herm(omegas[k] + h @ covs[k] @ h.conj().T)
        ti = herm(pd_solve(tot, np.eye(tot.shape[0], dtype=complex)))
        oi = herm(pd_solve(omegas[k], np.eye(tot.shape[0], dtype=complex)))
        full_inv.append(ti)
        penalty.append(herm(oi - ti))
    grads = []
    w = net.weights
    for l in range(L):
        h = net.H[l][l]
        A = w[l] * h.conj().T @ full_inv[l] @ h
        for k in np.flatnonzero(net.phi[:, l]):
            if k == l or w[k] == 0:
                continue
            hk = net.H[k][l]
            A = A - w[k] * hk.conj().T @ penalty[k] @ hk
        grads.append(herm(A))
    return grads


@dataclass(frozen=True)
class KKTReport:
    per_link: np.ndarray
    aggregate: float
    power_gap: float
    mu: float


def _range_split(sigma: np.ndarray, rtol: float = 1e-9):
    ev, vec = np.linalg.eigh(herm(sigma))
    top = max(ev[-1], 0.0) if ev.size else 0.0
    on = ev > rtol * top if top > 0 else np.zeros(ev.size, bool)
    return vec[:, on], vec[:, ~on]


def estimate_multiplier(net: Network, covs, grads=None) -> float:
    """Power-weighted power multiplier ``sum Tr(A_l S_l) / sum Tr(S_l)``."""
    if grads is None:
        grads = wsr_gradient(net, covs)
    num = sum(float(np.real(np.sum(A.T * s))) for s, A in zip(covs, grads))
    den = sum(float(np.real(np.trace(s))) for s in covs)
    return num / den if den > 0 else 0.0


def kkt_residual(net: Network, covs, mu: float | None = None) -> KKTReport:
    """Stationarity residual of the weighted sum-rate problem (nats).

    With ``G_l = A_l - mu I`` and ``A_l`` the gradient, the residual of link
    ``l`` is the larger of ``||G_l P_range||_F`` and the positive part of
    ``lambda_max(P_null G_l P_null) - 1e-6 (1 + ||G_l||)``, both divided by
    ``mu``.  ``mu`` is estimated from the active subspaces when omitted.
    """
    grads = wsr_gradient(net, covs)
    if mu is None:
        mu = estimate_multiplier(net, covs, grads)
    norm = mu if mu > 0 else 1.0
    per = []
    for s, A in zip(covs, grads):
        G = A - mu * np.eye(A.shape[0])
        Ur, Un = _range_split(s)
        r_range = float(np.linalg.norm(G @ Ur)) if Ur.shape[1] else 0.0
        r_null = 0.0
        if Un.shape[1]:
            lam = np.linalg.eigvalsh(herm(Un.conj().T @ G @ Un))[-1]
            r_null = max(0.0, float(lam) - 1e-6 * (1.0 + np.linalg.norm(G)))
        per.append(max(r_range, r_null) / norm)
    per = np.array(per)
    total = sum(float(np.real(np.trace(s))) for s in covs)
    return KKTReport(per, float(per.max(initial=0.0)), abs(total - net.power) / net.power, float(mu))
