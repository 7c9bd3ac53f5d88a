"""Stream-level view of a B-MAC network.

Each link covariance is split into unit-norm beams with powers, every
beam gets an MMSE receiver with successive cancellation inside its link,
and the beams interact through a cross-talk matrix.  The reverse powers
that reproduce the forward SINRs in the reverse links come from one
linear solve (or, for acyclic interference graphs, a link-by-link sweep).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import linalg as sla

from .linalg import herm, is_psd, logdet_pd, phase_normalize
from .netmodel import Network, is_itree_order

__all__ = [
    "CovarianceSet",
    "StreamDecomposition",
    "DualityError",
    "interference_covariance",
    "interference_covariances",
    "link_rate",
    "link_rates",
    "weighted_sum_rate",
    "decompose",
    "mmse_sic_receivers",
    "decompose_network",
    "crosstalk",
    "forward_sinr",
    "reverse_sinr",
    "stream_rates",
    "duality_powers",
    "duality_powers_sequential",
    "zero_covs",
]

LN2 = np.log(2.0)
PRUNE_RTOL = 1e-12


class DualityError(ValueError):
    """The reverse-power system is singular or yields negative powers."""


@dataclass(frozen=True)
class CovarianceSet:
    """One Hermitian PSD input covariance per link.

    ``role`` is ``"forward"`` for transmit covariances of the forward
    links and ``"reverse"`` for those of the reverse links.
    """

    sigma: tuple
    role: str = "forward"

    def __post_init__(self):
        if self.role not in ("forward", "reverse"):
            raise ValueError(f"role must be 'forward' or 'reverse', not {self.role!r}")
        object.__setattr__(self, "sigma", tuple(np.asarray(s, dtype=complex) for s in self.sigma))

    def __len__(self) -> int:
        return len(self.sigma)

    def __getitem__(self, l):
        return self.sigma[l]

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.sigma)

    def total_power(self) -> float:
        return float(sum(np.real(np.trace(s)) for s in self.sigma))

    def is_valid(self) -> bool:
        return all(is_psd(s) and np.all(np.isfinite(s)) for s in self.sigma)


def zero_covs(net: Network, role: str = "forward") -> CovarianceSet:
    dims = net.nt if role == "forward" else net.nr
    return CovarianceSet(tuple(np.zeros((n, n), dtype=complex) for n in dims), role)


def _role(covs, role):
    if role is not None:
        return role
    return getattr(covs, "role", "forward")


def _oriented(net: Network, covs, role) -> Network:
    return net.reverse if _role(covs, role) == "reverse" else net


def _omega(net: Network, sigma: Sequence[np.ndarray], l: int) -> np.ndarray:
    om = net.noise(l).copy()
    for k in np.flatnonzero(net.phi[l]):
        h = net.H[l][k]
        om += h @ sigma[k] @ h.conj().T
    return herm(om)


def interference_covariance(net: Network, covs, l: int, role: str | None = None) -> np.ndarray:
    """Interference-plus-noise covariance seen by link ``l``.

    Forward role: ``W_l + sum_k phi[l,k] H[l][k] S_k H[l][k]^H``.  Reverse
    role uses the transposed coupling, conjugate channels and ``What_l``.
    """
    return _omega(_oriented(net, covs, role), covs, l)


def interference_covariances(net: Network, covs, role: str | None = None) -> list[np.ndarray]:
    net = _oriented(net, covs, role)
    return [_omega(net, covs, l) for l in range(net.L)]


def _rate_nats(h: np.ndarray, sigma: np.ndarray, omega: np.ndarray) -> float:
    if not np.any(sigma):
        return 0.0
    c = np.linalg.cholesky(omega)
    x = sla.solve_triangular(c, h, lower=True, check_finite=False)
    gram = herm(x @ sigma @ x.conj().T)
    gram[np.diag_indices_from(gram)] += 1.0
    return max(logdet_pd(gram), 0.0)


def link_rate(net: Network, covs, l: int, role: str | None = None, bits: bool = True) -> float:
    """Rate ``log|I + H_ll S_l H_ll^H Omega_l^{-1}|`` of link ``l``.

    Computed as the log-determinant of the Gram matrix whitened by the
    Cholesky factor of the interference-plus-noise covariance.
    """
    net = _oriented(net, covs, role)
    r = _rate_nats(net.H[l][l], covs[l], _omega(net, covs, l))
    return r / LN2 if bits else r


def link_rates(net: Network, covs, role: str | None = None, bits: bool = True, omegas=None) -> np.ndarray:
    net = _oriented(net, covs, role)
    if omegas is None:
        omegas = [_omega(net, covs, l) for l in range(net.L)]
    r = np.array([_rate_nats(net.H[l][l], covs[l], omegas[l]) for l in range(net.L)])
    return r / LN2 if bits else r


def weighted_sum_rate(net: Network, covs, role: str | None = None, bits: bool = True) -> float:
    return float(net.weights @ link_rates(net, covs, role, bits))


def decompose(sigma: np.ndarray, mode: str = "eigen", channel=None, omega=None):
    """Split a covariance into unit-norm beams and powers.

    Parameters
    ----------
    sigma : (n, n) Hermitian PSD array
    mode : {"eigen", "orthostream"}
        ``eigen`` uses eigenvectors (descending eigenvalues).
        ``orthostream`` picks beams that stay orthogonal after the
        whitened channel ``omega^{-1/2} channel``; it needs both extra
        arguments.
    channel, omega : arrays, optional

    Returns
    -------
    T : (n, M) array
        Unit-norm columns, phase-normalized.
    p : (M,) array
        Beam powers; ``sum_m p[m] T[:, m] T[:, m]^H == sigma``.
    """
    sigma = herm(np.asarray(sigma, dtype=complex))
    n = sigma.shape[0]
    if not is_psd(sigma):
        raise ValueError("covariance is not positive semidefinite")
    tr = float(np.real(np.trace(sigma)))
    if tr <= 0.0:
        return np.zeros((n, 0), dtype=complex), np.zeros(0)
    ev, vec = np.linalg.eigh(sigma)
    keep = ev > PRUNE_RTOL * tr
    ev, vec = ev[keep][::-1], vec[:, keep][:, ::-1]
    if mode == "eigen":
        return phase_normalize(vec), ev.copy()
    if mode != "orthostream":
        raise ValueError(f"unknown decomposition mode {mode!r}")
    if channel is None or omega is None:
        raise ValueError("orthostream mode needs the channel and interference covariance")
    a = vec * np.sqrt(ev)
    ha = channel @ a
    m = herm(ha.conj().T @ np.linalg.solve(omega, ha))
    e, v = np.linalg.eigh(m)
    v = v[:, ::-1]
    t = a @ v
    p = np.sum(np.abs(t) ** 2, axis=0)
    keep = p > PRUNE_RTOL * tr
    t, p = t[:, keep], p[keep]
    return phase_normalize(t / np.sqrt(p)), p


def mmse_sic_receivers(channel: np.ndarray, T: np.ndarray, p: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Unit-norm MMSE receivers with in-link successive cancellation.

    Beam ``m`` is decoded ``m``-th, so it sees the beams after it plus
    ``omega`` as interference.
    """
    nr, M = channel.shape[0], T.shape[1]
    R = np.zeros((nr, M), dtype=complex)
    hs = channel @ T
    K = omega.copy()
    for m in range(M - 1, -1, -1):
        h = hs[:, m]
        r = np.linalg.solve(K, h)
        nrm = np.linalg.norm(r)
        if nrm <= 1e-300:
            r = np.zeros(nr, dtype=complex)
            r[0] = 1.0
        else:
            r = r / nrm
        R[:, m] = r
        K = K + p[m] * np.outer(h, h.conj())
    return R


@dataclass
class StreamDecomposition:
    """Beams, powers and receivers of every link plus derived per-beam data.

    Attributes
    ----------
    T, R : list of arrays
        Per-link transmit / receive beams, one column per stream.
    p : list of arrays
        Forward powers.
    q : list of arrays or None
        Reverse powers once solved.
    omegas : list of arrays
        Forward interference-plus-noise covariances used for ``R``.
    gain : (N,) array
        ``|r^H H_ll t|^2`` per stream.
    noise, noise_hat : (N,) arrays
        ``r^H W r`` and ``t^H What t`` per stream.
    """

    T: list
    p: list
    R: list
    omegas: list
    gain: np.ndarray
    noise: np.ndarray
    noise_hat: np.ndarray
    q: list | None = None
    offsets: np.ndarray = field(init=False)

    def __post_init__(self):
        self.offsets = np.concatenate([[0], np.cumsum([len(p) for p in self.p])]).astype(int)

    @property
    def counts(self) -> list[int]:
        return [len(p) for p in self.p]

    @property
    def n_streams(self) -> int:
        return int(self.offsets[-1])

    def flat_p(self) -> np.ndarray:
        return np.concatenate(self.p) if self.p else np.zeros(0)

    def split(self, v: np.ndarray) -> list[np.ndarray]:
        return [v[self.offsets[l]:self.offsets[l + 1]] for l in range(len(self.p))]

    def block(self, l: int) -> slice:
        return slice(self.offsets[l], self.offsets[l + 1])


def decompose_network(net: Network, covs, mode: str = "eigen", omegas=None) -> StreamDecomposition:
    """Beams, powers and MMSE-SIC receivers for every link of ``net``."""
    L = net.L
    if omegas is None:
        omegas = [_omega(net, covs, l) for l in range(L)]
    T, p, R, g, n, nh = [], [], [], [], [], []
    for l in range(L):
        h = net.H[l][l]
        t, pw = decompose(covs[l], mode, h, omegas[l])
        r = mmse_sic_receivers(h, t, pw, omegas[l])
        T.append(t)
        p.append(pw)
        R.append(r)
        g.append(np.abs(np.einsum("im,ij,jm->m", r.conj(), h, t)) ** 2)
        W, Wh = net.noise(l), net.constraint(l)
        n.append(np.real(np.einsum("im,ij,jm->m", r.conj(), W, r)))
        nh.append(np.real(np.einsum("im,ij,jm->m", t.conj(), Wh, t)))
    cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)
    return StreamDecomposition(T, p, R, list(omegas), cat(g), cat(n), cat(nh))


def crosstalk(net: Network, dec: StreamDecomposition) -> np.ndarray:
    """Cross-talk matrix with rows indexed by victim and columns by interferer.

    Entry ``[(l,m), (k,n)]`` is ``phi[l,k] |r_lm^H H[l][k] t_kn|^2`` across
    links and ``|r_lm^H H_ll t_ln|^2`` for ``n > m`` inside link ``l``.
    """
    N = dec.n_streams
    psi = np.zeros((N, N))
    for l in range(net.L):
        if dec.counts[l] == 0:
            continue
        rl = dec.R[l].conj().T
        bl = dec.block(l)
        for k in range(net.L):
            if dec.counts[k] == 0:
                continue
            if k == l:
                blk = np.abs(rl @ net.H[l][l] @ dec.T[l]) ** 2
                psi[bl, bl] = np.triu(blk, 1)
            elif net.phi[l, k]:
                psi[bl, dec.block(k)] = np.abs(rl @ net.H[l][k] @ dec.T[k]) ** 2
    return psi


def forward_sinr(dec: StreamDecomposition, psi: np.ndarray, p=None) -> np.ndarray:
    """SINR of every forward stream, ``p g / (r^H W r + (psi p))``."""
    p = dec.flat_p() if p is None else np.asarray(p, dtype=float)
    return p * dec.gain / (dec.noise + psi @ p)


def reverse_sinr(dec: StreamDecomposition, psi: np.ndarray, q=None) -> np.ndarray:
    """SINR of every reverse stream, ``q g / (t^H What t + (psi^T q))``.

    In the reverse direction the beams of a link are decoded in the
    opposite order, which is what the transpose encodes.
    """
    q = np.concatenate(dec.q) if q is None else np.asarray(q, dtype=float)
    return q * dec.gain / (dec.noise_hat + psi.T @ q)


def stream_rates(sinr: np.ndarray, bits: bool = True) -> np.ndarray:
    r = np.log1p(sinr)
    return r / LN2 if bits else r


def _clamp(q: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(q), initial=0.0)))
    if np.any(q < -1e-9 * scale):
        raise DualityError(f"reverse powers infeasible (min {q.min():.3e})")
    return np.maximum(q, 0.0)


def duality_powers(dec: StreamDecomposition, psi: np.ndarray, gammas=None) -> np.ndarray:
    """Reverse powers that give every reverse stream its target SINR.

    Solves ``(D^{-1} - psi^T) q = n_hat`` where ``D^{-1} = diag(g / gamma)``
    and ``n_hat`` holds ``t^H What t`` (all ones for a sum-power
    constraint).  Without ``gammas`` the targets are the forward SINRs and
    ``g / gamma`` is formed as ``(noise + psi p) / p`` so streams that see
    no useful signal do not divide by zero.

    Raises
    ------
    DualityError
        If the system is singular, the residual exceeds ``1e-8`` or a
        component is below ``-1e-9``.
    """
    N = dec.n_streams
    if N == 0:
        return np.zeros(0)
    if gammas is None:
        p = dec.flat_p()
        dinv = (dec.noise + psi @ p) / p
    else:
        gammas = np.asarray(gammas, dtype=float)
        with np.errstate(divide="ignore"):
            dinv = dec.gain / gammas
    if not np.all(np.isfinite(dinv)):
        raise DualityError("target SINR of zero makes the reverse system singular")
    A = np.diag(dinv) - psi.T
    b = dec.noise_hat
    try:
        lu = sla.lu_factor(A, check_finite=False)
        q = sla.lu_solve(lu, b, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DualityError(str(exc)) from exc
    if not np.all(np.isfinite(q)):
        raise DualityError("reverse-power system is singular")
    res = np.max(np.abs(A @ q - b))
    if res > 1e-8 * max(1.0, float(np.max(np.abs(b)))):
        raise DualityError(f"reverse-power residual {res:.3e} too large")
    return _clamp(q)


def duality_powers_sequential(dec: StreamDecomposition, net: Network, order: Sequence[int]) -> np.ndarray:
    """Reverse powers link by link along an acyclic interference order.

    ``order`` must relabel ``net.phi`` so that no link is interfered by
    one with a lower position.  The reverse interference of each link then
    involves only links already solved, and inside a link stream ``m``
    sees reverse streams ``n < m``.
    """
    order = list(order)
    if sorted(order) != list(range(net.L)) or not is_itree_order(net.phi, order):
        raise ValueError("order is not an acyclic (iTree) indexing of the coupling matrix")
    psi = None
    p_all = dec.flat_p()
    q_all = np.zeros(dec.n_streams)
    sig_hat: list[np.ndarray | None] = [None] * net.L
    for l in order:
        sl = dec.block(l)
        M = dec.counts[l]
        sig_hat[l] = np.zeros((net.nr[l], net.nr[l]), dtype=complex)
        if M == 0:
            continue
        if psi is None:
            psi = crosstalk(net, dec)
        om_hat = net.constraint(l).copy()
        for k in np.flatnonzero(net.phi[:, l]):
            if sig_hat[k] is None:
                raise ValueError("order is not acyclic for this coupling matrix")
            h = net.H[k][l]
            om_hat += h.conj().T @ sig_hat[k] @ h
        T, R, H = dec.T[l], dec.R[l], net.H[l][l]
        cross = np.abs(T.conj().T @ H.conj().T @ R) ** 2
        base = np.real(np.einsum("im,ij,jm->m", T.conj(), om_hat, T))
        p = p_all[sl]
        dinv = (dec.noise[sl] + psi[sl] @ p_all) / p
        q = np.zeros(M)
        for m in range(M):
            q[m] = (base[m] + q[:m] @ cross[m, :m]) / dinv[m]
        q_all[sl] = q
        sig_hat[l] = herm((R * q) @ R.conj().T)
    return _clamp(q_all)
