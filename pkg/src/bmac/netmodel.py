"""B-MAC network container and structural queries.

Links are indexed from 0.  ``H[l][k]`` is the channel from the transmitter
of link ``k`` to the receiver of link ``l`` and ``phi[l, k] = 1`` means the
signal of link ``k`` still interferes with link ``l`` after whatever
dirty-paper coding or successive cancellation the network uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Sequence

import numpy as np

from .linalg import herm, is_hermitian, is_psd, min_eig, psd_inv_sqrt

__all__ = [
    "Network",
    "InterferenceGraph",
    "GroupOrder",
    "WhiteningMap",
    "ZConcavity",
    "validate_network",
    "reverse_network",
    "interference_graph",
    "itree_index",
    "is_itree_order",
    "assign_orders",
    "apply_orders",
    "whiten",
    "z_concavity_check",
    "permute_network",
]


def _as_grid(H) -> tuple[tuple[np.ndarray, ...], ...]:
    return tuple(tuple(np.asarray(h, dtype=complex) for h in row) for row in H)


def _as_mats(mats, n):
    if mats is None:
        return None
    mats = tuple(None if m is None else np.asarray(m, dtype=complex) for m in mats)
    if len(mats) != n:
        raise ValueError(f"expected {n} per-link matrices, got {len(mats)}")
    return mats


@dataclass(frozen=True, eq=False)
class Network:
    """A one-hop MIMO interference network with arbitrary cancellation.

    Parameters
    ----------
    H : L x L nested sequence of complex arrays
        ``H[l][k]`` has shape ``(nr[l], nt[k])``.
    phi : (L, L) array of {0, 1}
        Coupling matrix; ``phi[l, k] = 1`` if link ``k`` interferes with
        link ``l``.
    weights : (L,) array
        Nonnegative rate weights.
    power : float
        Budget on ``sum_l Tr(S_l What_l)`` (plain sum power when
        ``link_constraints`` is omitted).
    link_constraints : sequence of (nt, nt) arrays, optional
        Per-link matrices of the linear transmit constraint.
    noise_covs : sequence of (nr, nr) arrays, optional
        Per-link receive noise covariances.  Identity when omitted.
    tx_group, rx_group : sequence of int, optional
        Physical transmitter / receiver id of every link.  By default each
        link has its own nodes.
    """

    H: tuple
    phi: np.ndarray
    weights: np.ndarray
    power: float
    link_constraints: tuple | None = None
    noise_covs: tuple | None = None
    tx_group: tuple | None = None
    rx_group: tuple | None = None
    _reverse: "Network | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        H = _as_grid(self.H)
        L = len(H)
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "phi", np.asarray(self.phi, dtype=int).reshape(L, L))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).reshape(L))
        object.__setattr__(self, "power", float(self.power))
        object.__setattr__(self, "link_constraints", _as_mats(self.link_constraints, L))
        object.__setattr__(self, "noise_covs", _as_mats(self.noise_covs, L))
        tx = tuple(range(L)) if self.tx_group is None else tuple(int(g) for g in self.tx_group)
        rx = tuple(range(L)) if self.rx_group is None else tuple(int(g) for g in self.rx_group)
        object.__setattr__(self, "tx_group", tx)
        object.__setattr__(self, "rx_group", rx)

    @property
    def L(self) -> int:
        return len(self.H)

    @cached_property
    def nt(self) -> tuple[int, ...]:
        return tuple(self.H[l][l].shape[1] for l in range(self.L))

    @cached_property
    def nr(self) -> tuple[int, ...]:
        return tuple(self.H[l][l].shape[0] for l in range(self.L))

    def noise(self, l: int) -> np.ndarray:
        """Noise covariance ``W_l`` (identity when unspecified)."""
        if self.noise_covs is None or self.noise_covs[l] is None:
            return np.eye(self.nr[l], dtype=complex)
        return self.noise_covs[l]

    def constraint(self, l: int) -> np.ndarray:
        """Linear-constraint matrix ``What_l`` (identity when unspecified)."""
        if self.link_constraints is None or self.link_constraints[l] is None:
            return np.eye(self.nt[l], dtype=complex)
        return self.link_constraints[l]

    @property
    def white(self) -> bool:
        """True when noise is white and the constraint is plain sum power."""
        return self.noise_covs is None and self.link_constraints is None

    @property
    def reverse(self) -> "Network":
        """The reverse network, built once and cached."""
        if self._reverse is None:
            rev = reverse_network(self, check=False)
            object.__setattr__(rev, "_reverse", self)
            object.__setattr__(self, "_reverse", rev)
        return self._reverse

    def with_weights(self, weights) -> "Network":
        return replace(self, weights=np.asarray(weights, dtype=float), _reverse=None)

    def with_phi(self, phi) -> "Network":
        return replace(self, phi=np.asarray(phi, dtype=int), _reverse=None)


@dataclass(frozen=True)
class InterferenceGraph:
    """Directed graph with an edge ``i -> j`` whenever link ``i`` interferes with ``j``."""

    nodes: tuple[int, ...]
    edges: frozenset

    def successors(self, i: int) -> list[int]:
        return sorted(j for (a, j) in self.edges if a == i)


def interference_graph(net_or_phi) -> InterferenceGraph:
    phi = _phi_of(net_or_phi)
    L = phi.shape[0]
    edges = frozenset((int(k), int(l)) for l, k in zip(*np.nonzero(phi)))
    return InterferenceGraph(tuple(range(L)), edges)


def _phi_of(net_or_phi) -> np.ndarray:
    if isinstance(net_or_phi, Network):
        return net_or_phi.phi
    return np.asarray(net_or_phi, dtype=int)


def validate_network(net: Network) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    out: list[str] = []
    L = net.L
    if L == 0:
        return ["network has no links"]
    if any(len(row) != L for row in net.H):
        return [f"H must be a {L}x{L} grid"]
    phi = net.phi
    if phi.shape != (L, L):
        out.append(f"phi has shape {phi.shape}, expected {(L, L)}")
        return out
    for l in range(L):
        if phi[l, l] != 0:
            out.append(f"phi[{l},{l}] is {phi[l, l]}; diagonal must be 0")
    bad = np.argwhere((phi != 0) & (phi != 1))
    for l, k in bad:
        out.append(f"phi[{l},{k}] = {phi[l, k]} is not binary")

    for l in range(L):
        for k in range(L):
            h = net.H[l][k]
            if h.ndim != 2:
                out.append(f"H[{l}][{k}] is not a matrix")
                continue
            if h.shape != (net.nr[l], net.nt[k]):
                out.append(
                    f"H[{l}][{k}] has shape {h.shape}, expected {(net.nr[l], net.nt[k])}"
                )
            if not np.all(np.isfinite(h)):
                out.append(f"H[{l}][{k}] has non-finite entries")

    w = net.weights
    if w.shape != (L,) or np.any(~np.isfinite(w)) or np.any(w < 0):
        out.append("weights must be L finite nonnegative values")
    if not (np.isfinite(net.power) and net.power > 0):
        out.append(f"power budget {net.power} must be positive and finite")

    if len(net.tx_group) != L or len(net.rx_group) != L:
        out.append("tx_group and rx_group must have one entry per link")
        return out
    for groups, dims, what in (
        (net.tx_group, net.nt, "transmit"),
        (net.rx_group, net.nr, "receive"),
    ):
        for g in sorted(set(groups)):
            members = [l for l in range(L) if groups[l] == g]
            sizes = {dims[l] for l in members}
            if len(sizes) > 1:
                out.append(f"links {members} share {what} node {g} but have {what} dims {sorted(sizes)}")

    for mats, dims, groups, name in (
        (net.noise_covs, net.nr, net.rx_group, "noise_covs"),
        (net.link_constraints, net.nt, net.tx_group, "link_constraints"),
    ):
        if mats is None:
            continue
        for l, m in enumerate(mats):
            if m is None:
                continue
            if m.shape != (dims[l], dims[l]):
                out.append(f"{name}[{l}] has shape {m.shape}, expected {(dims[l], dims[l])}")
                continue
            if not np.all(np.isfinite(m)):
                out.append(f"{name}[{l}] has non-finite entries")
            elif not is_hermitian(m):
                out.append(f"{name}[{l}] is not Hermitian")
            elif min_eig(m) <= 0:
                out.append(f"{name}[{l}] is not positive definite")
        for g in sorted(set(groups)):
            members = [l for l in range(L) if groups[l] == g and mats[l] is not None]
            ref = mats[members[0]] if members else None
            for l in members[1:]:
                if mats[l].shape != ref.shape or not np.allclose(mats[l], ref):
                    out.append(f"{name}[{l}] differs from {name}[{members[0]}] on shared node {g}")
    return out


def _check(net: Network) -> None:
    errs = validate_network(net)
    if errs:
        raise ValueError("invalid network: " + "; ".join(errs))


def reverse_network(net: Network, check: bool = True) -> Network:
    """Swap the roles of transmitters and receivers.

    Channels become ``H'[l][k] = H[k][l]^H``, the coupling matrix is
    transposed and the noise / linear-constraint matrices trade places.
    """
    if check:
        _check(net)
    L = net.L
    H = tuple(tuple(net.H[k][l].conj().T for k in range(L)) for l in range(L))
    return Network(
        H=H,
        phi=net.phi.T.copy(),
        weights=net.weights.copy(),
        power=net.power,
        link_constraints=net.noise_covs,
        noise_covs=net.link_constraints,
        tx_group=net.rx_group,
        rx_group=net.tx_group,
    )


def permute_network(net: Network, perm: Sequence[int]) -> Network:
    """Relabel links so that new link ``n`` is old link ``perm[n]``."""
    perm = list(perm)
    pick = (lambda mats: None if mats is None else tuple(mats[i] for i in perm))
    return Network(
        H=tuple(tuple(net.H[a][b] for b in perm) for a in perm),
        phi=net.phi[np.ix_(perm, perm)],
        weights=net.weights[perm],
        power=net.power,
        link_constraints=pick(net.link_constraints),
        noise_covs=pick(net.noise_covs),
        tx_group=tuple(net.tx_group[i] for i in perm),
        rx_group=tuple(net.rx_group[i] for i in perm),
    )


def itree_index(net_or_phi) -> list[int] | None:
    """Order links so that no link is interfered by a lower-indexed one.

    Nodes that cause no interference to any remaining node are peeled off
    one at a time, lowest original index first.  Returns ``perm`` with
    ``perm[n]`` the original index of the ``n``-th link, or ``None`` when
    the interference graph has a directed cycle.
    """
    phi = _phi_of(net_or_phi) != 0
    L = phi.shape[0]
    remaining = list(range(L))
    perm: list[int] = []
    while remaining:
        for i in remaining:
            if not any(phi[j, i] for j in remaining if j != i):
                break
        else:
            return None
        perm.append(i)
        remaining.remove(i)
    return perm


def is_itree_order(phi, order: Sequence[int]) -> bool:
    """True if ``phi`` relabeled by ``order`` has ``phi[l, k] = 0`` for ``k <= l``."""
    p = np.asarray(phi)[np.ix_(order, order)]
    return not np.any(np.tril(p))


@dataclass(frozen=True)
class GroupOrder:
    """Cancellation order proposed for one pseudo-BC or pseudo-MAC group."""

    kind: str
    links: tuple[int, ...]
    qualifies: bool
    order: tuple[int, ...] | None
    phi_block: np.ndarray | None
    reason: str = ""


def _is_pseudo(phi: np.ndarray, kind: str, links: Sequence[int]) -> tuple[bool, str]:
    L = phi.shape[0]
    others = [j for j in range(L) if j not in links]
    if kind == "bc":
        block = phi[np.ix_(others, list(links))]
        if block.size and np.any(block != block[:, :1]):
            return False, "columns of the group differ outside the group"
    else:
        block = phi[np.ix_(list(links), others)]
        if block.size and np.any(block != block[:1, :]):
            return False, "rows of the group differ outside the group"
    return True, ""


def assign_orders(net: Network, groups) -> list[GroupOrder]:
    """Weight-based encoding/decoding order for isolated BC or MAC groups.

    Parameters
    ----------
    net : Network
    groups : iterable of (kind, links)
        ``kind`` is ``"bc"`` (links share a transmitter, dirty-paper coded)
        or ``"mac"`` (links share a receiver, successively decoded).

    Returns
    -------
    list of GroupOrder
        For a BC group links are encoded in descending weight; for a MAC
        group they are decoded in ascending weight.  Ties go to the lower
        link index.  ``phi_block[a, b] = 1`` iff ``order``-position of
        ``links[b]`` comes after that of ``links[a]``.  Groups that fail the
        pseudo test are returned with ``qualifies=False`` and no order.
    """
    out = []
    for kind, links in groups:
        kind = kind.lower()
        if kind not in ("bc", "mac"):
            raise ValueError(f"unknown group kind {kind!r}")
        links = tuple(int(l) for l in links)
        if any(l < 0 or l >= net.L for l in links):
            raise IndexError(f"group {links} has indices outside 0..{net.L - 1}")
        ok, why = _is_pseudo(net.phi, kind, links)
        if not ok:
            out.append(GroupOrder(kind, links, False, None, None, why))
            continue
        w = net.weights
        if kind == "bc":
            order = tuple(sorted(links, key=lambda l: (-w[l], l)))
        else:
            order = tuple(sorted(links, key=lambda l: (w[l], l)))
        pos = {l: n for n, l in enumerate(order)}
        block = np.array([[int(pos[b] > pos[a]) for b in links] for a in links], dtype=int)
        out.append(GroupOrder(kind, links, True, order, block))
    return out


def apply_orders(phi, orders: Sequence[GroupOrder]) -> np.ndarray:
    """Write the intra-group blocks of qualifying orders into a copy of ``phi``."""
    phi = np.array(phi, dtype=int, copy=True)
    for g in orders:
        if g.qualifies:
            phi[np.ix_(g.links, g.links)] = g.phi_block
    return phi


@dataclass(frozen=True)
class WhiteningMap:
    """Change of variables between a network and its whitened form.

    ``tx_isqrt[l]`` is ``What_l^{-1/2}`` and ``rx_isqrt[l]`` is ``W_l^{-1/2}``.
    """

    tx_isqrt: tuple
    rx_isqrt: tuple

    def to_original(self, covs):
        """Map whitened-network covariances back: ``S = What^{-1/2} S' What^{-1/2}``."""
        return [herm(a @ s @ a) for a, s in zip(self.tx_isqrt, covs)]

    def to_whitened(self, covs):
        out = []
        for a, s in zip(self.tx_isqrt, covs):
            ainv = np.linalg.inv(a)
            out.append(herm(ainv @ s @ ainv))
        return out

    def reverse_to_original(self, covs):
        """Same map for reverse-link covariances, which live on the receive side."""
        return [herm(b @ s @ b) for b, s in zip(self.rx_isqrt, covs)]


def whiten(net: Network) -> tuple[Network, WhiteningMap]:
    """Canonical sum-power, white-noise form of a network.

    Returns the network with channels ``W_l^{-1/2} H[l][k] What_k^{-1/2}``
    together with the map that pulls its covariances back.
    """
    L = net.L
    tx, rx = [], []
    for l in range(L):
        for mat, name in ((net.constraint(l), "link constraint"), (net.noise(l), "noise covariance")):
            if not is_hermitian(mat) or min_eig(mat) <= 0:
                raise ValueError(f"{name} of link {l} is not Hermitian positive definite")
        tx.append(psd_inv_sqrt(net.constraint(l)))
        rx.append(psd_inv_sqrt(net.noise(l)))
    H = tuple(tuple(rx[l] @ net.H[l][k] @ tx[k] for k in range(L)) for l in range(L))
    white = Network(
        H=H,
        phi=net.phi,
        weights=net.weights,
        power=net.power,
        tx_group=net.tx_group,
        rx_group=net.rx_group,
    )
    return white, WhiteningMap(tuple(tx), tuple(rx))


@dataclass(frozen=True)
class ZConcavity:
    concave: bool
    min_eig: float
    weights_ordered: bool

    def __bool__(self):
        return self.concave


def z_concavity_check(H12, H22, w1: float, w2: float, rtol: float = 1e-9) -> ZConcavity:
    """Sufficient test for concavity of the two-user Z-channel objective.

    The objective is concave when ``H22^H H22 - H12^H H12`` is PSD and
    ``w1 <= w2``.  The returned witness carries the minimum eigenvalue of
    that difference and the weight comparison.
    """
    H12 = np.asarray(H12, dtype=complex)
    H22 = np.asarray(H22, dtype=complex)
    for name, h in (("H12", H12), ("H22", H22)):
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError(f"{name} must be square, got shape {h.shape}")
    if H12.shape != H22.shape:
        raise ValueError("H12 and H22 must have equal shape")
    diff = herm(H22.conj().T @ H22 - H12.conj().T @ H12)
    lam = min_eig(diff)
    psd = is_psd(diff, rtol)
    ordered = bool(w1 <= w2)
    return ZConcavity(bool(psd and ordered), lam, ordered)
