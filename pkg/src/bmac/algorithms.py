"""Weighted sum-rate maximization by polite water-filling.

* ``algorithm_pt``: forward polite water-filling, then the covariance
  transform to refresh the reverse links.
* ``algorithm_pp``: polite water-filling in both directions.
* ``algorithm_p`` / ``algorithm_p1``: monotone scheme for acyclic
  interference graphs built on a replicated network.
* ``selfish_waterfill``: the baseline that ignores interference caused.

Networks with a linear constraint or colored noise are whitened first and
results are mapped back.  Trajectories report weighted sum-rates in bits
against effective iterations: a forward or reverse half-update counts 0.5.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .duality import covariance_transform
from .netmodel import Network, itree_index, permute_network, whiten
from .politewf import KKTReport, kkt_residual, solve_level_multi, whiten_channel
from .rng import random_psd, stream
from .streams import (
    CovarianceSet,
    DualityError,
    interference_covariances,
    link_rates,
    weighted_sum_rate,
)

__all__ = [
    "RunOptions",
    "TraceRow",
    "RunReport",
    "ReplicatedState",
    "algorithm_pt",
    "algorithm_pp",
    "algorithm_p",
    "algorithm_p1",
    "selfish_waterfill",
    "parallel_wsr_subproblem",
    "ALGORITHMS",
]

log = logging.getLogger(__name__)


@dataclass
class RunOptions:
    """Iteration control shared by all algorithms.

    ``rel_tol`` and ``patience``: the run has converged once the weighted
    sum-rate changed by at most ``rel_tol`` (relative) for ``patience``
    consecutive reported steps.  When ``step_tol`` is set the test is
    instead on the forward covariances: ``sum_l ||S_l - S_l_prev||_F`` at
    most ``step_tol`` times the power budget for ``patience`` consecutive
    forward updates.  That pins down the fixed point itself, which the
    flat objective near an optimum does not.
    """

    max_iter: int = 200
    rel_tol: float = 1e-8
    patience: int = 3
    step_tol: float | None = None
    init: Sequence[np.ndarray] | None = None
    init_dual: Sequence[np.ndarray] | None = None
    max_restarts: int = 3
    seed: int = 0
    trace_kkt: bool = False
    final_kkt: bool = True


class TraceRow(NamedTuple):
    eff_iter: float
    wsr_bits: float
    sum_power: float
    kkt_residual: float = math.nan


@dataclass
class RunReport:
    algorithm: str
    trajectory: list[TraceRow]
    converged: bool
    iterations: int
    final_covs: CovarianceSet
    final_duals: CovarianceSet | None = None
    mu: float = math.nan
    final_kkt: KKTReport | None = None
    restarts: int = 0
    error: str | None = None

    @property
    def final_wsr(self) -> float:
        return self.trajectory[-1].wsr_bits if self.trajectory else math.nan

    @property
    def best_wsr(self) -> float:
        return max((r.wsr_bits for r in self.trajectory), default=math.nan)

    def wsr_at(self, eff_iter: float) -> float:
        """Weighted sum-rate of the last row at or before ``eff_iter``."""
        vals = [r.wsr_bits for r in self.trajectory if r.eff_iter <= eff_iter + 1e-12]
        return vals[-1] if vals else math.nan

    def accuracy_curve(self, reference: float | None = None) -> list[tuple[float, float]]:
        """``(eff_iter, reference - wsr)`` rows; reference defaults to the best value seen."""
        ref = self.best_wsr if reference is None else reference
        return [(r.eff_iter, ref - r.wsr_bits) for r in self.trajectory]


class _Convergence:
    def __init__(self, opts: "RunOptions", power: float):
        self.rel_tol, self.patience = opts.rel_tol, opts.patience
        self.step_tol = None if opts.step_tol is None else opts.step_tol * power
        self.prev = None
        self.prev_covs = None
        self.streak = 0

    def _bump(self, ok: bool) -> bool:
        self.streak = self.streak + 1 if ok else 0
        return self.streak >= self.patience

    def update(self, value: float) -> bool:
        """Feed a reported objective value; True once converged by ``rel_tol``."""
        ok = self.prev is not None and abs(value - self.prev) <= self.rel_tol * max(abs(value), 1e-300)
        self.prev = value
        if self.step_tol is not None:
            return False
        return self._bump(ok)

    def update_covs(self, covs) -> bool:
        """Feed forward covariances; True once converged by ``step_tol``."""
        if self.step_tol is None:
            return False
        ok = self.prev_covs is not None and sum(
            float(np.linalg.norm(a - b)) for a, b in zip(covs, self.prev_covs)
        ) <= self.step_tol
        self.prev_covs = [np.array(c) for c in covs]
        return self._bump(ok)


def _power(covs) -> float:
    return float(sum(np.real(np.trace(s)) for s in covs))


def _zeros(dims) -> list[np.ndarray]:
    return [np.zeros((n, n), dtype=complex) for n in dims]


class _Prepared(NamedTuple):
    net: Network
    to_original: Callable
    dual_to_original: Callable
    to_white: Callable


def _prepare(net: Network) -> _Prepared:
    if net.white:
        ident = lambda c: [np.asarray(s) for s in c]
        return _Prepared(net, ident, ident, ident)
    white, wmap = whiten(net)
    return _Prepared(white, wmap.to_original, wmap.reverse_to_original, wmap.to_whitened)


def _finish(prep: _Prepared, rep: RunReport, opts: RunOptions) -> RunReport:
    if opts.final_kkt:
        rep.final_kkt = kkt_residual(prep.net, rep.final_covs)
        if rep.trajectory:
            rep.trajectory[-1] = rep.trajectory[-1]._replace(kkt_residual=rep.final_kkt.aggregate)
    rep.final_covs = CovarianceSet(tuple(prep.to_original(rep.final_covs)), "forward")
    if rep.final_duals is not None:
        rep.final_duals = CovarianceSet(tuple(prep.dual_to_original(rep.final_duals)), "reverse")
    return rep


def _row(net, eff, wsr, covs, opts) -> TraceRow:
    kkt = kkt_residual(net, covs).aggregate if opts.trace_kkt else math.nan
    return TraceRow(eff, wsr, _power(covs), kkt)


def _forward_pwf(net: Network, omegas, omegas_hat, rhos=None):
    wcs = [whiten_channel(net.H[l][l], omegas[l], omegas_hat[l]) for l in range(net.L)]
    mu, res = solve_level_multi(wcs, net.weights, rhos, net.power)
    return mu, [r.Sigma for r in res]


def _reverse_pwf(net: Network, omegas, omegas_hat):
    wcs = [whiten_channel(net.H[l][l].conj().T, omegas_hat[l], omegas[l]) for l in range(net.L)]
    mu, res = solve_level_multi(wcs, net.weights, None, net.power)
    return mu, [r.Sigma for r in res]


def _pt_once(net: Network, sigma, sigma_hat, opts: RunOptions) -> RunReport:
    rows: list[TraceRow] = []
    conv = _Convergence(opts, net.power)
    mu = math.nan
    converged = False
    duals = sigma_hat
    it = 0
    for it in range(1, opts.max_iter + 1):
        om = interference_covariances(net, sigma, "forward")
        omh = interference_covariances(net, CovarianceSet(tuple(sigma_hat), "reverse"))
        mu, sigma = _forward_pwf(net, om, omh)
        wsr = weighted_sum_rate(net, sigma)
        rows.append(_row(net, it - 0.5, wsr, sigma, opts))
        rep = covariance_transform(net, sigma)
        sigma_hat = list(rep.reverse_covs)
        duals = sigma_hat
        if conv.update(wsr) or conv.update_covs(sigma):
            converged = True
            break
        rows.append(TraceRow(float(it), rep.weighted_reverse_rate(net.weights), rep.power_out))
        if conv.update(rows[-1].wsr_bits):
            converged = True
            break
    return RunReport(
        "pt",
        rows,
        converged,
        it,
        CovarianceSet(tuple(sigma), "forward"),
        CovarianceSet(tuple(duals), "reverse"),
        mu,
    )


def _restart_point(net: Network, opts: RunOptions, attempt: int):
    rng = stream(opts.seed, 2, attempt)
    return random_psd(rng, net.nt, net.power / 2), random_psd(rng, net.nr, net.power / 2)


def algorithm_pt(net: Network, opts: RunOptions | None = None) -> RunReport:
    """Alternate forward polite water-filling with the covariance transform.

    Starts from all-zero covariances unless ``opts.init`` / ``opts.init_dual``
    are given.  If a run fails (infeasible reverse powers or no
    convergence) it is retried from up to ``opts.max_restarts`` seeded
    random points with half the power budget; the best run is returned.
    """
    opts = opts or RunOptions()
    prep = _prepare(net)
    wnet = prep.net
    sigma = prep.to_white(opts.init) if opts.init is not None else _zeros(wnet.nt)
    sigma_hat = list(opts.init_dual) if opts.init_dual is not None else _zeros(wnet.nr)
    best: RunReport | None = None
    for attempt in range(opts.max_restarts + 1):
        if attempt:
            sigma, sigma_hat = _restart_point(wnet, opts, attempt)
            log.info("pt restart %d", attempt)
        try:
            rep = _pt_once(wnet, sigma, sigma_hat, opts)
        except (DualityError, np.linalg.LinAlgError) as exc:
            log.info("pt attempt %d failed: %s", attempt, exc)
            if best is None:
                best = RunReport("pt", [], False, 0, CovarianceSet(tuple(_zeros(wnet.nt))), error=str(exc))
            continue
        rep.restarts = attempt
        if best is None or not best.trajectory or (rep.converged, rep.final_wsr) > (best.converged, best.final_wsr):
            best = rep
        if rep.converged:
            break
    return _finish(prep, best, opts)


def algorithm_pp(net: Network, opts: RunOptions | None = None) -> RunReport:
    """Alternate polite water-filling in the forward and reverse links.

    The reverse update keeps the reverse interference covariances of the
    start of the iteration and uses the freshly updated forward ones as the
    politeness penalty.
    """
    opts = opts or RunOptions()
    prep = _prepare(net)
    net = prep.net
    sigma_hat = list(opts.init_dual) if opts.init_dual is not None else _zeros(net.nr)
    if opts.init is not None:
        om = interference_covariances(net, prep.to_white(opts.init), "forward")
    else:
        om = [net.noise(l) for l in range(net.L)]
    rows: list[TraceRow] = []
    conv = _Convergence(opts, net.power)
    converged = False
    mu = math.nan
    sigma = _zeros(net.nt)
    it = 0
    for it in range(1, opts.max_iter + 1):
        omh = interference_covariances(net, CovarianceSet(tuple(sigma_hat), "reverse"))
        mu, sigma = _forward_pwf(net, om, omh)
        wsr = weighted_sum_rate(net, sigma)
        rows.append(_row(net, it - 0.5, wsr, sigma, opts))
        om = interference_covariances(net, sigma, "forward")
        if conv.update(wsr) or conv.update_covs(sigma):
            converged = True
            break
        _, sigma_hat = _reverse_pwf(net, om, omh)
        rev = float(net.weights @ link_rates(net, CovarianceSet(tuple(sigma_hat), "reverse")))
        rows.append(TraceRow(float(it), rev, _power(sigma_hat)))
        if conv.update(rev):
            converged = True
            break
    rep = RunReport(
        "pp",
        rows,
        converged,
        it,
        CovarianceSet(tuple(sigma), "forward"),
        CovarianceSet(tuple(sigma_hat), "reverse"),
        mu,
    )
    return _finish(prep, rep, opts)


def selfish_waterfill(net: Network, opts: RunOptions | None = None) -> RunReport:
    """Joint water-filling that treats received interference as noise and ignores harm caused.

    Each iteration is a forward update only and counts as half an
    effective iteration.  Failure to converge is reported, not raised.
    """
    opts = opts or RunOptions()
    prep = _prepare(net)
    net = prep.net
    sigma = prep.to_white(opts.init) if opts.init is not None else _zeros(net.nt)
    eyes = [np.eye(n, dtype=complex) for n in net.nt]
    ones = [None] * net.L
    rows: list[TraceRow] = []
    conv = _Convergence(opts, net.power)
    converged = False
    mu = math.nan
    it = 0
    for it in range(1, opts.max_iter + 1):
        om = interference_covariances(net, sigma, "forward")
        wcs = [whiten_channel(net.H[l][l], om[l], eyes[l]) for l in range(net.L)]
        ones = [np.ones(wc.rank) for wc in wcs]
        mu, res = solve_level_multi(wcs, net.weights, ones, net.power)
        sigma = [r.Sigma for r in res]
        wsr = weighted_sum_rate(net, sigma)
        rows.append(_row(net, 0.5 * it, wsr, sigma, opts))
        if conv.update(wsr) or conv.update_covs(sigma):
            converged = True
            break
    rep = RunReport("selfish", rows, converged, it, CovarianceSet(tuple(sigma), "forward"), None, mu)
    return _finish(prep, rep, opts)


def parallel_wsr_subproblem(channels, weights, noise_whiteners, costs, budget: float):
    """Weighted sum-rate over parallel reverse channels under one linear budget.

    Maximizes ``sum_i w_i log|I + H_i^H S_i H_i Ohat_i^{-1}|`` subject to
    ``sum_i Tr(S_i C_i) <= budget``.

    Parameters
    ----------
    channels : sequence of arrays
        Forward channels ``H_i`` (the variables live on their receive side).
    weights : (n,) array
    noise_whiteners : sequence of arrays
        Reverse interference-plus-noise covariances ``Ohat_i``.
    costs : sequence of arrays
        Constraint matrices ``C_i``.
    budget : float

    Returns
    -------
    mu : float
    covs : list of arrays
        ``C_i^{-1/2} F_i D_i F_i^H C_i^{-1/2}``.
    """
    if len(channels) == 0:
        raise ValueError("no channels given")
    wcs = [whiten_channel(np.asarray(h).conj().T, oh, c) for h, oh, c in zip(channels, noise_whiteners, costs)]
    mu, res = solve_level_multi(wcs, weights, [np.ones(wc.rank) for wc in wcs], budget)
    return mu, [r.Sigma for r in res]


@dataclass
class ReplicatedState:
    """Covariances of ``L`` copies of a network.

    ``sigma_grid[i][l]`` is link ``l`` in copy ``i``.  The configuration
    ``view(k)`` takes link ``l`` from copy ``(l - k) mod L``, so
    ``view(0)`` collects each link from the copy where it is last.
    """

    sigma_grid: list

    @property
    def L(self) -> int:
        return len(self.sigma_grid)

    def view(self, k: int) -> list[np.ndarray]:
        L = self.L
        return [self.sigma_grid[(l - k) % L][l] for l in range(L)]

    def views(self) -> list[list[np.ndarray]]:
        return [self.view(k) for k in range(self.L)]

    @classmethod
    def from_views(cls, views) -> "ReplicatedState":
        L = len(views)
        grid = [[None] * L for _ in range(L)]
        for k, v in enumerate(views):
            for l in range(L):
                grid[(l - k) % L][l] = v[l]
        return cls(grid)

    @classmethod
    def synchronized(cls, covs) -> "ReplicatedState":
        L = len(covs)
        return cls([[covs[l] for l in range(L)] for _ in range(L)])

    def average(self) -> list[np.ndarray]:
        L = self.L
        return [sum(self.sigma_grid[i][l] for i in range(L)) / L for l in range(L)]

    def f_mod(self, net: Network) -> float:
        return float(np.mean([weighted_sum_rate(net, v) for v in self.views()]))


def _subnetwork(net: Network, sigma, i: int) -> Network:
    """Links ``0..i`` with interference from links after ``i`` folded into the noise."""
    noise = []
    for l in range(i + 1):
        W = net.noise(l).copy()
        for j in range(i + 1, net.L):
            if net.phi[l, j]:
                h = net.H[l][j]
                W = W + h @ sigma[j] @ h.conj().T
        noise.append(0.5 * (W + W.conj().T))
    return Network(
        H=tuple(tuple(net.H[a][b] for b in range(i + 1)) for a in range(i + 1)),
        phi=net.phi[: i + 1, : i + 1],
        weights=net.weights[: i + 1],
        power=net.power,
        noise_covs=tuple(noise),
    )


def _replicated_update(net: Network, sigma) -> ReplicatedState:
    """One pass of the reverse transform, parallel subproblem and back-transforms.

    ``net`` must be white, sum-power and labeled so no link is interfered by
    a lower-indexed one.
    """
    L = net.L
    rep = covariance_transform(net, sigma)
    sh = list(rep.reverse_covs)
    om, omh = rep.omegas, rep.omegas_hat
    subnets = [_subnetwork(net, sigma, i) for i in range(L)]
    budget = 0.0
    for i, sub in enumerate(subnets):
        budget += sum(float(np.real(np.trace(sigma[j]))) for j in range(i + 1))
        for l in range(i):
            budget -= float(np.real(np.sum(sh[l] * sub.noise(l).T)))
    if budget <= 0:
        raise DualityError(f"subproblem budget {budget:.3e} is not positive")
    _, new_diag = parallel_wsr_subproblem(
        [net.H[i][i] for i in range(L)], net.weights, omh, om, budget
    )
    grid = [[None] * L for _ in range(L)]
    for i, sub in enumerate(subnets):
        duals = sh[:i] + [new_diag[i]]
        back = covariance_transform(sub.reverse, CovarianceSet(tuple(duals), "forward"))
        for l in range(L):
            grid[i][l] = back.reverse_covs[l] if l <= i else sigma[l]
    return ReplicatedState(grid)


def _p1_combine(net: Network, state: ReplicatedState) -> list[np.ndarray]:
    views = state.views()
    L = state.L
    avg = state.average()
    if L == 1:
        return avg
    powers = [_power(v) for v in views]
    rest = sum(powers[1:])
    if powers[0] <= 0 or rest <= 0:
        return avg
    P = net.power
    tail = [sum(views[k][l] for k in range(1, L)) for l in range(L)]

    def combo(beta):
        a, b = beta * P / powers[0], (1 - beta) * P / rest
        return [a * views[0][l] + b * tail[l] for l in range(L)]

    lo = powers[0] / (L * P)
    res = minimize_scalar(
        lambda b: -weighted_sum_rate(net, combo(b)), bounds=(lo, 1.0), method="bounded", options={"xatol": 1e-6}
    )
    cands = [(weighted_sum_rate(net, avg), 0, avg)]
    for n, beta in enumerate((res.x, 1.0), start=1):
        c = combo(beta)
        cands.append((weighted_sum_rate(net, c), n, c))
    return max(cands, key=lambda t: (t[0], -t[1]))[2]


def _algorithm_p(net: Network, opts: RunOptions | None, variant: str) -> RunReport:
    opts = opts or RunOptions()
    perm = itree_index(net)
    if perm is None:
        raise ValueError("interference graph has a directed cycle; this algorithm needs an iTree network")
    prep = _prepare(net)
    pnet = permute_network(prep.net, perm)
    L = pnet.L
    if opts.init is not None:
        init = prep.to_white(opts.init)
        sigma = [init[j] for j in perm]
    else:
        sigma = [np.eye(n, dtype=complex) * (pnet.power / (L * n)) for n in pnet.nt]
    rows = [TraceRow(0.0, weighted_sum_rate(pnet, sigma), _power(sigma))]
    conv = _Convergence(opts, net.power)
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        state = _replicated_update(pnet, sigma)
        sigma = state.average() if variant == "p" else _p1_combine(pnet, state)
        wsr = weighted_sum_rate(pnet, sigma)
        rows.append(_row(pnet, float(it), wsr, sigma, opts))
        if conv.update(wsr) or conv.update_covs(sigma):
            converged = True
            break
    inv = np.argsort(perm)
    final = [sigma[n] for n in inv]
    duals = list(covariance_transform(prep.net, final).reverse_covs)
    rep = RunReport(variant, rows, converged, it, CovarianceSet(tuple(final)), CovarianceSet(tuple(duals), "reverse"))
    return _finish(prep, rep, opts)


def algorithm_p(net: Network, opts: RunOptions | None = None) -> RunReport:
    """Monotone algorithm for networks with an acyclic interference graph.

    Each iteration transforms to the reverse links, solves the parallel
    reverse subproblem of every network copy jointly, transforms each copy
    back and averages the copies.  Starts from uniform isotropic inputs at
    full power.  Raises ``ValueError`` on networks with interference loops.
    """
    return _algorithm_p(net, opts, "p")


def algorithm_p1(net: Network, opts: RunOptions | None = None) -> RunReport:
    """Like ``algorithm_p`` but the averaging weight of the first view is line-searched.

    The mixing weight ``beta`` of ``view(0)`` against the other views is
    chosen by a bounded scalar search; the plain average is kept if it is
    at least as good.
    """
    return _algorithm_p(net, opts, "p1")


ALGORITHMS = {
    "pt": algorithm_pt,
    "pp": algorithm_pp,
    "p": algorithm_p,
    "p1": algorithm_p1,
    "selfish": selfish_waterfill,
}
