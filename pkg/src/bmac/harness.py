"""Scenario generation, experiment runners and machine-readable output.

Channels are ``sqrt(g_lk)`` times unit-variance complex Gaussian
matrices.  The Gaussian part is drawn once per physical
(receiver, transmitter) pair from the stream ``(0, rx, tx)`` of
:mod:`bmac.rng`, so links that share nodes share the physical channel and
any pair can be regenerated on its own.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .algorithms import ALGORITHMS, RunOptions, RunReport
from .netio import atomic_write
from .netmodel import Network, apply_orders, assign_orders, itree_index, validate_network
from .rng import complex_gaussian, random_psd, stream
from .streams import link_rates

__all__ = [
    "PHI_A",
    "PHI_B",
    "PHI_C",
    "PHI_D",
    "FIG3_PHI",
    "TOPOLOGIES",
    "Scenario",
    "generate",
    "run",
    "accuracy_curve",
    "rate_region_sweep",
    "trajectory_csv",
    "summary_record",
]

# Valid 3-link coupling matrices; every one has an interference loop.
PHI_A = np.array([[0, 1, 1], [0, 0, 1], [1, 0, 0]])
PHI_B = np.array([[0, 1, 1], [0, 0, 0], [1, 1, 0]])
PHI_C = np.array([[0, 0, 1], [1, 0, 1], [1, 0, 0]])
PHI_D = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]])

# Four links over three transmitters {0}, {1, 2}, {3} and three receivers
# {0, 1}, {2}, {3}.  Order "A" is acyclic; order "B" has the loop 0 <-> 1.
FIG3_TX = (0, 1, 1, 2)
FIG3_RX = (0, 0, 1, 2)
FIG3_PHI = {
    "A": np.array([[0, 1, 1, 1], [0, 0, 1, 1], [0, 0, 0, 1], [0, 0, 0, 0]]),
    "B": np.array([[0, 1, 1, 1], [1, 0, 0, 1], [0, 1, 0, 1], [0, 0, 0, 0]]),
}

TOPOLOGIES = ("mac", "bc", "ifc", "x", "z", "itree-fig3", "custom")


@dataclass
class Scenario:
    """Recipe for a seeded random network.

    Parameters
    ----------
    topology : str
        One of ``TOPOLOGIES``.
    n_links : int
        Users of a MAC/BC or links of an IFC.  Fixed for ``x`` (4),
        ``z`` (2) and ``itree-fig3`` (4).
    nt, nr : int or list of int
        Antennas at each link's transmitter / receiver.
    gain_db, cross_gain_db : float
        Gains of direct (``l == k``) and cross (``l != k``) channels.
    gain_grid_db : L x L nested list, optional
        Per-link-pair gains; overrides the two scalars.
    weights : "equal", "uniform" or list of float
        ``uniform`` draws from U(0.8, 1.2).
    power_db : float
        Power budget in dB.
    seed : int
    order : "auto" or L x L nested list
        ``auto`` uses weight-sorted cancellation for MAC/BC groups and the
        fixed couplings of the other topologies.  An explicit matrix is
        used as is (required for ``custom``).
    variant : str
        ``"A"`` or ``"B"`` for ``itree-fig3``.
    """

    topology: str = "mac"
    n_links: int = 2
    nt: int | list = 2
    nr: int | list = 2
    gain_db: float = 0.0
    cross_gain_db: float = 0.0
    gain_grid_db: list | None = None
    weights: str | list = "equal"
    power_db: float = 10.0
    seed: int = 0
    order: str | list = "auto"
    variant: str = "A"

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}; choose from {TOPOLOGIES}")

    @property
    def L(self) -> int:
        return {"x": 4, "z": 2, "itree-fig3": 4}.get(self.topology, int(self.n_links))

    @property
    def power(self) -> float:
        return 10.0 ** (self.power_db / 10.0)

    def to_dict(self) -> dict:
        return asdict(self)


def _per_link(v, L, name):
    if isinstance(v, (int, np.integer)):
        return [int(v)] * L
    v = [int(x) for x in v]
    if len(v) != L:
        raise ValueError(f"{name} must have {L} entries, got {len(v)}")
    return v


def _groups(sc: Scenario):
    L = sc.L
    if sc.topology == "mac":
        return tuple(range(L)), (0,) * L
    if sc.topology == "bc":
        return (0,) * L, tuple(range(L))
    if sc.topology == "x":
        return (0, 0, 1, 1), (0, 1, 0, 1)
    if sc.topology == "itree-fig3":
        return FIG3_TX, FIG3_RX
    return tuple(range(L)), tuple(range(L))


def _gain_grid(sc: Scenario) -> np.ndarray:
    L = sc.L
    if sc.gain_grid_db is not None:
        g = np.asarray(sc.gain_grid_db, dtype=float)
        if g.shape != (L, L):
            raise ValueError(f"gain_grid_db must be {L}x{L}")
        return 10.0 ** (g / 10.0)
    if sc.topology in ("mac", "bc"):
        # every link pair shares the one physical channel of its user
        return np.full((L, L), 10.0 ** (sc.gain_db / 10.0))
    g = np.full((L, L), 10.0 ** (sc.cross_gain_db / 10.0))
    np.fill_diagonal(g, 10.0 ** (sc.gain_db / 10.0))
    return g


def _weights(sc: Scenario) -> np.ndarray:
    L = sc.L
    if isinstance(sc.weights, str):
        if sc.weights == "equal":
            return np.ones(L)
        if sc.weights == "uniform":
            return stream(sc.seed, 1).uniform(0.8, 1.2, L)
        raise ValueError(f"unknown weight rule {sc.weights!r}")
    w = np.asarray(sc.weights, dtype=float)
    if w.shape != (L,):
        raise ValueError(f"weights must have {L} entries")
    return w


def _auto_phi(sc: Scenario, w: np.ndarray, tx, rx) -> np.ndarray:
    L = sc.L
    t = sc.topology
    if t in ("ifc", "x"):
        return 1 - np.eye(L, dtype=int)
    if t == "z":
        return np.array([[0, 1], [0, 0]])
    if t == "itree-fig3":
        return FIG3_PHI[sc.variant].copy()
    if t in ("mac", "bc"):
        stub = Network(
            H=[[np.zeros((1, 1))] * L for _ in range(L)],
            phi=1 - np.eye(L, dtype=int),
            weights=w,
            power=1.0,
        )
        (g,) = assign_orders(stub, [(t, range(L))])
        return apply_orders(stub.phi, [g])
    raise ValueError("custom topology needs an explicit coupling matrix in 'order'")


def generate(sc: Scenario) -> Network:
    """Build the seeded network described by ``sc``.  Same seed, same bits."""
    L = sc.L
    tx, rx = _groups(sc)
    nt = _per_link(sc.nt, L, "nt")
    nr = _per_link(sc.nr, L, "nr")
    for groups, dims, what in ((tx, nt, "transmit"), (rx, nr, "receive")):
        for g in set(groups):
            if len({dims[l] for l in range(L) if groups[l] == g}) > 1:
                raise ValueError(f"links sharing {what} node {g} need equal antenna counts")
    gain = _gain_grid(sc)
    w = _weights(sc)
    base = {}
    H = [[None] * L for _ in range(L)]
    for l in range(L):
        for k in range(L):
            key = (rx[l], tx[k])
            if key not in base:
                base[key] = complex_gaussian(stream(sc.seed, 0, *key), (nr[l], nt[k]))
            H[l][k] = math.sqrt(gain[l, k]) * base[key]
    if sc.topology == "z":
        H[1][0] = np.zeros_like(H[1][0])
    if isinstance(sc.order, str):
        if sc.order != "auto":
            raise ValueError(f"order must be 'auto' or a coupling matrix, not {sc.order!r}")
        phi = _auto_phi(sc, w, tx, rx)
    else:
        phi = np.asarray(sc.order, dtype=int)
    net = Network(H=H, phi=phi, weights=w, power=sc.power, tx_group=tx, rx_group=rx)
    errs = validate_network(net)
    if errs:
        raise ValueError("generated network is invalid: " + "; ".join(errs))
    return net


def trajectory_csv(rep: RunReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["eff_iter", "wsr_bits", "sum_power", "kkt_residual"])
    for r in rep.trajectory:
        wr.writerow([f"{v:.17g}" for v in r])
    return buf.getvalue()


def summary_record(rep: RunReport, wall_time: float, extra: dict | None = None) -> dict:
    kkt = rep.final_kkt.aggregate if rep.final_kkt is not None else None
    d = {
        "algorithm": rep.algorithm,
        "converged": bool(rep.converged),
        "iterations": int(rep.iterations),
        "final_wsr_bits": rep.final_wsr,
        "best_wsr_bits": rep.best_wsr,
        "kkt_residual": kkt,
        "restarts": rep.restarts,
        "wall_time_s": wall_time,
        "error": rep.error,
    }
    if extra:
        d.update(extra)
    return d


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return _json_safe(x.item())
    return x


def run(
    target: Scenario | Network,
    algorithm: str = "pt",
    opts: RunOptions | None = None,
    out_dir=None,
    stem: str | None = None,
    fmt: str = "csv",
) -> tuple[RunReport, dict]:
    """Run one algorithm and optionally write its trajectory and summary.

    Parameters
    ----------
    target : Scenario or Network
    algorithm : {"pt", "pp", "p", "p1", "selfish"}
    opts : RunOptions, optional
    out_dir : path, optional
        When given, ``<stem>.csv`` (or ``.traj.json`` for ``fmt="json"``)
        and ``<stem>.summary.json`` are written atomically.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}")
    net = generate(target) if isinstance(target, Scenario) else target
    if algorithm in ("p", "p1") and itree_index(net) is None:
        raise ValueError(f"algorithm {algorithm} needs a network without interference loops")
    t0 = time.perf_counter()
    rep = ALGORITHMS[algorithm](net, opts)
    wall = time.perf_counter() - t0
    extra = {"scenario": target.to_dict()} if isinstance(target, Scenario) else {}
    summary = _json_safe(summary_record(rep, wall, extra))
    if out_dir is not None:
        out = Path(out_dir)
        stem = stem or algorithm
        if fmt == "csv":
            atomic_write(out / f"{stem}.csv", trajectory_csv(rep))
        elif fmt == "json":
            rows = [dict(zip(r._fields, r)) for r in rep.trajectory]
            atomic_write(out / f"{stem}.traj.json", json.dumps(_json_safe(rows), indent=1) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
        atomic_write(out / f"{stem}.summary.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return rep, summary


def accuracy_curve(
    target: Scenario | Network,
    algorithm: str = "pt",
    reference: float | None = None,
    opts: RunOptions | None = None,
    long_iter: int = 1000,
) -> list[tuple[float, float]]:
    """``(eff_iter, wsr_max - wsr)`` rows of one run.

    Without an explicit reference the maximum is the best value reached by
    long PT and PP runs and by the run itself.
    """
    net = generate(target) if isinstance(target, Scenario) else target
    rep = ALGORITHMS[algorithm](net, opts)
    if reference is None:
        long = RunOptions(max_iter=long_iter, rel_tol=1e-14, final_kkt=False)
        reference = max(
            rep.best_wsr,
            ALGORITHMS["pt"](net, long).best_wsr,
            ALGORITHMS["pp"](net, long).best_wsr,
        )
    return rep.accuracy_curve(reference)


def rate_region_sweep(
    target: Scenario | Network,
    algorithm: str = "pp",
    mu_grid: Sequence[float] | None = None,
    opts: RunOptions | None = None,
    starts: int = 1,
) -> list[tuple[float, float, float]]:
    """Rate pairs on the boundary for weights ``(mu, 1 - mu)``.

    With ``starts > 1`` the algorithm is also run from seeded random
    points and the best weighted sum-rate is kept.  A scenario with
    ``order="auto"`` is regenerated for every weight pair so that MAC and
    BC cancellation orders follow the weights; channels do not change.

    Returns
    -------
    list of (mu, r1_bits, r2_bits)
    """
    net = generate(target) if isinstance(target, Scenario) else target
    if net.L != 2:
        raise ValueError("rate-region sweeps need exactly two links")
    if mu_grid is None:
        mu_grid = np.round(np.arange(1, 100) / 100.0, 2)
    base = opts or RunOptions()
    seed = target.seed if isinstance(target, Scenario) else base.seed
    out = []
    for i, mu in enumerate(mu_grid):
        w = [float(mu), 1.0 - float(mu)]
        if isinstance(target, Scenario) and target.order == "auto":
            wnet = generate(replace(target, weights=w))
        else:
            wnet = net.with_weights(w)
        best = None
        for s in range(starts):
            o = RunOptions(**{**base.__dict__})
            if s:
                o.init = random_psd(stream(seed, 3, i, s), wnet.nt, wnet.power)
            rep = ALGORITHMS[algorithm](wnet, o)
            if best is None or rep.final_wsr > best.final_wsr:
                best = rep
        r = link_rates(wnet, best.final_covs)
        out.append((float(mu), float(max(r[0], 0.0)), float(max(r[1], 0.0))))
    return out
