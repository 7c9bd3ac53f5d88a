"""Command-line entry point ``bmac``.

Subcommands: ``gen``, ``run``, ``sweep``, ``check`` and ``region``.  Exit
status is 0 on success, 2 when some run did not converge (its outputs are
still written) and 1 on bad input or a failed check.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import ALGORITHMS, RunOptions
from .duality import covariance_transform
from .harness import TOPOLOGIES, Scenario, _json_safe, generate, rate_region_sweep, run
from .netio import atomic_write, load_covs, load_network, save_network
from .netmodel import itree_index
from .politewf import kkt_residual
from .streams import DualityError, stream_rates

EXIT_OK, EXIT_INPUT, EXIT_NOCONV = 0, 1, 2


def _int_list(text: str):
    parts = [int(x) for x in text.split(",")]
    return parts[0] if len(parts) == 1 else parts


def _float_list(text: str):
    return [float(x) for x in text.split(",")]


def _add_scenario(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    g.add_argument("--topology", choices=TOPOLOGIES, default="mac")
    g.add_argument("--links", type=int, default=2, help="users of a MAC/BC, links of an IFC")
    g.add_argument("--nt", type=_int_list, default=2, help="transmit antennas, one value or a comma list")
    g.add_argument("--nr", type=_int_list, default=2, help="receive antennas, one value or a comma list")
    g.add_argument("--gain-db", type=float, default=0.0)
    g.add_argument("--cross-gain-db", type=float, default=0.0)
    g.add_argument("--weights", default="equal", help="'equal', 'uniform' or a comma list")
    g.add_argument("--power-db", type=float, default=10.0)
    g.add_argument("--variant", choices=("A", "B"), default="A", help="order of the itree-fig3 fixture")
    g.add_argument("--phi", help="JSON file with an explicit coupling matrix")
    g.add_argument("--seed", type=int, default=0)


def _add_run_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--algo", choices=sorted(ALGORITHMS), default="pt")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8, help="relative weighted sum-rate change")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _scenario(args, seed: int | None = None) -> Scenario:
    weights = args.weights
    if weights not in ("equal", "uniform"):
        weights = _float_list(weights)
    order = "auto"
    if args.phi:
        order = json.loads(Path(args.phi).read_text())
    return Scenario(
        topology=args.topology,
        n_links=args.links,
        nt=args.nt,
        nr=args.nr,
        gain_db=args.gain_db,
        cross_gain_db=args.cross_gain_db,
        weights=weights,
        power_db=args.power_db,
        seed=args.seed if seed is None else seed,
        order=order,
        variant=args.variant,
    )


def _opts(args) -> RunOptions:
    return RunOptions(max_iter=args.max_iter, rel_tol=args.tol, seed=args.seed)


def mean_curve(trajectories) -> list[tuple[float, float]]:
    """Average WSR at matched effective iterations.

    Shorter (converged) runs are held at their last value.
    """
    grid = sorted({r[0] for t in trajectories for r in t})
    out = []
    for e in grid:
        vals = []
        for t in trajectories:
            hit = [r[1] for r in t if r[0] <= e]
            vals.append(hit[-1] if hit else t[0][1])
        out.append((e, float(np.mean(vals))))
    return out


def _curve_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["eff_iter", "wsr_bits"])
    for e, v in rows:
        wr.writerow([f"{e:.17g}", f"{v:.17g}"])
    return buf.getvalue()


def _run_many(args, algos, seeds) -> int:
    out = Path(args.out_dir)
    status = EXIT_OK
    records = []
    for algo in algos:
        trajs = []
        for seed in seeds:
            sc = _scenario(args, seed)
            stem = f"{algo}_seed{seed}" if len(seeds) > 1 else algo
            rep, summary = run(sc, algo, _opts(args), out, stem, args.format)
            trajs.append([(r.eff_iter, r.wsr_bits) for r in rep.trajectory])
            records.append(summary)
            if not rep.converged:
                status = EXIT_NOCONV
            print(f"{algo} seed={seed} converged={rep.converged} iterations={rep.iterations} "
                  f"wsr={rep.final_wsr:.10g} bits")
        if len(seeds) > 1:
            atomic_write(out / f"{algo}_mean.csv", _curve_csv(mean_curve(trajs)))
    if len(records) > 1:
        atomic_write(out / "sweep.summary.json", json.dumps(_json_safe(records), indent=1, sort_keys=True) + "\n")
    return status


def cmd_gen(args) -> int:
    net = generate(_scenario(args))
    path = Path(args.output or Path(args.out_dir) / "network.json")
    save_network(net, path)
    print(f"wrote {path}  (L={net.L}, itree={itree_index(net) is not None})")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.network:
        net = load_network(args.network)
        rep, _ = run(net, args.algo, _opts(args), args.out_dir, args.algo, args.format)
        print(f"{args.algo} converged={rep.converged} iterations={rep.iterations} wsr={rep.final_wsr:.10g} bits")
        return EXIT_OK if rep.converged else EXIT_NOCONV
    seeds = list(range(args.seed, args.seed + args.realizations))
    return _run_many(args, [args.algo], seeds)


def cmd_sweep(args) -> int:
    algos = args.algos.split(",") if args.algos else [args.algo]
    unknown = [a for a in algos if a not in ALGORITHMS]
    if unknown:
        raise ValueError(f"unknown algorithm(s) {unknown}")
    seeds = list(range(args.seed, args.seed + args.realizations))
    return _run_many(args, algos, seeds)


def check_network(net, covs=None, tol: float = 1e-8) -> dict:
    """Invariant suite on a network and an optional covariance set."""
    if covs is None:
        covs = [np.eye(n, dtype=complex) * (net.power / sum(net.nt)) for n in net.nt]
    rep = covariance_transform(net, covs)
    fwd = rep.forward_rates
    checks = {
        "itree_order": itree_index(net),
        "power_preserved": abs(rep.power_out - rep.power_in) <= tol * max(rep.power_in, 1.0),
        "reverse_rates_not_lower": bool(np.all(rep.reverse_rates >= fwd - 1e-9)),
        "trace_equality": bool(
            np.allclose(rep.per_link_equiv_power[:, 0], rep.per_link_equiv_power[:, 1], rtol=tol, atol=tol)
        ),
        "stream_rates_match": bool(
            np.allclose([r.sum() for r in rep.streams.split(stream_rates(rep.sinr))], fwd, rtol=0, atol=1e-9)
        ),
        "kkt_residual": kkt_residual(net, covs).aggregate,
    }
    checks["ok"] = all(v for k, v in checks.items() if isinstance(v, bool))
    return checks


def cmd_check(args) -> int:
    net = load_network(args.network)
    covs = load_covs(args.covs) if args.covs else None
    if covs is not None and (len(covs) != net.L or any(s.shape != (n, n) for s, n in zip(covs, net.nt))):
        raise ValueError("covariance file does not match the network dimensions")
    res = check_network(net, covs)
    print(json.dumps(_json_safe(res), indent=1))
    return EXIT_OK if res["ok"] else EXIT_INPUT


def cmd_region(args) -> int:
    sc = _scenario(args)
    grid = np.linspace(0.01, 0.99, args.points) if args.points else None
    pts = rate_region_sweep(sc, args.algo, grid, _opts(args), starts=args.starts)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["mu", "r1_bits", "r2_bits"])
    for row in pts:
        wr.writerow([f"{v:.17g}" for v in row])
    path = Path(args.out_dir) / f"region_{args.algo}.csv"
    atomic_write(path, buf.getvalue())
    print(f"wrote {path} ({len(pts)} points)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bmac", description="Weighted sum-rate optimization for MIMO interference networks")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a seeded network file")
    _add_scenario(g)
    g.add_argument("--out-dir", default="out")
    g.add_argument("-o", "--output", help="network file path (default <out-dir>/network.json)")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run one algorithm on a scenario or network file")
    _add_scenario(r)
    _add_run_opts(r)
    r.add_argument("--network", help="network JSON file instead of a generated scenario")
    r.add_argument("--realizations", type=int, default=1, help="consecutive seeds; also writes the mean curve")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run algorithms over consecutive seeds")
    _add_scenario(s)
    _add_run_opts(s)
    s.add_argument("--algos", help="comma list, overrides --algo")
    s.add_argument("--realizations", type=int, default=10)
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="duality and optimality invariants of a network file")
    c.add_argument("network")
    c.add_argument("--covs", help="covariance JSON file (default: isotropic full power)")
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("region", help="two-link rate-region sweep")
    _add_scenario(g)
    _add_run_opts(g)
    g.add_argument("--points", type=int, default=0, help="evenly spaced weights in [0.01, 0.99] (default: step 0.01)")
    g.add_argument("--starts", type=int, default=1, help="random restarts per weight, best kept")
    g.set_defaults(func=cmd_region, algo="pp")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; here 2 means non-convergence
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ValueError, DualityError, OSError, json.JSONDecodeError) as exc:
        print(f"bmac: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
