"""Polite versus selfish water-filling on strong-interference channels.

Three-link interference channels with 4x4 antennas and cross gains above
the direct gain.  For each seed reports whether each method settled and
the weighted sum-rate it reached.
"""

import argparse
from pathlib import Path

from bmac.algorithms import RunOptions
from bmac.harness import Scenario, run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--realizations", type=int, default=20)
    ap.add_argument("--cross-gain-db", type=float, default=10.0)
    ap.add_argument("--power-db", type=float, default=10.0)
    ap.add_argument("--max-iter", type=int, default=3000)
    ap.add_argument("--out-dir", type=Path, default=Path("results/ifc"))
    args = ap.parse_args()

    opts = RunOptions(max_iter=args.max_iter, rel_tol=1e-8, final_kkt=False)
    settled = {"pp": 0, "selfish": 0}
    print(f"{'seed':>4} {'pp':>10} {'selfish':>10} {'selfish best':>13}")
    for seed in range(args.realizations):
        sc = Scenario(topology="ifc", n_links=3, nt=4, nr=4, cross_gain_db=args.cross_gain_db,
                      power_db=args.power_db, seed=seed)
        pp, _ = run(sc, "pp", opts, args.out_dir, f"pp_seed{seed}")
        sf, _ = run(sc, "selfish", opts, args.out_dir, f"selfish_seed{seed}")
        settled["pp"] += pp.converged
        settled["selfish"] += sf.converged
        mark = lambda r: f"{r.final_wsr:9.3f}{'' if r.converged else '*'}"
        print(f"{seed:4d} {mark(pp):>10} {mark(sf):>10} {sf.best_wsr:13.3f}")
    n = args.realizations
    print(f"converged: pp {settled['pp']}/{n}, selfish {settled['selfish']}/{n}  (* = did not settle)")


if __name__ == "__main__":
    main()
