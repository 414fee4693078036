"""Per-iteration cost against the y-grid size L for finite and Monte Carlo stopping.

    python3 scripts/run_scaling.py --L 50,100,200,400
"""
import argparse

from bellman_refactor import bench


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--L", default="50,100,200,400")
    p.add_argument("--K", type=int, default=100, help="z-grid size for the finite model")
    p.add_argument("--mc-K", type=int, default=30, help="z-grid size for the Monte Carlo model")
    p.add_argument("--draws", type=int, default=10_000)
    args = p.parse_args()
    Ls = [int(x) for x in args.L.split(",")]
    res = bench.run_scaling(Ls, K=args.K, mc_K=args.mc_K, n_draws=args.draws)
    print(f"{'model':<16}{'method':<10}{'L':>6}{'sec/iter':>14}")
    for r in res["finite"]:
        print(f"{'finite':<16}{r.scenario.solver:<10}{r.scenario.grids[0]:>6}{r.per_iteration:>14.3e}")
    for r in res["mc"]:
        print(f"{'monte_carlo':<16}{'rvfi':<10}{r.scenario.grids[0]:>6}{r.per_iteration:>14.3e}")
    for f in list(res["finite_fit"].values()) + [res["mc_fit"]]:
        print(f"slope {f.method}: {f.slope:.3f} (residual {f.residual:.3f})")


if __name__ == "__main__":
    main()
