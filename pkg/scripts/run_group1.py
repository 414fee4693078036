"""Bankruptcy speedup table: VFI vs RVFI across grid sizes and discount factors.

    python3 scripts/run_group1.py --grids 10,12 --out results/group1.csv
"""
import argparse
import sys

from bellman_refactor import bench


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grids", default="10,12", help="comma-separated grid sizes per dimension")
    p.add_argument("--betas", default=",".join(str(b) for b in bench.BETAS_GROUP1))
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--out", default="-")
    args = p.parse_args()
    grids = [int(g) for g in args.grids.split(",")]
    betas = [float(b) for b in args.betas.split(",")]
    scenarios = bench.group1(grids, betas, tol=args.tol, repetitions=args.repetitions)
    rows = bench.ratio_table(bench.run_group(scenarios))
    text = bench.to_csv(bench.wide_table(rows, "beta"))
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    if not all(r["valid"] for r in rows):
        print("some rows invalid: policy mismatch or non-convergence", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
