"""Print the two-state risk-sensitive counterexample at a few discount factors."""
import sys

from bellman_refactor.cli import counterexample_report


def main(betas=(0.9, 0.95, 1.1, 1.5)):
    for beta in betas:
        rep = counterexample_report(beta)
        print(f"beta={beta:<5} |Tv*-v*|={rep['norm_Tv_minus_v']:.3e} "
              f"|Sg*-g*|={rep['norm_Sg_minus_g']:.3e}  {rep['verdict']}")
    return 0


if __name__ == "__main__":
    sys.exit(main([float(b) for b in sys.argv[1:]] or (0.9, 0.95, 1.1, 1.5)))
