"""Check full-history DIIS against GMRES on the bundled linear suite.

    python scripts/gmres_equivalence.py [--conditioning 10]
"""

import argparse

import numpy as np

from apa.oracles import certify_gmres_equivalence
from apa.problems import make_linear_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--conditioning", type=float, default=10.0)
    args = ap.parse_args()
    for n, seeds in ((10, range(4)), (30, range(3)), (50, range(3))):
        for seed in seeds:
            for pr in make_linear_suite(seed, n, args.conditioning):
                rep = certify_gmres_equivalence(pr, np.zeros(n))
                print(f"{pr.name:<13} n={n:<3} seed={seed}  {rep.status:<12} steps={rep.steps_checked:<3} "
                      f"comb={rep.combination_deviation:.1e} image={rep.image_deviation:.1e}")


if __name__ == "__main__":
    main()
