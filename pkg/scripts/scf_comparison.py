"""Compare depth policies on the seeded toy SCF instances (version P).

Prints iterations, mean depth and regression rate for Fixed(0), Fixed(8),
Restarted(1e-4), Adaptive(1e-4) and the two superlinear variants.

    python scripts/scf_comparison.py [--difficulty 1.0] [--seed 0]
"""

import argparse
import math

from apa.certify import toy_scf_suite
from apa.driver import Adaptive, DivergenceError, Fixed, Restarted, SuperAdaptive, SuperRestarted, accelerate
from apa.trace import convergence_rate, mean_depth


def policies(p):
    return {
        "Fixed(0)": Fixed(0),
        "Fixed(8)": Fixed(8),
        "Restarted(1e-4)": Restarted(1e-4),
        "Adaptive(1e-4)": Adaptive(1e-4),
        "SuperRestarted": SuperRestarted(1.0, 1.0 / (2 * p + 1)),
        "SuperAdaptive": SuperAdaptive(1.0, math.sqrt(2.0) - 1.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--difficulty", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-8)
    args = ap.parse_args()

    print(f"{'instance':<16} {'policy':<16} {'iters':>5} {'m_bar':>6} {'rate':>7}")
    for pr in toy_scf_suite((args.difficulty,), args.seed):
        x0 = pr.initial_guess()
        for label, pol in policies(pr.p).items():
            try:
                _, tr = accelerate(pr, x0, args.tol, pol, "P", max_iter=200)
            except DivergenceError:
                print(f"{pr.name:<16} {label:<16} diverged")
                continue
            iters = str(tr.iterations) if tr.converged else f">{tr.iterations}"
            print(f"{pr.name:<16} {label:<16} {iters:>5} {mean_depth(tr):6.2f} {convergence_rate(tr):7.4f}")


if __name__ == "__main__":
    main()
