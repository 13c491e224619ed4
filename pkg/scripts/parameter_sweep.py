"""Mean depth and convergence rate against tau / delta on a log grid.

Emits a CSV table (policy, param, mean_depth, rate, iterations) averaged over
the contracting toy SCF instances; no plotting.

    python scripts/parameter_sweep.py [--out sweep.csv]
"""

import argparse
import csv
import sys

import numpy as np

from apa.certify import toy_scf_suite
from apa.driver import Adaptive, Fixed, Restarted, accelerate
from apa.trace import convergence_rate, mean_depth

GRID = [10.0 ** -e for e in range(2, 9)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=None, help="CSV path (default: stdout)")
    ap.add_argument("--difficulty", type=float, default=1.0)
    args = ap.parse_args()

    cases = []
    for pr in toy_scf_suite((args.difficulty,)):
        x0 = pr.initial_guess()
        _, base = accelerate(pr, x0, 1e-8, Fixed(0), "P", max_iter=200)
        if base.converged and convergence_rate(base) < 1.0:
            cases.append((pr, x0))

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["policy", "param", "mean_depth", "rate", "iterations"])
    for name, make in (("restarted", Restarted), ("adaptive", Adaptive)):
        for val in GRID:
            stats = []
            for pr, x0 in cases:
                _, tr = accelerate(pr, x0, 1e-8, make(val), "P", max_iter=200)
                stats.append((mean_depth(tr), convergence_rate(tr), tr.iterations))
            m, r, it = np.mean(stats, axis=0)
            w.writerow([name, f"{val:.0e}", f"{m:.3f}", f"{r:.4f}", f"{it:.1f}"])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
