"""Shrinking of rotation-invariant metrics on the sphere.

Runs a few Legendre-mode perturbations of twice the Fubini-Study metric and
writes the round deviation against ``t / T`` for each, plus the observed
singular times.

    python scripts/p1_shrinking.py [--out out/p1_rounding.csv]
"""

import argparse
import csv
import os

import numpy as np

from krflow import p1flow

CASES = [(0.0, 2), (0.05, 1), (0.1, 2), (0.05, 3), (0.03, 4)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--resolution", type=int, default=32)
    ap.add_argument("--out", default="out/p1_rounding.csv")
    args = ap.parse_args()

    fracs = np.linspace(0, 0.95, 20)
    table = []
    for amp, mode in CASES:
        r = p1flow.run_1d(p1flow.P1FlowConfig(resolution=args.resolution, amplitude=amp, mode=mode))
        t = r.series.column("t")
        rd = r.series.column("round_deviation")
        T = r.singular_time
        print(f"amplitude={amp} mode={mode} T_obs={T:.6f} predicted={r.problem.T0} "
              f"round deviation {rd[0]:.3g} -> {rd[np.argmin(abs(t - 0.9 * T))]:.3g}")
        for f in fracs:
            k = int(np.argmin(abs(t - f * T)))
            table.append((amp, mode, round(float(f), 4), float(rd[k])))

    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["amplitude", "mode", "t_over_T", "round_deviation"])
        w.writerows(table)


if __name__ == "__main__":
    main()
