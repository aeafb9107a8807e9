"""Existence time and terminal behavior for a grid of classes on each catalogue model.

    python scripts/cone_table.py [--out out/cone_table.csv]
"""

import argparse
import itertools
import os

from krflow import cones


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/cone_table.csv")
    args = ap.parse_args()

    lines = [cones.CSV_HEADER]
    for name in sorted(cones.CATALOG) + ["RiemannSurface(2)"]:
        model = cones.get_model(name)
        for cls in itertools.product(range(1, 4), repeat=model.dim):
            rep = cones.terminal_behavior(model, cls)
            lines.append(rep.csv_row())
            print(f"{name:<18} {str(cls):<8} T={str(rep.T):<5} ({rep.behavior}) {rep.description}")
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        fh.write("".join(lines))


if __name__ == "__main__":
    main()
