#!/usr/bin/env python3
"""Plot tau(sigma) with its exponential envelope from a profile.csv."""
import csv
import sys

import matplotlib.pyplot as plt


def main(path, out=None):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    s = [float(r["sigma"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(s, [float(r["tau"]) for r in rows], "o-", label="tau")
    if rows and "lower" in rows[0] and rows[0]["lower"]:
        ax.fill_between(s, [float(r["lower"]) for r in rows], [float(r["upper"]) for r in rows], alpha=0.2, label="envelope")
    ax.set_xlabel("sigma")
    ax.set_ylabel("period")
    ax.legend()
    fig.tight_layout()
    if out:
        fig.savefig(out, dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit("usage: plot_profile.py profile.csv [out.png]")
    main(sys.argv[1], sys.argv[2] if len(sys.argv) > 2 else None)
