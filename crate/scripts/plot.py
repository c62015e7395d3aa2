#!/usr/bin/env python3
"""Plot a run directory (series.csv) or a sweep directory (sweep.csv).

    python scripts/plot.py out/free_1d
    python scripts/plot.py out/sweep_dir --png sweep.png
"""

import argparse
import csv
import math
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_csv(path):
    with open(path, newline="") as f:
        rows = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(rows))


def num(s):
    try:
        return float(s)
    except (TypeError, ValueError):
        return math.nan


def plot_series(path, ax_m, ax_b):
    rows = read_csv(path)
    t = [num(r["t"]) for r in rows]
    for col in rows[0]:
        if col.startswith("r="):
            ax_m.loglog(t[1:], [num(r[col]) for r in rows[1:]], label=f"‖ψ(t)‖ {col}")
        elif col.startswith("ball_"):
            ax_b.semilogx(t[1:], [num(r[col]) for r in rows[1:]], label=col)
    ax_m.set_xlabel("t")
    ax_m.legend(fontsize="small")
    ax_b.set_xlabel("t")
    ax_b.set_ylim(0, 1.05)
    ax_b.legend(fontsize="small")


def plot_sweep(path, ax_s, ax_m):
    rows = read_csv(path)
    x = [num(r["value"]) for r in rows]
    ax_s.plot(x, [num(r["slope"]) for r in rows], "o-", label="slope")
    ax_m.plot(x, [num(r["min_rayleigh"]) for r in rows], "o-", label="min Rayleigh")
    ax_m.plot(x, [num(r["certified_bound"]) for r in rows], "s--", label="certified")
    for ax in (ax_s, ax_m):
        ax.set_xlabel("value")
        ax.legend(fontsize="small")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("dir", type=Path)
    p.add_argument("--png", type=Path, help="output image (default: <dir>/plot.png)")
    args = p.parse_args()

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    if (args.dir / "series.csv").exists():
        plot_series(args.dir / "series.csv", *axes)
    elif (args.dir / "sweep.csv").exists():
        plot_sweep(args.dir / "sweep.csv", *axes)
    else:
        sys.exit(f"no series.csv or sweep.csv in {args.dir}")
    fig.suptitle(args.dir.name)
    fig.tight_layout()
    out = args.png or args.dir / "plot.png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
