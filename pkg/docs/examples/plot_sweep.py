#!/usr/bin/env python3
"""Render figures from a threshold-sweep CSV produced by `a3sim sweep`.

Writes two PNGs next to the delimited output:
  sweep_tradeoff.png   kept links and compute vs. threshold, with latency
  sweep_latency.png    baseline vs. split-architecture cycles per threshold

Usage:
    python3 plot_sweep.py out/sweep.csv --out figures/
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

plt.rcParams["figure.figsize"] = (6.4, 4.0)
plt.rcParams["font.size"] = 9
plt.rcParams["axes.grid"] = True
plt.rcParams["grid.alpha"] = 0.3


def read_sweep(path: str) -> dict[str, list[float]]:
    cols: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for key, value in row.items():
                cols.setdefault(key, []).append(float(value))
    return cols


def plot_tradeoff(cols: dict[str, list[float]], out: Path) -> Path:
    fig, ax_links = plt.subplots()
    th = cols["th"]
    ax_links.step(th, cols["kept_links"], where="post", color="tab:blue",
                  label="kept links")
    ax_links.set_xlabel("threshold")
    ax_links.set_ylabel("kept links", color="tab:blue")
    ax_links.tick_params(axis="y", labelcolor="tab:blue")

    ax_lat = ax_links.twinx()
    ax_lat.plot(th, cols["latency_ms"], color="tab:red", marker="o",
                label="split latency (ms)")
    ax_lat.set_ylabel("latency (ms)", color="tab:red")
    ax_lat.tick_params(axis="y", labelcolor="tab:red")
    ax_lat.grid(False)

    fig.suptitle("Link pruning vs. latency")
    fig.tight_layout()
    target = out / "sweep_tradeoff.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def plot_latency(cols: dict[str, list[float]], out: Path) -> Path:
    fig, ax = plt.subplots()
    th = cols["th"]
    width = min(0.35 * (th[1] - th[0]), 0.04) if len(th) > 1 else 0.04
    ax.bar([t - width / 2 for t in th], cols["baseline_cycles"], width,
           label="baseline_sequential")
    ax.bar([t + width / 2 for t in th], cols["fuse_multitasking_cycles"], width,
           label="fuse_multitasking")
    ax.set_xlabel("threshold")
    ax.set_ylabel("total cycles")
    ax.legend()
    fig.suptitle("Architecture comparison across the sweep")
    fig.tight_layout()
    target = out / "sweep_latency.png"
    fig.savefig(target, dpi=150)
    plt.close(fig)
    return target


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("sweep_csv", help="sweep.csv written by `a3sim sweep`")
    parser.add_argument("--out", default=".", help="directory for the PNGs")
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = read_sweep(args.sweep_csv)
    for target in (plot_tradeoff(cols, out), plot_latency(cols, out)):
        print(target)


if __name__ == "__main__":
    main()
