#!/usr/bin/env python3
"""Plot the CSV files written by `mrdl` into an output directory.

    python3 tools/plot_curves.py out            # writes out/*.png
"""
import argparse
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def plot_pretrain(rows, out):
    fig, ax = plt.subplots()
    for layer in sorted({r["layer"] for r in rows}, key=int):
        pts = [r for r in rows if r["layer"] == layer]
        epochs = [int(r["epoch"]) for r in pts]
        ax.plot(epochs, [float(r["train_mse"]) for r in pts], label=f"layer {layer} train")
        ax.plot(epochs, [float(r["test_mse"]) for r in pts], "--", label=f"layer {layer} test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("reconstruction MSE")
    ax.legend()
    fig.savefig(out)


def plot_finetune(rows, out):
    fig, ax = plt.subplots()
    epochs = [int(r["epoch"]) for r in rows]
    for col in rows[0]:
        if col != "epoch":
            ax.plot(epochs, [float(r[col]) for r in rows], label=col)
    ax.set_xlabel("epoch")
    ax.legend()
    fig.savefig(out)


def plot_bench(rows, out):
    fig, ax = plt.subplots()
    workers = [int(r["workers"]) for r in rows]
    ax.plot(workers, [float(r["wall_time"]) for r in rows], "o-")
    ax.set_xlabel("workers")
    ax.set_ylabel("wall time (s)")
    fig.savefig(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out_dir")
    args = ap.parse_args()
    for name, fn in (("pretrain", plot_pretrain), ("finetune", plot_finetune), ("bench", plot_bench)):
        path = os.path.join(args.out_dir, name + ".csv")
        if os.path.exists(path):
            rows = read(path)
            if rows:
                fn(rows, os.path.join(args.out_dir, name + ".png"))
                print("wrote", os.path.join(args.out_dir, name + ".png"))


if __name__ == "__main__":
    main()
