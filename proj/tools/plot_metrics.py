#!/usr/bin/env python3
"""Plot restoregrad CSV outputs.

  plot_metrics.py metrics RUN_DIR [RUN_DIR ...] -o curves.png
  plot_metrics.py prior prior_0.csv -o prior.png
  plot_metrics.py sample sample_0.csv -o sample.png
"""
import argparse
import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def column(rows, key):
    return [float(r[key]) if r[key] != "" else float("nan") for r in rows]


def plot_metrics(dirs, out):
    fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
    for d in dirs:
        rows = read(os.path.join(d, "metrics.csv"))
        step = column(rows, "step")
        label = os.path.basename(os.path.normpath(d))
        a.plot(step, column(rows, "loss_total"), label=label)
        b.plot(step, column(rows, "eval_sisnr"), label=label)
    a.set_xlabel("step")
    a.set_ylabel("training loss")
    b.set_xlabel("step")
    b.set_ylabel("SI-SNR (dB)")
    b.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def plot_prior(path, out):
    rows = read(path)
    i = column(rows, "i")
    fig, ax = plt.subplots(figsize=(10, 3.5))
    ax.plot(i, column(rows, "y"), color="0.7", lw=0.8, label="y")
    ax.plot(i, column(rows, "x0"), color="k", lw=0.8, label="x0")
    ax.plot(i, column(rows, "sigma_prior"), lw=1.5, label="prior std")
    if rows and rows[0]["sigma_post"] != "":
        ax.plot(i, column(rows, "sigma_post"), lw=1.5, ls="--", label="posterior std")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def plot_sample(path, out):
    rows = read(path)
    i = column(rows, "i")
    fig, ax = plt.subplots(figsize=(10, 3.5))
    for key, style in (("y", dict(color="0.7", lw=0.8)), ("x0", dict(color="k", lw=1.0)), ("x_hat", dict(lw=1.0))):
        ax.plot(i, column(rows, key), label=key, **style)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(out, dpi=120)


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("kind", choices=["metrics", "prior", "sample"])
    p.add_argument("inputs", nargs="+")
    p.add_argument("-o", "--out", default="plot.png")
    a = p.parse_args()
    if a.kind == "metrics":
        plot_metrics(a.inputs, a.out)
    elif a.kind == "prior":
        plot_prior(a.inputs[0], a.out)
    else:
        plot_sample(a.inputs[0], a.out)


if __name__ == "__main__":
    main()
