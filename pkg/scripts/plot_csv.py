"""Render blochsim CSV outputs with matplotlib.

    python scripts/plot_csv.py out/fig1/stability_diagram.csv -o fig1.png

Grids (F_over_J, g_over_J, value) become colour maps; time series (t, ...)
become line plots of momentum and mode populations.
"""
import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from blochsim.io import read_csv  # noqa: E402


def plot_grid(cols, value, ax):
    F = np.unique(cols["F_over_J"])
    g = np.unique(cols["g_over_J"])
    Z = np.asarray(cols[value], dtype=float).reshape(g.size, F.size)
    Z = np.where(np.isfinite(Z), Z, np.nan)
    im = ax.pcolormesh(F, g, Z, shading="nearest")
    plt.colorbar(im, ax=ax, label=value)
    if "F_cr_over_J" in cols:
        ax.plot(np.asarray(cols["F_cr_over_J"]).reshape(g.size, F.size)[:, 0], g, "w--", lw=1)
    ax.set_xlabel("F/J")
    ax.set_ylabel("g/J")


def plot_series(cols, env, axes):
    J = env["config"].get("J", 1.0)
    t = cols["t"] * J / (2 * np.pi)
    for key in ("mean_p", "p", "p_ensemble", "p_manybody", "fidelity", "lambda"):
        if key in cols:
            axes[0].plot(t, cols[key], lw=0.8, label=key)
    axes[0].legend()
    for key in cols:
        if key.startswith("pop_"):
            axes[1].plot(t, cols[key], lw=0.8, label=f"k={key[4:]}")
    if any(k.startswith("pop_") for k in cols):
        axes[1].legend()
    axes[-1].set_xlabel("t / T_J")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("csv")
    ap.add_argument("-o", "--output", default=None)
    ap.add_argument("--value", default=None, help="grid column to colour (default: last)")
    args = ap.parse_args(argv)
    env, cols = read_csv(args.csv)
    if "F_over_J" in cols:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        value = args.value or [c for c in cols if c not in ("F_over_J", "g_over_J", "F_cr_over_J")][0]
        plot_grid(cols, value, ax)
    elif "t" in cols:
        fig, axes = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
        plot_series(cols, env, axes)
    else:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        x = list(cols)[0]
        for key in list(cols)[1:]:
            if np.issubdtype(cols[key].dtype, np.number):
                ax.plot(cols[x], cols[key], ".", ms=2, label=key)
        ax.set_xlabel(x)
        ax.legend()
    ax_title = env.get("command", "")
    fig.suptitle(ax_title)
    fig.tight_layout()
    out = args.output or args.csv.rsplit(".", 1)[0] + ".png"
    fig.savefig(out, dpi=150)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
