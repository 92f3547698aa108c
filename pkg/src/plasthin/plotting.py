"""Figures for run directories: matplotlib PNGs plus a gnuplot script over the CSVs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {"figure.figsize": (6.0, 3.8), "axes.grid": True, "grid.alpha": 0.3, "font.size": 9}


def plot_energetics(rows, path) -> None:
    """Elastic energy, cumulative dissipation and work against time."""
    t = [r["t"] for r in rows]
    Q = [r["Q"] for r in rows]
    D, W = [], []
    d = w = 0.0
    for r in rows:
        d += r["dD"]
        w += r["W"]
        D.append(d)
        W.append(w)
    with plt.rc_context(STYLE):
        fig, (ax, bx) = plt.subplots(1, 2)
        ax.plot(t, Q, "o-", ms=3, label="Q")
        ax.plot(t, D, "s-", ms=3, label="D(0,t)")
        ax.plot(t, W, "^-", ms=3, label="W(0,t)")
        ax.set_xlabel("t")
        ax.set_title("energetics")
        ax.legend()
        bx.plot(t, [r["balance_residual"] for r in rows], "k.-")
        bx.set_xlabel("t")
        bx.set_title("balance residual")
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def plot_convergence(rows, path) -> None:
    """Energy and unfolded-strain gaps against h on log axes."""
    rows = [r for r in rows if r["h"] != "hom"]
    h = [float(r["h"]) for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(h, [max(float(r["energy_gap"]), 1e-300) for r in rows], "o-", label="|Q_h - Q_hom|")
        ax.loglog(h, [max(float(r["strain_gap"]), 1e-300) for r in rows], "s-", label="strain gap")
        ax.set_xlabel("h")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def write_gnuplot(out_dir, kind: str) -> Path:
    """Write ``plot.gp`` drawing the same figures from the CSVs with gnuplot."""
    out_dir = Path(out_dir)
    if kind == "convergence":
        body = (
            "set terminal pngcairo size 800,500\n"
            "set output 'convergence_gp.png'\n"
            "set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "set logscale xy\n"
            "set xlabel 'h'\n"
            "plot 'convergence.csv' every ::1 using 1:4 with linespoints title 'energy gap', \\\n"
            "     'convergence.csv' every ::1 using 1:5 with linespoints title 'strain gap'\n"
        )
    else:
        body = (
            "set terminal pngcairo size 800,500\n"
            "set output 'energetics_gp.png'\n"
            "set datafile separator ','\n"
            "set key autotitle columnhead\n"
            "set xlabel 't'\n"
            "plot 'reports.csv' using 2:3 with linespoints title 'Q', \\\n"
            "     'reports.csv' using 2:4 with linespoints title 'dD', \\\n"
            "     'reports.csv' using 2:6 with linespoints title 'balance residual'\n"
        )
    path = out_dir / "plot.gp"
    path.write_text(body)
    return path
