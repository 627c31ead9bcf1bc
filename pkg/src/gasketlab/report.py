"""Figures for the CLI report path (PNG/PDF/SVG by file extension)."""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.tri import Triangulation

from .gasket import GasketGraph


def _figure(width=5.0, height=4.0):
    fig = Figure(figsize=(width, height), layout="constrained")
    FigureCanvasAgg(fig)
    return fig


def _triangulation(g: GasketGraph) -> Triangulation:
    xy = g.xy
    return Triangulation(xy[:, 0], xy[:, 1], triangles=np.asarray(g.cells))


def plot_field(g: GasketGraph, values, path, *, title=None, cmap="viridis") -> None:
    """Field on ``Γ_n`` shaded over the level-n cells."""
    fig = _figure(5.2, 4.6)
    ax = fig.add_subplot()
    tri = _triangulation(g)
    art = ax.tripcolor(tri, np.asarray(values, dtype=float), shading="gouraud", cmap=cmap)
    ax.triplot(tri, color="k", lw=0.2, alpha=0.4)
    fig.colorbar(art, ax=ax, shrink=0.8)
    ax.set_aspect("equal")
    ax.set_axis_off()
    ax.set_title(title or f"level {g.level}")
    fig.savefig(path, dpi=150)


def plot_recursion(rows, path, *, limit=(3.0 / 7.0, -3.0 / 14.0), labels=("a", "b")) -> None:
    """Iterates ``(k, a_k, b_k)`` with their limits, plus the log-error."""
    rows = np.asarray(rows, dtype=float)
    fig = _figure(8.0, 3.4)
    ax1, ax2 = fig.subplots(1, 2)
    for col, name, lim in zip((1, 2), labels, limit):
        ax1.plot(rows[:, 0], rows[:, col], "o-", ms=3, label=name)
        ax1.axhline(lim, color="gray", lw=0.7, ls="--")
        err = np.abs(rows[:, col] - lim)
        keep = err > 0
        ax2.semilogy(rows[keep, 0], err[keep], "o-", ms=3, label=f"|{name} - limit|")
    k = rows[:, 0]
    ref = np.abs(rows[0, 1] - limit[0]) * (3.0 / 5.0) ** (k - k[0])
    ax2.semilogy(k, np.maximum(ref, 1e-300), "k:", lw=0.8, label="(3/5)^k")
    ax1.set_xlabel("level / step")
    ax2.set_xlabel("level / step")
    ax1.legend()
    ax2.legend(fontsize=8)
    fig.savefig(path, dpi=150)


def plot_hydro(rows, path) -> None:
    """Mean H₋₁² error at ``t`` and at ``0`` against level, with standard errors."""
    levels = np.array([r.level for r in rows])
    fig = _figure()
    ax = fig.add_subplot()
    ax.errorbar(levels, [r.err.mean for r in rows], yerr=[r.err.se for r in rows], fmt="o-", capsize=3,
                label="E‖ξ_t − u_t‖²₋₁")
    ax.errorbar(levels, [r.init.mean for r in rows], yerr=[r.init.se for r in rows], fmt="s--", capsize=3,
                label="E‖ξ_0 − u_0‖²₋₁")
    ax.set_yscale("log")
    ax.set_xticks(levels)
    ax.set_xlabel("level n")
    ax.legend()
    fig.savefig(path, dpi=150)


def plot_trace(trace, path) -> None:
    """``‖u_t‖²`` and the running energy integral of a PDE trace."""
    fig = _figure(7.0, 3.2)
    ax1, ax2 = fig.subplots(1, 2)
    ax1.plot(trace.times, trace.l2_sq, "-")
    ax1.set_xlabel("t")
    ax1.set_ylabel("‖u_t‖²₀")
    ax2.plot(trace.times, trace.energy_integral, "-")
    ax2.set_xlabel("t")
    ax2.set_ylabel("∫ E_n(u_s) ds")
    fig.savefig(path, dpi=150)


def plot_profile(times, means, path, *, labels=None) -> None:
    """Time series of a few site means."""
    fig = _figure()
    ax = fig.add_subplot()
    means = np.atleast_2d(means)
    for k, row in enumerate(means):
        ax.plot(times, row, label=None if labels is None else labels[k])
    ax.set_xlabel("t")
    if labels is not None:
        ax.legend(fontsize=8)
    fig.savefig(path, dpi=150)
