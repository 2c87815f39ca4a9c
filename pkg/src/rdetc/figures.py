"""Report figures rendered next to the delimited output files.

Everything draws through the Agg backend so batch runs need no display;
the CSVs remain the canonical record, the figures are for eyeballs.
"""
from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 130,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "font.size": 10,
}


def _saved(fig, outdir, name):
    path = os.path.join(outdir, name)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def render_trace_figures(trace, outdir, tau=None):
    """Norm decay, control signals, dynamic variable, and dwell times."""
    written = []
    ev_t = trace.event_times
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.semilogy(trace.t, np.maximum(trace.norm_u, 1e-300), label="||u||")
        ax.semilogy(trace.t, np.maximum(trace.Omega, 1e-300), label="Omega")
        if np.all(np.isfinite(trace.V)):
            ax.semilogy(trace.t, np.maximum(trace.V, 1e-300), label="V")
        if ev_t.size:
            ax.plot(ev_t, np.interp(ev_t, trace.t, trace.norm_u), "k.",
                    ms=3, label="events")
        ax.set_xlabel("t")
        ax.set_title("state norm and functionals")
        ax.legend(loc="best")
        written.append(_saved(fig, outdir, "fig_norms.png"))

        fig, ax = plt.subplots()
        ax.step(trace.t, trace.U_d, where="post", label="U_d (held)")
        ax.plot(trace.t, trace.U_no, alpha=0.7, label="U_no (continuous)")
        ax.set_xlabel("t")
        ax.set_title("control signals")
        ax.legend(loc="best")
        written.append(_saved(fig, outdir, "fig_control.png"))

        fig, ax = plt.subplots()
        ax.plot(trace.t, trace.m)
        ax.axhline(0.0, color="k", lw=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("m(t)")
        ax.set_title("dynamic trigger variable")
        written.append(_saved(fig, outdir, "fig_m.png"))

        if ev_t.size > 1:
            gaps = np.diff(ev_t)
            fig, ax = plt.subplots()
            ax.semilogy(np.arange(1, gaps.size + 1), gaps, "o-", ms=3,
                        label="inter-event gap")
            if tau is not None and tau > 0:
                ax.axhline(tau, color="r", ls="--", label="dwell bound tau")
            ax.set_xlabel("event index")
            ax.set_ylabel("gap (s)")
            ax.set_title("dwell times")
            ax.legend(loc="best")
            written.append(_saved(fig, outdir, "fig_dwell.png"))
    return written


def render_kernel_figures(kernel, gain, outdir):
    """Triangle heatmap of the kernel plus the boundary gain curve."""
    written = []
    with plt.rc_context(_STYLE):
        vals = np.where(np.tri(kernel.n, dtype=bool), kernel.values, np.nan)
        fig, ax = plt.subplots(figsize=(5.2, 4.4))
        im = ax.imshow(vals, origin="lower", extent=(0, 1, 0, 1),
                       aspect="equal", cmap="RdBu_r")
        fig.colorbar(im, ax=ax, label="k(x, y)")
        ax.set_xlabel("y")
        ax.set_ylabel("x")
        ax.set_title(f"{kernel.kind} kernel, n = {kernel.n}")
        written.append(_saved(fig, outdir, f"fig_kernel_{kernel.kind}.png"))

        if gain is not None:
            fig, ax = plt.subplots()
            ax.plot(gain.grid, gain.samples)
            ax.set_xlabel("y")
            ax.set_ylabel("K(y)")
            ax.set_title(f"boundary gain, wp = {gain.wp:.4f}")
            written.append(_saved(fig, outdir, "fig_gain.png"))
    return written


def render_sweep_figure(rows, param, outdir):
    """Decay rate and event count against the swept parameter."""
    if not rows:
        return []
    vals = [r["_sweep_value"] for r in rows]
    rates = [r["rate_omega"] for r in rows]
    events = [r["events"] for r in rows]
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.8))
        ax1.plot(vals, rates, "o-")
        ax1.set_xlabel(param)
        ax1.set_ylabel("fitted Omega decay rate")
        ax2.plot(vals, events, "s-")
        ax2.set_xlabel(param)
        ax2.set_ylabel("event count")
        fig.suptitle("parameter sweep")
        return [_saved(fig, outdir, "fig_sweep.png")]
