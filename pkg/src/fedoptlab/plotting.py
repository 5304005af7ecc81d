"""Figure rendering for traces and study reports.

Figures are written next to the delimited outputs.  The Agg backend is
forced and PNG metadata is stripped so repeated runs produce byte-identical
image files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

#: gaps are clipped here before taking logs
_GAP_FLOOR = 1e-17
_SAVE_KW = dict(dpi=110, metadata={"Software": None})


def _gap_series(trace):
    gap = trace.gap()
    return trace.rounds, np.maximum(gap, _GAP_FLOOR)


def plot_gap_curves(traces: dict, path, floors: dict = None, title: str = "") -> None:
    """Semilog cost-gap curves per run, with optional dashed floor lines."""
    fig, ax = plt.subplots(figsize=(7.0, 4.6))
    for label, trace in traces.items():
        t, gap = _gap_series(trace)
        ax.semilogy(t, gap, label=label, linewidth=1.4)
    if floors:
        for label, level in floors.items():
            ax.axhline(max(level, _GAP_FLOOR), linestyle="--", linewidth=0.9,
                       color="gray", alpha=0.8)
    ax.set_xlabel("round t")
    ax.set_ylabel("cost gap F(x_t) - F*")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_study(report, path) -> None:
    """Log-log iteration complexity T(eps, kappa) with fitted slopes."""
    fig, ax = plt.subplots(figsize=(6.4, 4.6))
    for name, marker in (("fedgd", "o"), ("fedsplit", "s")):
        rows = [r for r in report.rows if r.algorithm == name and not r.censored]
        if not rows:
            continue
        kappas = [r.kappa for r in rows]
        hits = [r.t_hit for r in rows]
        label = name
        fit = report.fits.get(name)
        if fit is not None:
            label = f"{name} (slope {fit.slope:.2f})"
        ax.loglog(kappas, hits, marker=marker, linewidth=1.2, label=label)
    ax.set_xlabel("condition number kappa")
    ax.set_ylabel(f"rounds to gap <= {report.eps:g}")
    ax.set_title("iteration complexity vs conditioning")
    ax.legend(fontsize=9)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
