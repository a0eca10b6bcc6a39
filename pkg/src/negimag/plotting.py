"""Figure rendering for loop experiments (matplotlib, no display needed)."""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

__all__ = ["plot_impulse_results"]


def plot_impulse_results(results, path, log_amplitude=False, title=None):
    """Plot ``y1`` of several impulse experiments into one PNG.

    ``results`` maps a legend label to an :class:`~negimag.feedback.ImpulseResult`.
    With ``log_amplitude`` the magnitude ``|y1|`` is drawn on a log axis.
    """
    fig = Figure(figsize=(7.0, 4.2), dpi=110)
    FigureCanvasAgg(fig)
    ax = fig.add_subplot(1, 1, 1)
    for label, res in results.items():
        t = res.trace.t
        y = res.trace.y1.samples[:, 0]
        text = f"{label} ({res.label})"
        if log_amplitude:
            # Exact zeros would vanish from a log axis.
            ax.semilogy(t, np.maximum(np.abs(y), 1e-300), label=text, lw=1.2)
        else:
            ax.plot(t, y, label=text, lw=1.2)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("|y1|" if log_amplitude else "y1")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    return path
