"""SVG rendering of tradeoff tables. The CSV is the contract; plots are a view of it."""

from __future__ import annotations

import math
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "svg.hashsalt": "physchan",  # stable element ids -> reproducible SVG
    "svg.fonttype": "none",
}

_YLABEL = {"rmse": "rMSE", "rel_capacity": "relative capacity"}


def _curves(records, metric):
    curves = defaultdict(list)
    for r in records:
        curves[(r.estimator, r.psnr_db)].append((r.p, getattr(r, metric)))
    return {k: sorted(v) for k, v in sorted(curves.items())}


def plot_records(records, path, metric: str = "rmse", title: str | None = None, log_y: bool | None = None) -> None:
    """One curve per (estimator, pSNR) against p, written to ``path`` as SVG."""
    if log_y is None:
        log_y = metric == "rmse"
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (estimator, snr), pts in _curves(records, metric).items():
            ps = [p for p, v in pts if not math.isnan(v)]
            vs = [v for p, v in pts if not math.isnan(v)]
            if not ps:
                continue
            style = "--" if estimator.startswith(("omp", "lmmse", "ls")) else "-"
            ax.plot(ps, vs, style, marker="." if len(ps) < 40 else None, label=f"{estimator}, {snr:g} dB")
        ax.set_xlabel("number of virtual paths p")
        ax.set_ylabel(_YLABEL.get(metric, metric))
        if log_y:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        ax.legend(ncol=2)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
