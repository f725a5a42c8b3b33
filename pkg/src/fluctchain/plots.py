"""Static SVG plots from result CSV tables.

One figure per results file: error-bar lines for scalar estimators, a
lag/time heatmap for correlation tables.  Nothing is interactive; plots
are render-once artifacts next to the CSVs they come from.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError

log = logging.getLogger("fluctchain")

__all__ = ["emit_plots", "plot_rows"]

_REQUIRED = ("estimator", "n", "ell", "sigma", "t", "value", "stderr", "replicas")


def _read_rows(path: Path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in _REQUIRED if c not in (reader.fieldnames or [])]
        if missing:
            raise ConfigError(f"{path.name}: missing columns {', '.join(missing)}")
        return list(reader)


def plot_rows(rows: list, title: str, out_path: Path) -> None:
    """Render one results table: heatmap if it is a (lag, time) grid."""
    lags = sorted({int(r["ell"]) for r in rows if r["ell"] != ""})
    times = sorted({float(r["t"]) for r in rows if r["t"] != ""})
    fig, ax = plt.subplots(figsize=(6, 4))
    if len(lags) > 1 and len(times) > 1:
        grid = np.full((len(times), len(lags)), np.nan)
        for r in rows:
            i = times.index(float(r["t"]))
            j = lags.index(int(r["ell"]))
            grid[i, j] = float(r["value"])
        im = ax.imshow(
            grid, aspect="auto", origin="lower",
            extent=(min(lags), max(lags), min(times), max(times)),
        )
        fig.colorbar(im, ax=ax, label="S(j, t)")
        ax.set_xlabel("lag j")
        ax.set_ylabel("t")
    elif len(lags) > 1:
        x = np.array(lags, dtype=float)
        y = np.array([float(r["value"]) for r in sorted(rows, key=lambda r: int(r["ell"]))])
        e = np.array([float(r["stderr"]) for r in sorted(rows, key=lambda r: int(r["ell"]))])
        ax.errorbar(x, y, yerr=e, marker="o")
        ax.set_xscale("log", base=2)
        if np.all(y > 0):
            ax.set_yscale("log")
        ax.set_xlabel("block size ℓ")
        ax.set_ylabel("estimate")
    else:
        order = sorted(rows, key=lambda r: float(r["t"] or 0.0))
        x = np.array([float(r["t"] or 0.0) for r in order])
        y = np.array([float(r["value"]) for r in order])
        e = np.array([float(r["stderr"]) for r in order])
        ax.errorbar(x, y, yerr=e, marker="o")
        ax.set_xlabel("t")
        ax.set_ylabel("estimate")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)


def emit_plots(results_dir, out_dir=None) -> list:
    """Render an SVG per results CSV; empty directory is a warned no-op."""
    results_dir = Path(results_dir)
    out = Path(out_dir) if out_dir else results_dir
    out.mkdir(parents=True, exist_ok=True)
    csvs = sorted(results_dir.glob("results_*.csv")) + sorted(results_dir.glob("sweep.csv"))
    if not csvs:
        log.warning("no result CSVs in %s, nothing to plot", results_dir)
        return []
    written = []
    for path in csvs:
        rows = _read_rows(path)
        if not rows:
            continue
        target = out / (path.stem + ".svg")
        plot_rows(rows, path.stem, target)
        written.append(target)
    return written
