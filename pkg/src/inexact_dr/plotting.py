"""Static SVG figures for run reports."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp keep the SVG output reproducible
matplotlib.rcParams["svg.hashsalt"] = "inexact-dr"
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def _positive(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return np.where(arr > 0, arr, np.nan)


def plot_residuals(trace, path, title: str = "") -> Path:
    """Primal/dual residuals and step tolerances against k, log scale."""
    k = [r.k for r in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(k, _positive([r.res_primal for r in trace]), label=r"$\|x_{k-1}-y_k\|$")
    ax.semilogy(k, _positive([r.res_dual for r in trace]), label=r"$\|a_k+b_{k-1}\|$")
    tol = _positive([r.alpha_k + r.beta_k for r in trace])
    if np.any(np.isfinite(tol)):
        ax.semilogy(k, tol, "--", color="0.5", label=r"$\alpha_k+\beta_k$")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("residual")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _save(fig, Path(path))


def plot_fejer(distances: Sequence[float], path, title: str = "") -> Path:
    """lambda-norm distance of p_k to the known solution."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(np.arange(len(distances)), _positive(distances), marker=".", ms=3)
    ax.set_xlabel("iteration k")
    ax.set_ylabel(r"$\|p_k - p\|_\lambda$")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, Path(path))


def plot_sweep_heatmap(values: np.ndarray, row_labels: Sequence[str],
                       col_labels: Sequence[str], path, title: Optional[str] = None) -> Path:
    """Mean iterations to tolerance per (lambda, schedule) cell; NaN cells stay blank."""
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(1.5 + 1.2 * len(col_labels), 1.2 + 0.6 * len(row_labels)))
    im = ax.imshow(np.ma.masked_invalid(values), cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=30, ha="right")
    ax.set_yticks(range(len(row_labels)), row_labels)
    ax.set_xlabel("schedule")
    ax.set_ylabel(r"$\lambda$")
    for (i, j), v in np.ndenumerate(values):
        if np.isfinite(v):
            ax.text(j, i, f"{v:.0f}", ha="center", va="center", color="w", fontsize=8)
    fig.colorbar(im, ax=ax, label="iterations")
    ax.set_title(title or "iterations to tolerance")
    return _save(fig, Path(path))
