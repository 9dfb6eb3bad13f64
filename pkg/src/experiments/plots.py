"""
Static SVG figures for the experiment commands.

Files are written with the Agg backend, without the date metadata and with a
fixed SVG hash salt, so two runs on the same data produce identical files.
"""

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use('Agg')  # Non-interactive backend
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SVG_HASH_SALT = "gd-experiments"


def _style():
    plt.rcParams['svg.hashsalt'] = SVG_HASH_SALT
    plt.rcParams['font.size'] = 11
    plt.rcParams['axes.titlesize'] = 12
    plt.rcParams['axes.labelsize'] = 11


def _save(fig, filename) -> Path:
    filename = Path(filename)
    filename.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(filename, format='svg', metadata={'Date': None})
    plt.close(fig)
    return filename


def plot_distance_path(t: np.ndarray, mean_dist: np.ndarray, sd_dist: np.ndarray,
                       threshold: float, filename, title: str = "") -> Path:
    """Mean ||v_t - w*|| with a ±1 sd band and the 2R/3 threshold."""
    _style()
    fig, ax = plt.subplots(figsize=(8, 5))
    ax.plot(t, mean_dist, color='#2E86AB', linewidth=1.8, label='mean ||v_t - w*||')
    ax.fill_between(t, mean_dist - sd_dist, mean_dist + sd_dist, color='#2E86AB', alpha=0.2,
                    linewidth=0)
    ax.axhline(threshold, color='#E94F37', linestyle='--', linewidth=1.2, label='2R/3')
    ax.set_xlabel('iteration t')
    ax.set_ylabel('distance to w*')
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(loc='upper left')
    return _save(fig, filename)


def plot_excess_heatmap(gammas: Sequence[float], Ts: Sequence[int], mean_excess: np.ndarray,
                        filename, title: str = "") -> Path:
    """
    Heatmap of mean excess risk, rows = step sizes, columns = stopping times.

    Cells that diverged (NaN) are left blank.
    """
    _style()
    fig, ax = plt.subplots(figsize=(10, 5))
    image = ax.imshow(np.ma.masked_invalid(mean_excess), aspect='auto', origin='lower',
                      cmap='viridis', interpolation='nearest')
    ax.set_yticks(range(len(gammas)))
    ax.set_yticklabels([f"{g:g}" for g in gammas])
    step = max(1, len(Ts) // 10)
    ticks = list(range(0, len(Ts), step))
    ax.set_xticks(ticks)
    ax.set_xticklabels([str(Ts[i]) for i in ticks])
    ax.set_xlabel('stopping time T')
    ax.set_ylabel('step size γ')
    if title:
        ax.set_title(title)
    fig.colorbar(image, ax=ax, label='mean excess risk')
    return _save(fig, filename)
