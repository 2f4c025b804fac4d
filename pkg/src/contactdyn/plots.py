"""Figure rendering for benchmark reports (PNG files next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_gamma_curve(path, k_values, gamma_means, gamma_all=None):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    if gamma_all is not None:
        for k, gs in zip(k_values, gamma_all):
            ax.plot([k] * len(gs), gs, ".", color="0.7", ms=3)
    ax.plot(k_values, gamma_means, "o-", color="tab:red")
    ax.set_xscale("log", base=2)
    ax.set_xticks(list(k_values))
    ax.set_xticklabels([str(k) for k in k_values])
    ax.set_xlabel("pyramid faces k")
    ax.set_ylabel("force gap $\\gamma$ (%)")
    ax.set_title("pyramid LCP vs exact-cone Gauss-Seidel")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_time_curves(path, m_values, series, title="solver time vs contacts"):
    """series: dict label -> list of times (s)."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, times in series.items():
        ax.plot(m_values, np.asarray(times) * 1e3, "o-", label=label)
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xticks(list(m_values))
    ax.set_xticklabels([str(m) for m in m_values])
    ax.set_xlabel("contacts m")
    ax.set_ylabel("wall time (ms)")
    ax.set_title(title)
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_delassus_heatmaps(path, blocks, title):
    """blocks: dict label -> (m, m) magnitude grid."""
    n = len(blocks)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 3.6))
    if n == 1:
        axes = [axes]
    for ax, (label, grid) in zip(axes, blocks.items()):
        vmax = np.abs(grid).max()
        im = ax.imshow(np.abs(grid), cmap="viridis", vmin=0, vmax=vmax)
        ax.set_title(label)
        ax.set_xlabel("contact")
        ax.set_ylabel("contact")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_force_profile(path, times, forces, markers=None, title="coupling force"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(times, forces, lw=0.8, color="0.6", label="raw")
    if len(forces) > 15:
        w = 15
        smooth = np.convolve(forces, np.ones(w) / w, mode="same")
        ax.plot(times, smooth, lw=1.6, color="tab:blue", label="smoothed")
    if markers:
        for label, t in markers.items():
            ax.axvline(t, color="tab:red", ls="--", lw=0.8)
            ax.text(t, ax.get_ylim()[1] * 0.95, label, rotation=90,
                    va="top", fontsize=8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("|force| (N)")
    ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_timing_series(path, times_ms, title="contact solve time per step"):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.plot(times_ms, lw=0.8)
    ax.set_xlabel("step")
    ax.set_ylabel("solve time (ms)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
