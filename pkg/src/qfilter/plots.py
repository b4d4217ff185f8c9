"""Figure rendering for the CLI report paths (PNG files next to the CSVs)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def fidelity_figure(result, path, title: str = "Mean fidelity between state and filter"):
    """Mean fidelity vs time with a +/-2 stderr band."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    t = np.asarray(result.checkpoints)
    mean = np.asarray(result.mean_fidelity)
    se = np.asarray(result.stderr)
    ax.plot(t, mean, color="tab:blue", lw=1.6, label=f"mean over {result.completed} trajectories")
    ax.fill_between(t, mean - 2 * se, mean + 2 * se, color="tab:blue", alpha=0.25,
                    label="mean ± 2 stderr")
    ax.set_xlabel("time")
    ax.set_ylabel("fidelity")
    ax.set_title(title)
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(report, path):
    """Jump-vs-diffusive gaps at the final checkpoint as a function of alpha."""
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 4.0))
    alphas = np.asarray(report.alphas)
    for ax, gap, se, label in (
        (axes[0], report.obs_gap[:, -1], report.stderr_obs[:, -1], "observable gap"),
        (axes[1], report.fid_gap[:, -1], report.stderr_fid[:, -1], "fidelity gap"),
    ):
        ax.errorbar(alphas, gap, yerr=2 * se, fmt="o-", capsize=3)
        ax.set_xlabel("local-oscillator amplitude")
        ax.set_ylabel(label)
        ax.set_xscale("log")
        ax.grid(alpha=0.3)
    t_final = float(report.checkpoints[-1])
    fig.suptitle(f"Counting vs diffusive ensembles at t = {t_final:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def chain_gap_figure(gaps, path):
    """Histogram of exact one-step expected-fidelity gains over random pairs."""
    fig, ax = plt.subplots(figsize=(7, 4.2))
    gaps = np.asarray(gaps)
    ax.hist(gaps, bins=60, color="tab:green", alpha=0.8)
    ax.axvline(0.0, color="k", lw=1)
    ax.set_xlabel("expected next-step fidelity minus current fidelity")
    ax.set_ylabel("pairs")
    ax.set_title(f"One-step gains: min = {gaps.min():.3e}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
