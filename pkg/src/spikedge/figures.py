"""Figure rendering for experiment reports.

Each renderer writes one PNG next to the delimited output of the same run.
matplotlib is imported lazily and pinned to the Agg backend so rendering
works headless and never touches a display.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .harness import AccuracyResult, DensityResult, MomentsResult


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_density(result: DensityResult, path: str | Path) -> Path:
    """Histogram of the top-spike statistic with both approximating curves."""
    plt = _pyplot()
    path = Path(path)
    used = int(result.counts.sum())
    widths = np.diff(result.bin_edges)
    if used > 0:
        heights = result.counts / (used * widths)
    else:
        heights = np.zeros_like(widths)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.bar(
        result.bin_edges[:-1],
        heights,
        width=widths,
        align="edge",
        color="lightsteelblue",
        edgecolor="white",
        label="empirical",
    )
    ax.plot(result.curve_x, result.curve_gauss, "k--", label="gaussian")
    ax.plot(result.curve_x, result.curve_edgeworth, "r-", label="corrected")
    spec = result.spec
    ax.set_title(
        f"{spec.dist}, spikes {spec.spikes}, n={spec.n}, p={spec.p} "
        f"(KS {result.ks_gauss:.4f} vs {result.ks_edgeworth:.4f})"
    )
    ax.set_xlabel("standardized top eigenvalue")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_accuracy(results: list[AccuracyResult], path: str | Path) -> Path:
    """Exact-recovery percentage per method across (p, n) cells."""
    plt = _pyplot()
    path = Path(path)
    labels = [f"({r.spec.p},{r.spec.n})" for r in results]
    methods = list(results[0].percents) if results else []

    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    x = np.arange(len(labels))
    for method in methods:
        ax.plot(x, [r.percents[method] for r in results], marker="o", label=method)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=45, ha="right")
    ax.set_ylabel("exact recovery (%)")
    ax.set_ylim(-2.0, 102.0)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_moments(result: MomentsResult, path: str | Path) -> Path:
    """Estimator means with 3-s.e. bars against their analytic values."""
    plt = _pyplot()
    path = Path(path)
    names = list(result.means)

    fig, axes = plt.subplots(1, len(names), figsize=(3.0 * len(names), 3.5))
    if len(names) == 1:
        axes = [axes]
    for ax, name in zip(axes, names):
        se = result.ses[name]
        err = 3.0 * se if np.isfinite(se) else 0.0
        ax.errorbar([0], [result.means[name]], yerr=[err], fmt="o", capsize=5, label="estimate")
        ax.axhline(result.truths[name], color="r", linestyle="--", label="truth")
        ax.set_xticks([])
        ax.set_title(name)
    axes[0].legend(loc="best", fontsize="small")
    spec = result.spec
    fig.suptitle(f"{spec.dist}, n={spec.n}, p={spec.p}, reps={spec.reps}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
