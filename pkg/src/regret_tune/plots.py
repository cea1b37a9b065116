"""SVG figure emitters for the study reports.

Rendering is deterministic: fixed hash salt, no timestamps in metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import EvaluationReport

plt.rcParams["svg.hashsalt"] = "regret-tune"

_SAVE_KW = {"format": "svg", "metadata": {"Date": None}, "bbox_inches": "tight"}


def save_cost_curves(
    path,
    gains: np.ndarray,
    cost_curves: np.ndarray,
    regret_curves: np.ndarray,
    k_mm: float,
    k_mmb: float,
    k_b: float,
    k_opt: float,
    title: str = "",
    max_curves: int = 40,
) -> None:
    """Two-panel sweep over a scalar gain: worst-case cost (left) and
    worst-case baseline regret (right), with scenario curves behind."""
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 3.6), sharex=True)
    step = max(1, cost_curves.shape[0] // max_curves)
    for ax, curves, k_sol, label in (
        (axes[0], cost_curves, k_mm, "min-max"),
        (axes[1], regret_curves, k_mmb, "min-max-baseline"),
    ):
        env = curves.max(axis=0)
        ax.plot(gains, curves[::step].T, lw=0.4, alpha=0.35)
        ax.plot(gains, env, "k--", lw=1.4, label="worst case")
        i_sol = int(np.argmin(np.abs(gains - k_sol)))
        ax.plot([k_sol], [env[i_sol]], "ko", ms=6, label=label)
        ax.axvline(k_b, color="tab:blue", ls="--", lw=1.0, label="baseline")
        ax.axvline(k_opt, color="tab:red", ls="--", lw=1.0, label="optimal")
        ax.set_xlabel("controller gain")
        ax.legend(loc="upper right", fontsize=8)
    axes[0].set_ylabel("criterion")
    axes[1].set_ylabel("criterion minus baseline")
    if title:
        fig.suptitle(title)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_metric_boxes(
    path,
    report: EvaluationReport,
    metric: str,
    baseline_value: float,
    title: str = "",
) -> None:
    """Box plot per synthesis method with whiskers at 99.3% coverage and
    the baseline level as a dashed line."""
    methods = ["nominal", "min-max", "min-max-baseline"]
    data = []
    for m in methods:
        vals = report.values(m, metric)
        data.append(vals[np.isfinite(vals)])
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.boxplot(
        data,
        tick_labels=methods,
        whis=(0.35, 99.65),
        flierprops={"marker": ".", "markersize": 4, "markerfacecolor": "k"},
    )
    ax.axhline(baseline_value, color="tab:blue", ls="--", lw=1.0, label="baseline")
    ax.set_ylabel(metric)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
