"""Figures for experiment reports and environment diagnostics."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness import Report  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _numeric(label: str) -> float | None:
    try:
        return float(label)
    except ValueError:
        return None


def plot_report(report: Report, stem) -> list[Path]:
    """Target-phase regret against past-sample size and against shift exponent.

    Writes ``<stem>_n_p.png`` and ``<stem>_gamma.png`` when the report has
    more than one value along the respective axis. Error bars are one
    standard error.
    """
    stem = Path(stem)
    written = []
    by_gamma: dict[str, list] = defaultdict(list)
    by_np: dict[int, list] = defaultdict(list)
    for a in report.aggregates:
        if a.trials == 0:
            continue
        by_gamma[(a.policy, a.gamma)].append(a)
        if _numeric(a.gamma) is not None:
            by_np[(a.policy, a.n_p)].append(a)

    if any(len(v) > 1 for v in by_gamma.values()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for (policy, gamma), aggs in sorted(by_gamma.items()):
            if len(aggs) < 2:
                continue
            aggs.sort(key=lambda a: a.n_p)
            ax.errorbar([a.n_p for a in aggs], [a.mean_regret_q for a in aggs], yerr=[a.stderr for a in aggs],
                        marker="o", capsize=3, label=f"{policy}, gamma={gamma}")
        ax.set_xlabel("past samples n_P")
        ax.set_ylabel("target-phase regret")
        ax.legend(fontsize=7)
        written.append(_save(fig, stem.with_name(stem.name + "_n_p.png")))

    if any(len(v) > 1 for v in by_np.values()):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for (policy, n_p), aggs in sorted(by_np.items()):
            if len(aggs) < 2:
                continue
            aggs.sort(key=lambda a: float(a.gamma))
            ax.errorbar([float(a.gamma) for a in aggs], [a.mean_regret_q for a in aggs], yerr=[a.stderr for a in aggs],
                        marker="o", capsize=3, label=f"{policy}, n_P={n_p}")
        ax.set_xlabel("shift exponent gamma")
        ax.set_ylabel("target-phase regret")
        ax.legend(fontsize=7)
        written.append(_save(fig, stem.with_name(stem.name + "_gamma.png")))
    return written


def plot_field(field_, margin, stem, resolution: int = 200) -> Path:
    """Best-arm map and gap heat map of a reward field, plus its margin CDF."""
    stem = Path(stem)
    g = (np.arange(resolution) + 0.5) / resolution
    grid = np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    means = field_.means(grid)
    top2 = np.sort(means, axis=1)[:, -2:]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.8))
    axes[0].imshow(means.argmax(axis=1).reshape(resolution, resolution), origin="lower", extent=(0, 1, 0, 1), cmap="tab10",
                   vmin=0, vmax=9)
    axes[0].set_title("best arm")
    im = axes[1].imshow((top2[:, 1] - top2[:, 0]).reshape(resolution, resolution), origin="lower", extent=(0, 1, 0, 1))
    fig.colorbar(im, ax=axes[1])
    axes[1].set_title("gap to second arm")
    ok = margin.cdf > 0
    axes[2].loglog(margin.thresholds[ok], margin.cdf[ok], "o-", ms=3)
    axes[2].set_xlabel("threshold")
    axes[2].set_title(f"margin CDF, alpha_hat={margin.alpha_hat:.2f}")
    return _save(fig, stem.with_name(stem.name + "_field.png"))
