"""Figures for training logs, evaluation reports and the ablation ladder.

Everything renders off-screen (Agg) straight to files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PHASE_COLORS = {"warmup": "tab:blue", "disc": "tab:orange", "dual": "tab:green", "refresh": "tab:gray"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(rows: Sequence[dict], path, smooth: int = 10) -> Path:
    """Loss per phase against the global step, with a running mean."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for phase in ("warmup", "disc", "dual"):
        pts = [(int(r["step"]), float(r["loss"])) for r in rows if r["phase"] == phase]
        if not pts:
            continue
        steps, loss = map(np.asarray, zip(*pts))
        ax.plot(steps, loss, ".", ms=2, alpha=0.3, color=PHASE_COLORS[phase])
        if len(loss) >= smooth:
            kernel = np.ones(smooth) / smooth
            ax.plot(steps[smooth - 1 :], np.convolve(loss, kernel, mode="valid"), color=PHASE_COLORS[phase], label=phase)
        else:
            ax.plot(steps, loss, color=PHASE_COLORS[phase], label=phase)
    for r in rows:
        if r["phase"] == "refresh":
            ax.axvline(int(r["step"]), color=PHASE_COLORS["refresh"], lw=0.8, ls="--")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_rank_histogram(ranks: Sequence[int], path, title: str = "") -> Path:
    """Histogram of the first relevant rank per query (0 = not retrieved)."""
    ranks = np.asarray(ranks, dtype=int)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    top = max(int(ranks.max(initial=1)), 1)
    ax.hist(ranks[ranks > 0], bins=np.arange(1, top + 2) - 0.5, color="tab:blue")
    ax.set_xlabel("rank of first relevant candidate")
    ax.set_ylabel("queries")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_ablation(per_seed: dict[str, Sequence[float]], path, ylabel: str = "held-out MRR") -> Path:
    """Bar per variant at the median, seeds as dots."""
    names = list(per_seed)
    fig, ax = plt.subplots(figsize=(1.4 * len(names) + 2, 3.5))
    for i, name in enumerate(names):
        vals = np.asarray(per_seed[name], dtype=float)
        ax.bar(i, np.median(vals), color="tab:blue", alpha=0.6)
        ax.plot(np.full(len(vals), i), vals, "k.", ms=4)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylabel(ylabel)
    return _save(fig, path)
