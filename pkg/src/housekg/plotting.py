"""PNG figures written next to the tab-separated reports."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .data import RMP_CLASSES  # noqa: E402
from .model import Side  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_training_curve(path, log_rows, losses=None):
    """Per-step loss (if given) and validation MRR against step."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if losses is not None and len(losses):
        steps = np.arange(1, len(losses) + 1)
        ax.plot(steps, losses, color="0.6", lw=0.8, label="batch loss")
        window = min(100, len(losses))
        smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
        ax.plot(steps[window - 1:], smooth, color="k", lw=1.2, label=f"loss, {window}-step mean")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    if log_rows:
        ax2 = ax.twinx()
        ax2.plot([r.step for r in log_rows], [r.mrr for r in log_rows], "o-", color="tab:blue",
                 label="valid MRR")
        ax2.set_ylabel("valid MRR")
        ax2.set_ylim(0, 1)
        ax2.legend(loc="upper right")
    ax.legend(loc="upper left")
    return _save(fig, path)


def plot_per_relation(path, reports: dict, relation_names=None):
    rels = sorted(reports)
    labels = [relation_names[r] if relation_names is not None else str(r) for r in rels]
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(rels) + 2), 3.5))
    ax.bar(range(len(rels)), [reports[r].mrr for r in rels], color="tab:blue")
    ax.set_xticks(range(len(rels)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("MRR")
    ax.set_ylim(0, 1)
    return _save(fig, path)


def plot_rmp(path, reports: dict):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.arange(len(RMP_CLASSES))
    for offset, side in ((-0.2, Side.HEAD), (0.2, Side.TAIL)):
        vals = [reports[(side, c)].mrr if (side, c) in reports else 0.0 for c in RMP_CLASSES]
        ax.bar(x + offset, vals, width=0.4, label=f"predict {side.value}")
    ax.set_xticks(x)
    ax.set_xticklabels(RMP_CLASSES)
    ax.set_ylabel("MRR")
    ax.set_ylim(0, 1)
    ax.legend()
    return _save(fig, path)
