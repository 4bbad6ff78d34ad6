"""Figure rendering for the experiment reports.

Every figure is drawn from the same rows that go into the CSV files, so
the plots are a view of the delimited output, never extra computation.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def save_history_plot(history, path):
    """Training-loss curve plus validation metrics when present."""
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(epochs, [row["train_loss"] for row in history],
            color="tab:blue", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    if history and "val_f1" in history[0]:
        ax2 = ax.twinx()
        ax2.plot(epochs, [row["val_f1"] for row in history],
                 color="tab:orange", label="val F1")
        ax2.plot(epochs, [row["val_accuracy"] for row in history],
                 color="tab:green", alpha=0.7, label="val accuracy")
        ax2.set_ylabel("validation metric")
        ax2.set_ylim(0.0, 1.05)
        lines, labels = ax.get_legend_handles_labels()
        l2, lb2 = ax2.get_legend_handles_labels()
        ax.legend(lines + l2, labels + lb2, loc="center right", fontsize=8)
    else:
        ax.legend(loc="upper right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def save_sweep_plot(rows, path):
    """Per-seed F1 scatter over noise rate with the per-rate mean line."""
    rates = sorted({r["noise_rate"] for r in rows})
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.scatter([r["noise_rate"] for r in rows], [r["f1"] for r in rows],
               s=18, alpha=0.5, color="tab:blue", label="per-seed F1")
    means = [sum(r["f1"] for r in rows if r["noise_rate"] == rate)
             / max(1, sum(1 for r in rows if r["noise_rate"] == rate))
             for rate in rates]
    ax.plot(rates, means, color="tab:red", marker="o", label="mean F1")
    ax.set_xlabel("training label-noise rate")
    ax.set_ylabel("test F1")
    ax.set_ylim(0.0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
