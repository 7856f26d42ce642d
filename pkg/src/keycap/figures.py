"""Headless rendering of training and evaluation figures.

Both renderers write PNG files next to the delimited text outputs so a run
leaves a glanceable picture alongside the machine-readable artifacts.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def loss_curve(log_records: list[dict], path) -> None:
    """Plot per-batch training loss and per-epoch validation loss."""
    batch_x, batch_y = [], []
    val_x, val_y = [], []
    step = 0
    for record in log_records:
        if "loss" in record:
            batch_x.append(step)
            batch_y.append(record["loss"])
            step += 1
        elif "val_loss" in record:
            # Pin the validation point to the last batch of its epoch.
            val_x.append(max(step - 1, 0))
            val_y.append(record["val_loss"])
    fig, ax = plt.subplots(figsize=(7, 4))
    if batch_y:
        ax.plot(batch_x, batch_y, color="#4878d0", linewidth=1.0, label="train batch")
    if val_y:
        ax.plot(val_x, val_y, color="#d65f5f", marker="o", linewidth=1.5, label="validation")
    ax.set_xlabel("batch")
    ax.set_ylabel("cross entropy")
    ax.set_title("training loss")
    ax.legend(loc="upper right")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def metric_bars(report, path) -> None:
    """Bar chart of the evaluation report scores."""
    labels = ["BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "BLEU-avg",
              "CIDEr", "ROUGE-L", "METEOR"]
    values = [report.bleu_1, report.bleu_2, report.bleu_3, report.bleu_4,
              report.bleu_avg, report.cider, report.rouge_l, report.meteor]
    fig, ax = plt.subplots(figsize=(8, 4))
    bars = ax.bar(labels, values, color="#4878d0")
    for bar, value in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height(),
                f"{value:.3f}", ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("score")
    ax.set_title(f"caption metrics over {report.corpus_size} samples")
    ax.set_ylim(0, max(1.05, max(values) * 1.1))
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
