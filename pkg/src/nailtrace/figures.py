"""Matplotlib figure output for the report paths (train, eval, ablate)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .ablation import SETTINGS, AblationResult  # noqa: E402
from .metrics import EvalReport  # noqa: E402


def plot_training_curves(log: list[dict], eval_history: list[dict], path: str | Path) -> None:
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    steps = [r["step"] for r in log]
    axes[0].plot(steps, [r["total"] for r in log], lw=0.8, label="total")
    axes[0].plot(steps, [r["fgbg"] for r in log], lw=0.8, label="fg/bg")
    axes[0].plot(steps, [r["class"] for r in log], lw=0.8, label="class")
    axes[0].plot(steps, [r["field"] for r in log], lw=0.8, label="field")
    axes[0].set_xlabel("step")
    axes[0].set_ylabel("loss")
    axes[0].set_yscale("log")
    axes[0].legend(fontsize=8)

    axes[1].plot(steps, [r["tau"] for r in log], lw=0.8, color="tab:red")
    axes[1].set_xlabel("step")
    axes[1].set_ylabel("pooling threshold tau")

    if eval_history:
        axes[2].plot(
            [e["epoch"] for e in eval_history],
            [e["binary_miou"] for e in eval_history],
            marker="o",
        )
    axes[2].set_xlabel("epoch")
    axes[2].set_ylabel("val binary mIoU")
    axes[2].set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_eval_report(report: EvalReport, path: str | Path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    axes[0].bar(range(1, 11), report.per_class_iou, color="tab:blue")
    axes[0].set_xlabel("finger class")
    axes[0].set_ylabel("IoU")
    axes[0].set_ylim(0, 1)
    summary = {
        "binary mIoU": report.binary_miou,
        "pixel acc": report.pixel_accuracy,
        "ang err (deg)/90": report.mean_angular_error_deg / 90.0,
    }
    axes[1].bar(range(len(summary)), list(summary.values()), color="tab:green")
    axes[1].set_xticks(range(len(summary)), list(summary.keys()), fontsize=8)
    axes[1].set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_ablation(result: AblationResult, path: str | Path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    width = 0.8 / max(len(result.seeds), 1)
    for i, seed in enumerate(result.seeds):
        vals = [result.miou(seed, s) for s in SETTINGS]
        ax.bar([j + i * width for j in range(3)], vals, width=width, label=f"seed {seed}")
    ax.set_xticks([j + 0.4 - width / 2 for j in range(3)], SETTINGS)
    ax.set_ylabel("val binary mIoU")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
