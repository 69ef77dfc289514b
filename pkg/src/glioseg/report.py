"""Figure rendering for evaluation tables and training logs."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import REGIONS
from .metrics import EvaluationResult

REGION_LABELS = {"wt": "WT", "tc": "TC", "et": "ET"}


def save_metric_figures(result: EvaluationResult, out_dir: str | Path) -> list[Path]:
    """Per-region box plots of Dice and HD95 alongside the CSV tables."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric, ylabel, fname in (
        ("dice", "Dice score", "dice_scores.png"),
        ("hd95", "HD95 (mm)", "hd95.png"),
    ):
        fig, ax = plt.subplots(figsize=(5, 4))
        data = [[getattr(c, metric)[r] for c in result.cases] for r in REGIONS]
        ax.boxplot(data, tick_labels=[REGION_LABELS[r] for r in REGIONS])
        for i, vals in enumerate(data):
            jitter = np.linspace(-0.08, 0.08, max(len(vals), 2))[: len(vals)]
            ax.plot(np.full(len(vals), i + 1) + jitter, vals, "o", ms=4, alpha=0.6)
        ax.set_ylabel(ylabel)
        ax.set_xlabel("Region")
        means = ", ".join(
            f"{REGION_LABELS[r]} {result.mean(metric, r):.3f}" for r in REGIONS
        )
        ax.set_title(f"{ylabel} per case (mean: {means})", fontsize=9)
        fig.tight_layout()
        path = out_dir / fname
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def save_training_curves(log_path: str | Path, out_path: str | Path) -> Path:
    """Loss components and LR per step, plus validation Dice per epoch."""
    steps, epochs = [], []
    with open(log_path) as fh:
        for line in fh:
            rec = json.loads(line)
            if rec.get("event") == "step":
                steps.append(rec)
            elif rec.get("event") == "epoch":
                epochs.append(rec)

    fig, axes = plt.subplots(1, 3 if epochs else 2, figsize=(11 if epochs else 8, 3.5))
    ax = axes[0]
    xs = [r["step"] for r in steps]
    ax.plot(xs, [r["loss"] for r in steps], label="total", lw=1.5)
    for key in ("focal_seg", "dice", "focal_cls", "bce_cls"):
        ax.plot(xs, [r[key] for r in steps], label=key, lw=0.8, alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=7)

    ax = axes[1]
    ax.plot(xs, [r["lr"] for r in steps])
    ax.set_xlabel("step")
    ax.set_ylabel("learning rate")

    if epochs:
        ax = axes[2]
        ex = [r["epoch"] for r in epochs]
        for region in REGIONS:
            ax.plot(ex, [r["val_dice"][region] for r in epochs], label=REGION_LABELS[region])
        ax.set_xlabel("epoch")
        ax.set_ylabel("validation Dice")
        ax.set_ylim(0, 1)
        ax.legend(fontsize=7)

    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
