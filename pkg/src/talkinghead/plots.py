"""Figure rendering for training logs, metric reports and frame strips.

Everything draws through the Agg backend straight to files; no display
is ever required.  These figures accompany the CSV/JSON outputs of the
train/evaluate/ablate commands.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import METRIC_COLUMNS

__all__ = ["plot_loss_curves", "plot_metric_bars", "plot_frame_strip"]


def plot_loss_curves(log, path: str | Path) -> Path:
    """Step losses (left) and per-epoch validation metrics (right)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=(11, 4))

    if log.steps:
        steps = [r.step for r in log.steps]
        ax_loss.plot(steps, [r.l_l1 for r in log.steps], label="L1 (lower half)", lw=1)
        if any(r.l_adv_img for r in log.steps):
            ax_loss.plot(steps, [r.l_adv_img for r in log.steps], label="adv (frame)", lw=1)
        if any(r.l_adv_seq for r in log.steps):
            ax_loss.plot(steps, [r.l_adv_seq for r in log.steps], label="adv (sequence)", lw=1)
        ax_loss.set_yscale("symlog")
    ax_loss.set_xlabel("step")
    ax_loss.set_ylabel("loss")
    ax_loss.set_title("training losses")
    ax_loss.legend(loc="best", fontsize=8)
    ax_loss.grid(alpha=0.3)

    if log.epochs:
        epochs = [e["epoch"] for e in log.epochs]
        ax_val.plot(epochs, [e["val_ssim"] for e in log.epochs], "o-", label="val SSIM")
        ax_val.set_ylim(-0.05, 1.05)
        ax2 = ax_val.twinx()
        ax2.plot(epochs, [e["val_psnr"] for e in log.epochs], "s--", color="tab:orange",
                 label="val PSNR")
        ax2.set_ylabel("PSNR (dB)")
        lines1, labels1 = ax_val.get_legend_handles_labels()
        lines2, labels2 = ax2.get_legend_handles_labels()
        ax_val.legend(lines1 + lines2, labels1 + labels2, loc="lower right", fontsize=8)
    ax_val.set_xlabel("epoch")
    ax_val.set_ylabel("SSIM")
    ax_val.set_title("validation")
    ax_val.grid(alpha=0.3)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_metric_bars(rows: list[dict], path: str | Path) -> Path:
    """One panel per metric, one bar per configuration row.

    Rows are dicts with a 'sample_id' label and metric columns; N/A and
    missing values are skipped.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, len(METRIC_COLUMNS), figsize=(3 * len(METRIC_COLUMNS), 3.2))
    for ax, col in zip(np.atleast_1d(axes), METRIC_COLUMNS):
        labels, values = [], []
        for row in rows:
            value = row.get(col)
            if value is None or value == "N/A":
                continue
            value = float(value)
            if not np.isfinite(value):
                continue
            labels.append(str(row.get("sample_id", "?")))
            values.append(value)
        if values:
            ax.bar(range(len(values)), values, color="tab:blue")
            ax.set_xticks(range(len(values)))
            ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
        else:
            ax.text(0.5, 0.5, "N/A", ha="center", va="center", transform=ax.transAxes)
        ax.set_title(col.upper(), fontsize=9)
        ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_frame_strip(pixels: np.ndarray, path: str | Path, max_frames: int = 8) -> Path:
    """A horizontal strip of evenly spaced frames from a (T, H, W, 3) video."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    total = pixels.shape[0]
    picks = np.unique(np.linspace(0, total - 1, min(max_frames, total)).astype(int))
    fig, axes = plt.subplots(1, len(picks), figsize=(1.6 * len(picks), 1.9))
    for ax, t in zip(np.atleast_1d(axes), picks):
        ax.imshow(((pixels[t] + 1.0) / 2.0).clip(0, 1))
        ax.set_title(f"t={t}", fontsize=7)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
