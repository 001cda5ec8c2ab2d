"""Report figures. Everything renders off-screen to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .tactile_sim import STAMP_ORDER  # noqa: E402

PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=PNG_META)
    plt.close(fig)
    return path


def training_curves(report, path):
    fig, (a, b) = plt.subplots(1, 2, figsize=(8, 3.2))
    ep = np.arange(1, len(report.train_touch_mse) + 1)
    a.plot(ep, report.train_touch_mse, label="train")
    a.plot(ep, report.val_touch_mse, label="validation")
    if report.baseline_val_mse is not None:
        a.axhline(report.baseline_val_mse, color="k", ls="--", lw=0.8, label="mean predictor")
    if report.best_epoch is not None:
        a.axvline(report.best_epoch + 1, color="0.6", lw=0.8)
    a.set_xlabel("epoch")
    a.set_ylabel("touch MSE (standardized)")
    a.legend(frameon=False, fontsize=8)
    b.plot(ep, report.train_recon_mse, label="train")
    b.plot(ep, report.val_recon_mse, label="validation")
    b.set_xlabel("epoch")
    b.set_ylabel("reconstruction MSE")
    b.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def recognition_curves(curves: dict, n_candidates: int, path):
    """``curves[label] = per-touch accuracy``."""
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    for label, acc in curves.items():
        ax.plot(np.arange(1, len(acc) + 1), acc, marker="o", ms=3, label=label)
    ax.axhline(1.0 / n_candidates, color="k", ls="--", lw=0.8, label="chance")
    ax.set_ylim(0, 1.05)
    ax.set_xlabel("touch")
    ax.set_ylabel("recognition accuracy")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, path)


def confusion(cm, path):
    names = [s.value for s in STAMP_ORDER]
    fig, ax = plt.subplots(figsize=(4, 3.6))
    ax.imshow(cm, cmap="Blues")
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(cm[i, j]), ha="center", va="center", fontsize=8)
    ax.set_xticks(range(len(names)), names, rotation=45)
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    return _save(fig, path)


def cluster_means(summaries, path):
    k = len(summaries)
    fig, axes = plt.subplots(2, k, figsize=(2.2 * k, 4.2), squeeze=False)
    for c, s in enumerate(summaries):
        axes[0, c].imshow(s.mean_patch, cmap="gray", vmin=0, vmax=1)
        axes[0, c].set_title(f"cluster {c} (n={s.size})", fontsize=8)
        axes[0, c].axis("off")
        z = s.mean_signal[2::3]
        xy = s.mean_signal.reshape(-1, 3)
        axes[1, c].bar(range(len(z)), z, color="tab:orange")
        axes[1, c].set_xticks(range(len(z)))
        axes[1, c].set_title("site z / |xy|", fontsize=8)
        axes[1, c].plot(range(len(z)), np.hypot(xy[:, 0], xy[:, 1]), "k.", ms=4)
    return _save(fig, path)
