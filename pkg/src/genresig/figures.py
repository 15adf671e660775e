"""Matplotlib renderings of the report outputs, written next to the CSVs."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def confusion_figure(matrix, path):
    counts = matrix.counts
    names = matrix.genre_names
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"Confusion matrix (accuracy {matrix.accuracy:.3f})")
    threshold = counts.max() / 2 if counts.max() else 0.5
    for i in range(len(names)):
        for j in range(len(names)):
            ax.text(j, i, str(int(counts[i, j])), ha="center", va="center",
                    fontsize=8, color="white" if counts[i, j] > threshold else "black")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pca_figure(labels, coords, explained_ratio, path):
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    three_d = coords.shape[1] >= 3
    fig = plt.figure(figsize=(7, 6))
    if three_d:
        ax = fig.add_subplot(111, projection="3d")
        ax.scatter(coords[:, 0], coords[:, 1], coords[:, 2], s=30)
        for label, (x, y, z) in zip(labels, coords[:, :3]):
            ax.text(x, y, z, label, fontsize=8)
        ax.set_zlabel(f"pc3 ({explained_ratio[2]:.1%})")
    else:
        ax = fig.add_subplot(111)
        ax.scatter(coords[:, 0], coords[:, 1], s=30)
        for label, (x, y) in zip(labels, coords[:, :2]):
            ax.annotate(label, (x, y), fontsize=8, xytext=(3, 3),
                        textcoords="offset points")
        ax.grid(alpha=0.3)
    ax.set_xlabel(f"pc1 ({explained_ratio[0]:.1%})")
    ax.set_ylabel(f"pc2 ({explained_ratio[1]:.1%})")
    ax.set_title("Genre encodings, principal components")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def attention_figure(report, path):
    """Heat map of token weights, one row per sampled track."""
    if not report:
        return
    track_ids = [item["track_id"] for item in report]
    token_count = len(report[0]["tokens"])
    weights = np.zeros((len(report), token_count))
    for r, item in enumerate(report):
        for tok in item["tokens"]:
            weights[r, tok["token"]] = tok["weight"]
    fig, ax = plt.subplots(figsize=(8, max(3.0, 0.22 * len(report))))
    im = ax.imshow(weights, aspect="auto", cmap="magma")
    ax.set_yticks(range(len(track_ids)), track_ids, fontsize=6)
    ax.set_xticks(range(token_count))
    ax.set_xlabel("token")
    ax.set_title("Signature weights per token")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def neighbor_figure(names, distance_matrix, path):
    fig, ax = plt.subplots(figsize=(7, 6))
    im = ax.imshow(distance_matrix, cmap="viridis")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_yticks(range(len(names)), names)
    ax.set_title("Pairwise genre-encoding distances")
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def training_curves_figure(logs, path):
    folds = sorted({entry["fold"] for entry in logs})
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    for fold in folds:
        rows = [e for e in logs if e["fold"] == fold]
        epochs = [e["epoch"] for e in rows]
        ax_loss.plot(epochs, [e["val_loss"] for e in rows], label=f"fold {fold}")
        ax_acc.plot(epochs, [e["val_accuracy"] for e in rows], label=f"fold {fold}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("validation loss")
    ax_loss.grid(alpha=0.3)
    ax_acc.set_xlabel("epoch")
    ax_acc.set_ylabel("validation accuracy")
    ax_acc.grid(alpha=0.3)
    ax_acc.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
