"""Task 1: per-patch classification, majority-vote image labels, metrics."""

import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dataio import load_image
from .errors import DataError, LabelError
from .tiling import extract_random_patch, split_zigzag


@dataclass
class PatchDecision:
    sub_image: object      # SubImageSpec
    prob: np.ndarray       # length-N_s, sums to 1
    label: int             # argmax(prob)


def classify_patches(image, net, n=64, m=64, seed=0, batch_size=256):
    """One eval-mode decision per zig-zag tile of the image.

    For n = m = 64 the patch coincides with the tile; larger tiles use a
    seeded random patch location.
    """
    tiles = split_zigzag(image, n, m)
    patches = []
    for ti, tile in enumerate(tiles):
        if n == 64 and m == 64:
            patches.append(tile.crop(image))
        else:
            patches.append(extract_random_patch(tile, image, [seed, ti]).pixels)
    x = np.stack(patches).astype(np.float32).transpose(0, 3, 1, 2) / 255.0
    probs = np.concatenate([net.forward(x[i:i + batch_size])
                            for i in range(0, len(x), batch_size)])
    return [PatchDecision(tile, p, int(p.argmax()))
            for tile, p in zip(tiles, probs)]


def majority_vote(decisions):
    """Most frequent patch label; ties broken by larger summed probability
    over the tied labels, then by smaller label id."""
    if not decisions:
        raise DataError("majority vote over an empty decision list")
    counts = Counter(d.label for d in decisions)
    top = max(counts.values())
    tied = [lbl for lbl, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]
    sums = {lbl: sum(float(d.prob[lbl]) for d in decisions) for lbl in tied}
    best = max(sums.values())
    return min(lbl for lbl in tied if sums[lbl] == best)


class ConfusionMatrix:
    """Integer count matrix, rows = true label, cols = predicted."""

    def __init__(self, n_classes):
        self.counts = np.zeros((n_classes, n_classes), dtype=np.int64)

    def add(self, true_label, predicted):
        self.counts[true_label, predicted] += 1

    def accuracy(self):
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else 0.0

    def save_csv(self, path, label_names=None):
        n = self.counts.shape[0]
        names = label_names or [str(i) for i in range(n)]
        with open(path, "w") as f:
            f.write("true\\pred," + ",".join(names) + "\n")
            for i in range(n):
                f.write(names[i] + "," + ",".join(map(str, self.counts[i])) + "\n")

    def render_png(self, path, label_names=None):
        """Row-normalized accuracy shading, one cell per (true, predicted)."""
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        row_sums = np.maximum(self.counts.sum(axis=1, keepdims=True), 1)
        frac = self.counts / row_sums
        n = self.counts.shape[0]
        names = label_names or [str(i) for i in range(n)]
        fig, ax = plt.subplots(figsize=(max(4, n * 0.6), max(4, n * 0.6)))
        im = ax.imshow(frac, vmin=0, vmax=1, cmap="Blues")
        ax.set_xticks(range(n), names, rotation=90, fontsize=7)
        ax.set_yticks(range(n), names, fontsize=7)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        for i in range(n):
            for j in range(n):
                if self.counts[i, j]:
                    ax.text(j, i, f"{frac[i, j]:.2f}", ha="center",
                            va="center", fontsize=6,
                            color="white" if frac[i, j] > 0.5 else "black")
        fig.colorbar(im, ax=ax, fraction=0.046)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


def evaluate(manifest, split, net, label_names, n=64, m=64, seed=0, root="",
             workers=1):
    """Patch- and image-level accuracy plus confusion matrices on a split.

    workers > 1 classifies images in a thread pool (eval-mode inference is
    read-only on the weights); the confusion-count reduction is order-free.
    """
    entries = manifest.by_split(split)
    if not entries:
        raise DataError(f"manifest split {split!r} is empty")
    if manifest.label_names != list(label_names):
        raise LabelError(
            "manifest label registry does not match the checkpoint registry: "
            f"{manifest.label_names} vs {list(label_names)}")
    n_classes = len(label_names)
    patch_cm = ConfusionMatrix(n_classes)
    image_cm = ConfusionMatrix(n_classes)

    def decide(entry):
        if entry.label_id >= n_classes:
            raise LabelError(f"label id {entry.label_id} outside registry")
        img = load_image(os.path.join(root, entry.path))
        return classify_patches(img, net, n, m, seed)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            all_decisions = list(pool.map(decide, entries))
    else:
        all_decisions = [decide(e) for e in entries]
    for e, decisions in zip(entries, all_decisions):
        for d in decisions:
            patch_cm.add(e.label_id, d.label)
        image_cm.add(e.label_id, majority_vote(decisions))
    return {
        "patch_accuracy": patch_cm.accuracy(),
        "image_accuracy": image_cm.accuracy(),
        "patch_confusion": patch_cm,
        "image_confusion": image_cm,
        "n_images": len(entries),
        "n_patches": int(patch_cm.counts.sum()),
        "seed": seed,
    }
