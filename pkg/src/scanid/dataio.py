"""Image decode/encode, dataset manifests and the deterministic 6:1:3 split.

Manifest files are line-oriented: a JSON header line carrying the label
registry and split seed, then one tab-separated record per image
(path, label_id, split). Diff-friendly and language-neutral.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DecodeError, ManifestError, SizeError

MIN_IMAGE_SIZE = 64
SPLITS = ("train", "val", "test")


def load_image(path):
    """Decode a JPEG/PNG file to an (H, W, 3) uint8 array.

    Grayscale sources are replicated to 3 channels; images smaller than
    64 pixels on either side are rejected.
    """
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    h, w = arr.shape[:2]
    if h < MIN_IMAGE_SIZE or w < MIN_IMAGE_SIZE:
        raise SizeError(
            f"image {path} is {h}x{w}; minimum is "
            f"{MIN_IMAGE_SIZE}x{MIN_IMAGE_SIZE}")
    return arr


def save_image(img, path, jpeg_quality=95):
    """Encode an (H, W, 3) uint8 array as PNG or JPEG based on extension."""
    img = np.asarray(img, dtype=np.uint8)
    pil = Image.fromarray(img)
    ext = os.path.splitext(path)[1].lower()
    if ext in (".jpg", ".jpeg"):
        pil.save(path, quality=jpeg_quality)
    else:
        pil.save(path)


@dataclass
class ManifestEntry:
    path: str
    label_id: int
    split: str


@dataclass
class DatasetManifest:
    entries: list = field(default_factory=list)
    label_names: list = field(default_factory=list)
    seed: int = 0

    def paths(self, split=None):
        return [e.path for e in self.entries if split is None or e.split == split]

    def by_split(self, split):
        if split not in SPLITS:
            raise ManifestError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def save(self, path):
        header = json.dumps(
            {"label_names": self.label_names, "seed": self.seed}, sort_keys=True)
        with open(path, "w") as f:
            f.write(header + "\n")
            for e in self.entries:
                f.write(f"{e.path}\t{e.label_id}\t{e.split}\n")

    @classmethod
    def load(cls, path):
        with open(path) as f:
            lines = f.read().splitlines()
        if not lines:
            raise ManifestError(f"empty manifest file: {path}")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise ManifestError(f"bad manifest header in {path}: {exc}") from exc
        entries = []
        for i, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in SPLITS:
                raise ManifestError(f"bad manifest record at {path}:{i}: {line!r}")
            entries.append(ManifestEntry(parts[0], int(parts[1]), parts[2]))
        return cls(entries, header["label_names"], int(header["seed"]))


def _split_counts(k, ratios):
    total = sum(ratios)
    n_train = int(np.floor(k * ratios[0] / total + 0.5))
    n_val = int(np.floor(k * ratios[1] / total + 0.5))
    n_test = k - n_train - n_val
    counts = [n_train, n_val, n_test]
    # repair so every split gets at least one item (k >= 3 guaranteed)
    for i in range(3):
        while counts[i] < 1:
            donor = int(np.argmax(counts))
            counts[donor] -= 1
            counts[i] += 1
    return counts


def split_dataset(images_by_label, ratios=(6, 1, 3), seed=0):
    """Per-label shuffled split into train/val/test with the given ratios.

    Pure function of (input set, seed): labels are processed in sorted
    name order with one seeded generator, so the same inputs always give
    a byte-identical manifest.
    """
    short = [name for name, paths in sorted(images_by_label.items())
             if len(paths) < 3]
    if short:
        raise ManifestError(
            "labels with fewer than 3 images cannot be split 6:1:3: "
            + ", ".join(short))
    label_names = sorted(images_by_label)
    rng = np.random.default_rng(seed)
    entries = []
    for label_id, name in enumerate(label_names):
        paths = sorted(images_by_label[name])
        order = rng.permutation(len(paths))
        shuffled = [paths[i] for i in order]
        n_train, n_val, _ = _split_counts(len(paths), ratios)
        for i, p in enumerate(shuffled):
            split = ("train" if i < n_train
                     else "val" if i < n_train + n_val else "test")
            entries.append(ManifestEntry(p, label_id, split))
    return DatasetManifest(entries, label_names, seed)
