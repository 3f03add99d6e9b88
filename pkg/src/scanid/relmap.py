"""Task 2: reliability maps, heatmap rendering, forgery-localization scores.

The map assigns every pixel the average probability (for the image's
voted scanner label) over all sliding windows containing that pixel.
Low values flag suspected manipulation.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .classify import majority_vote, PatchDecision
from .errors import ParameterError
from .tiling import PATCH_SIZE, sliding_windows, split_zigzag

MAP_MAGIC = b"SMAP"
MAP_VERSION = 1


@dataclass
class ReliabilityMap:
    prob: np.ndarray      # (H, W) float64 in [0, 1]
    coverage: np.ndarray  # (H, W) int32, windows covering each pixel
    scanner: int          # voted label the map was computed against
    stride: int


def _net_window_probs(image, net, batch_size=256):
    def fn(specs):
        x = np.stack([s.crop(image) for s in specs])
        x = x.astype(np.float32).transpose(0, 3, 1, 2) / 255.0
        return np.concatenate([net.forward(x[i:i + batch_size])
                               for i in range(0, len(x), batch_size)])
    return fn


def reliability_map(image, net, stride, label=None, window_prob_fn=None):
    """Per-pixel mean voted-label probability over covering windows.

    window_prob_fn(specs) -> (len(specs), N_s) lets tests stub the network.
    label overrides the majority vote (analysis hook).
    """
    probs_of = window_prob_fn or _net_window_probs(image, net)
    if label is None:
        tiles = split_zigzag(image)
        tile_probs = probs_of(tiles)
        decisions = [PatchDecision(t, p, int(p.argmax()))
                     for t, p in zip(tiles, tile_probs)]
        label = majority_vote(decisions)

    windows = sliding_windows(image, PATCH_SIZE, stride)
    win_probs = np.asarray(probs_of(windows))[:, label].astype(np.float64)
    h, w = image.shape[:2]
    acc = np.zeros((h, w), dtype=np.float64)
    coverage = np.zeros((h, w), dtype=np.int32)
    for spec, p in zip(windows, win_probs):  # fixed window-index order
        acc[spec.row0:spec.row0 + spec.n_rows,
            spec.col0:spec.col0 + spec.n_cols] += p
        coverage[spec.row0:spec.row0 + spec.n_rows,
                 spec.col0:spec.col0 + spec.n_cols] += 1
    return ReliabilityMap(acc / coverage, coverage, int(label), int(stride))


def _build_lut():
    # blue->red diverging map: dark blue at 0.0, dark red at 1.0
    anchors = [(0.000, (0, 0, 128)),
               (0.125, (0, 0, 255)),
               (0.375, (0, 255, 255)),
               (0.625, (255, 255, 0)),
               (0.875, (255, 0, 0)),
               (1.000, (128, 0, 0))]
    xs = np.array([a[0] for a in anchors])
    cols = np.array([a[1] for a in anchors], dtype=np.float64)
    t = np.linspace(0, 1, 256)
    lut = np.stack([np.interp(t, xs, cols[:, c]) for c in range(3)], axis=1)
    return np.rint(lut).astype(np.uint8)


HEATMAP_LUT = _build_lut()


def render_heatmap(rmap):
    """Map probabilities through the fixed 256-entry blue->red LUT."""
    idx = np.rint(np.clip(rmap.prob, 0.0, 1.0) * 255).astype(np.intp)
    return HEATMAP_LUT[idx]


def threshold_map(rmap, tau=0.5):
    """Binary suspicion mask: 1 where reliability is below tau."""
    if not 0 < tau < 1:
        raise ParameterError(f"threshold must be in (0, 1), got {tau}")
    return (rmap.prob < tau).astype(np.uint8)


def localization_score(mask, truth):
    """Pixel IoU and F1 between a predicted mask and the ground truth.

    Two empty masks count as a perfect match (vacuous truth).
    """
    mask = np.asarray(mask, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if mask.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {mask.shape} vs {truth.shape}")
    inter = int((mask & truth).sum())
    union = int((mask | truth).sum())
    if union == 0:
        return {"iou": 1.0, "f1": 1.0}
    iou = inter / union
    denom = int(mask.sum()) + int(truth.sum())
    f1 = 2 * inter / denom if denom else 1.0
    return {"iou": iou, "f1": f1}


def save_map(rmap, path, checkpoint_hash=""):
    """Portable binary map: JSON header + float64 prob + int32 coverage."""
    h, w = rmap.prob.shape
    header = json.dumps({
        "height": h, "width": w, "stride": rmap.stride,
        "label": rmap.scanner, "checkpoint": checkpoint_hash,
    }, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAP_MAGIC)
        f.write(struct.pack("<IQ", MAP_VERSION, len(header)))
        f.write(header)
        f.write(np.ascontiguousarray(rmap.prob, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(rmap.coverage, dtype="<i4").tobytes())


def load_map(path):
    with open(path, "rb") as f:
        if f.read(4) != MAP_MAGIC:
            raise ValueError(f"not a reliability map file: {path}")
        version, hlen = struct.unpack("<IQ", f.read(12))
        if version != MAP_VERSION:
            raise ValueError(f"unsupported map version {version}")
        header = json.loads(f.read(hlen))
        h, w = header["height"], header["width"]
        prob = np.frombuffer(f.read(8 * h * w), dtype="<f8").reshape(h, w)
        coverage = np.frombuffer(f.read(4 * h * w), dtype="<i4").reshape(h, w)
    return ReliabilityMap(prob.copy(), coverage.copy(),
                          header["label"], header["stride"])
