"""SGD training loop for the patch classifier.

Hyperparameter defaults: learning rate 0.01, momentum 0.5, weight decay
0.0001. Each epoch re-extracts one random patch per training sub-image
(fresh seeds per epoch), so patch location acts as augmentation. The
best-validation-accuracy weights are what training returns.
"""

import copy
import csv
import os
from dataclasses import asdict, dataclass

import numpy as np

from .dataio import load_image
from .errors import DataError, LabelError
from .net import build_network
from .net.layers import softmax
from .tiling import extract_random_patch, split_zigzag

VAL_SEED_TAG = 104729  # fixed tag so validation patches never move


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.5
    weight_decay: float = 0.0001
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    tile_rows: int = 64
    tile_cols: int = 64
    patches_per_subimage_per_epoch: int = 1


def cross_entropy(prob, target):
    """-ln p[target], clamped at p >= 1e-12."""
    prob = np.asarray(prob)
    if not 0 <= target < prob.shape[-1]:
        raise LabelError(
            f"target {target} outside label range [0, {prob.shape[-1]})")
    return float(-np.log(max(float(prob[target]), 1e-12)))


def sgd_update(params, velocity, cfg):
    """Momentum SGD step, in place: v' = m*v - lr*(g + wd*w); w += v'.

    params: iterable of (name, Param); BN scale/shift carry decay=False
    and are excluded from weight decay.
    """
    for name, p in params:
        g = p.grad
        if cfg.weight_decay and p.decay:
            g = g + cfg.weight_decay * p.value
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(p.value)
        v = cfg.momentum * v - cfg.learning_rate * g
        velocity[name] = v
        p.value += v.astype(p.value.dtype)


def _load_split(manifest, split, root):
    entries = manifest.by_split(split)
    return [(load_image(os.path.join(root, e.path)), e.label_id)
            for e in entries]


def _epoch_patches(images, cfg, epoch_tag):
    """One seeded random patch per sub-image of every image."""
    xs, ys = [], []
    for ei, (img, label) in enumerate(images):
        tiles = split_zigzag(img, cfg.tile_rows, cfg.tile_cols)
        for ti, tile in enumerate(tiles):
            patch = extract_random_patch(
                tile, img, rng_seed=[cfg.seed, epoch_tag, ei, ti])
            xs.append(patch.pixels)
            ys.append(label)
    x = np.stack(xs).astype(np.float32).transpose(0, 3, 1, 2) / 255.0
    return x, np.asarray(ys, dtype=np.int64)


def _eval_patches(net, x, y, batch_size):
    losses, correct = [], 0
    for i in range(0, len(x), batch_size):
        probs = net.forward(x[i:i + batch_size], train=False)
        yb = y[i:i + batch_size]
        p = probs[np.arange(len(yb)), yb]
        losses.append(-np.log(np.maximum(p, 1e-12)))
        correct += int((probs.argmax(axis=1) == yb).sum())
    return float(np.concatenate(losses).mean()), correct / len(x)


def _snapshot(net):
    return ([(n, p.value.copy()) for n, p in net.named_params()],
            [(n, b.copy()) for n, b in net.named_buffers()])


def _restore(net, snap):
    params, buffers = snap
    values = dict(params)
    for n, p in net.named_params():
        p.value[...] = values[n]
    bufvals = dict(buffers)
    from .net.layers import BatchNorm2D
    for prefix, mod in net.named_modules():
        if isinstance(mod, BatchNorm2D):
            mod.running_mean = bufvals[f"{prefix}.running_mean"].copy()
            mod.running_var = bufvals[f"{prefix}.running_var"].copy()


def train(manifest, cfg, root="", descriptor=None, net=None, log=None):
    """Train on the manifest's train split, validating per epoch.

    Returns (net with best-val weights, curves) where curves is a list of
    dicts: epoch, train_loss, train_acc, val_loss, val_acc.
    """
    train_images = _load_split(manifest, "train", root)
    if not train_images:
        raise DataError("manifest has no train entries")
    val_images = _load_split(manifest, "val", root)
    n_classes = len(manifest.label_names)

    if net is None:
        net = build_network(n_classes, cfg.seed, descriptor)
    velocity = {}
    curves = []
    best = (None, -1.0)

    val_x = val_y = None
    if val_images:
        vx, vy = [], []
        for ei, (img, label) in enumerate(val_images):
            for ti, tile in enumerate(split_zigzag(img, cfg.tile_rows, cfg.tile_cols)):
                patch = extract_random_patch(
                    tile, img, rng_seed=[cfg.seed, VAL_SEED_TAG, ei, ti])
                vx.append(patch.pixels)
                vy.append(label)
        val_x = np.stack(vx).astype(np.float32).transpose(0, 3, 1, 2) / 255.0
        val_y = np.asarray(vy, dtype=np.int64)

    for epoch in range(cfg.epochs):
        x, y = _epoch_patches(train_images, cfg, epoch)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(x))
        x, y = x[order], y[order]
        total_loss, correct = 0.0, 0
        for i in range(0, len(x), cfg.batch_size):
            xb, yb = x[i:i + cfg.batch_size], y[i:i + cfg.batch_size]
            probs = net.forward(xb, train=True)
            p = probs[np.arange(len(yb)), yb]
            total_loss += float(-np.log(np.maximum(p, 1e-12)).sum())
            correct += int((probs.argmax(axis=1) == yb).sum())
            dlogits = probs.copy()
            dlogits[np.arange(len(yb)), yb] -= 1.0
            dlogits /= len(yb)
            net.zero_grads()
            net.backward(dlogits)
            sgd_update(net.named_params(), velocity, cfg)
        row = {"epoch": epoch,
               "train_loss": total_loss / len(x),
               "train_acc": correct / len(x)}
        if val_x is not None:
            row["val_loss"], row["val_acc"] = _eval_patches(
                net, val_x, val_y, cfg.batch_size)
            if row["val_acc"] > best[1]:
                best = (_snapshot(net), row["val_acc"])
        curves.append(row)
        if log:
            log(row)

    if best[0] is not None:
        _restore(net, best[0])
    return net, curves


def save_curves(curves, path):
    fields = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for row in curves:
            writer.writerow({k: row.get(k, "") for k in fields})


def config_snapshot(cfg):
    return asdict(cfg)
