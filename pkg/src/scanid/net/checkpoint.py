"""Self-describing weight checkpoint container.

Layout: 4-byte magic ``SCID``, u32 format version, u64 JSON header
length, JSON header (architecture descriptor, label registry, training
config, tensor index), then the tensor blobs as little-endian float32 in
index order.
"""

import hashlib
import json
import struct

import numpy as np

from .layers import BatchNorm2D
from .model import PatchNet

MAGIC = b"SCID"
VERSION = 1


def save_checkpoint(net, path, label_names, train_config=None):
    """Write network weights, BN statistics and the label registry to path."""
    if len(label_names) != net.n_classes:
        raise ValueError("label registry size does not match network output width")
    tensors = [(name, p.value) for name, p in net.named_params()]
    tensors += [(name, buf) for name, buf in net.named_buffers()]
    index = [{"name": name, "shape": list(t.shape)} for name, t in tensors]
    header = {
        "descriptor": net.descriptor,
        "n_classes": net.n_classes,
        "label_names": list(label_names),
        "train_config": train_config,
        "tensors": index,
    }
    hjson = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(hjson)))
        f.write(hjson)
        for _, t in tensors:
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32):
    """Rebuild a PatchNet from a checkpoint; returns (net, label_names, config)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"not a scanid checkpoint: {path}")
        version, hlen = struct.unpack("<IQ", f.read(12))
        if version != VERSION:
            raise ValueError(f"unsupported checkpoint version {version} in {path}")
        header = json.loads(f.read(hlen))
        blobs = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(4 * count)
            blobs[entry["name"]] = np.frombuffer(
                raw, dtype="<f4").reshape(shape).astype(dtype)

    net = PatchNet(header["n_classes"], header["descriptor"], dtype)
    for name, p in net.named_params():
        p.value = blobs[name].copy()
        p.grad = np.zeros_like(p.value)
    for prefix, mod in net.named_modules():
        if isinstance(mod, BatchNorm2D):
            mod.running_mean = blobs[f"{prefix}.running_mean"].copy()
            mod.running_var = blobs[f"{prefix}.running_var"].copy()
    return net, header["label_names"], header.get("train_config")


def checkpoint_hash(path):
    """Short content hash used to tag metrics and map files."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
