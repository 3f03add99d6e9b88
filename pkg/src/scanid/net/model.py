"""The compact inception-residual patch classifier.

Architecture (driven by a descriptor dict so variants are one-line
changes): 3x3 stem conv (32 ch) + BN + ReLU, two inception stages with a
1x1-conv + BN shortcut (64 then 128 output channels), each followed by
ReLU and 2x2 max-pooling, then global average pooling and an
inner-product layer producing one logit per scanner model.
"""

import numpy as np

from .layers import (BatchNorm2D, Conv2D, Dense, GlobalAvgPool, MaxPool2D,
                     Module, ReLU, Sequential, softmax)

PATCH_SIZE = 64

DEFAULT_DESCRIPTOR = {
    "input_channels": 3,
    "patch_size": PATCH_SIZE,
    "stem": 32,
    "stages": [
        {"b1": 16, "b3r": 16, "b3": 24, "b5r": 8, "b5": 8, "pp": 16},
        {"b1": 32, "b3r": 24, "b3": 48, "b5r": 16, "b5": 16, "pp": 32},
    ],
}


def stage_out_channels(stage):
    return stage["b1"] + stage["b3"] + stage["b5"] + stage["pp"]


class InceptionResidual(Module):
    """Inception module plus a 1x1-conv/BN shortcut, summed (pre-activation).

    Branches: 1x1; 1x1 reduce -> 3x3; 1x1 reduce -> 5x5; 3x3 max-pool ->
    1x1 projection. Branch outputs are channel-concatenated; the shortcut
    is added to the concatenation. ReLU is applied by the caller.
    """

    def __init__(self, cin, cfg):
        self.cfg = cfg
        self.b1 = Sequential([("conv", Conv2D(cin, cfg["b1"], 1, 0)),
                              ("bn", BatchNorm2D(cfg["b1"]))])
        self.b3 = Sequential([("reduce", Conv2D(cin, cfg["b3r"], 1, 0)),
                              ("rbn", BatchNorm2D(cfg["b3r"])),
                              ("relu", ReLU()),
                              ("conv", Conv2D(cfg["b3r"], cfg["b3"], 3, 1)),
                              ("bn", BatchNorm2D(cfg["b3"]))])
        self.b5 = Sequential([("reduce", Conv2D(cin, cfg["b5r"], 1, 0)),
                              ("rbn", BatchNorm2D(cfg["b5r"])),
                              ("relu", ReLU()),
                              ("conv", Conv2D(cfg["b5r"], cfg["b5"], 5, 2)),
                              ("bn", BatchNorm2D(cfg["b5"]))])
        self.bp = Sequential([("pool", MaxPool2D(3, 1, 1)),
                              ("conv", Conv2D(cin, cfg["pp"], 1, 0)),
                              ("bn", BatchNorm2D(cfg["pp"]))])
        self.shortcut = Sequential([("conv", Conv2D(cin, stage_out_channels(cfg), 1, 0)),
                                    ("bn", BatchNorm2D(stage_out_channels(cfg)))])
        self._branches = [("b1", self.b1), ("b3", self.b3),
                          ("b5", self.b5), ("bp", self.bp)]

    def named_params(self, prefix=""):
        out = []
        for name, mod in self._branches + [("shortcut", self.shortcut)]:
            out.extend(mod.named_params(f"{prefix}{name}."))
        return out

    def named_buffers(self, prefix=""):
        out = []
        for name, mod in self._branches + [("shortcut", self.shortcut)]:
            out.extend(mod.named_buffers(f"{prefix}{name}."))
        return out

    def named_modules(self, prefix=""):
        out = []
        for name, mod in self._branches + [("shortcut", self.shortcut)]:
            out.extend(mod.named_modules(f"{prefix}{name}."))
        return out

    def init_weights(self, rng, dtype):
        for _, mod in self._branches + [("shortcut", self.shortcut)]:
            mod.init_weights(rng, dtype)

    def branch_widths(self):
        return [self.cfg["b1"], self.cfg["b3"], self.cfg["b5"], self.cfg["pp"]]

    def inception_forward(self, x, train=False):
        """The branch-concatenation part only (no shortcut)."""
        return np.concatenate([mod.forward(x, train)
                               for _, mod in self._branches], axis=1)

    def forward(self, x, train=False):
        return self.inception_forward(x, train) + self.shortcut.forward(x, train)

    def backward(self, dout):
        dx = self.shortcut.backward(dout)
        start = 0
        for width, (_, mod) in zip(self.branch_widths(), self._branches):
            dx = dx + mod.backward(dout[:, start:start + width])
            start += width
        return dx


class PatchNet:
    """Trained or trainable network weights plus the architecture descriptor."""

    def __init__(self, n_classes, descriptor=None, dtype=np.float32):
        if n_classes < 2:
            raise ValueError(f"need at least 2 scanner models, got {n_classes}")
        self.n_classes = n_classes
        self.descriptor = dict(descriptor or DEFAULT_DESCRIPTOR)
        self.dtype = np.dtype(dtype)
        d = self.descriptor
        s1, s2 = d["stages"]
        self.seq = Sequential([
            ("stem", Conv2D(d["input_channels"], d["stem"], 3, 1)),
            ("stem_bn", BatchNorm2D(d["stem"])),
            ("stem_relu", ReLU()),
            ("stage1", InceptionResidual(d["stem"], s1)),
            ("stage1_relu", ReLU()),
            ("pool1", MaxPool2D(2, 2)),
            ("stage2", InceptionResidual(stage_out_channels(s1), s2)),
            ("stage2_relu", ReLU()),
            ("pool2", MaxPool2D(2, 2)),
            ("gap", GlobalAvgPool()),
            ("ip", Dense(stage_out_channels(s2), n_classes)),
        ])

    # -- parameter access ------------------------------------------------
    def named_params(self):
        return self.seq.named_params()

    def named_buffers(self):
        return self.seq.named_buffers()

    def named_modules(self):
        return self.seq.named_modules()

    def zero_grads(self):
        for _, p in self.named_params():
            p.grad[...] = 0

    def param_count(self):
        return sum(p.value.size for _, p in self.named_params())

    # -- inference / training --------------------------------------------
    def check_input(self, patches):
        d = self.descriptor
        expect = (d["input_channels"], d["patch_size"], d["patch_size"])
        if patches.ndim != 4 or patches.shape[1:] != expect:
            raise ValueError(
                f"expected patch batch of shape (N, {expect[0]}, {expect[1]}, "
                f"{expect[2]}), got {patches.shape}")

    def logits(self, patches, train=False):
        self.check_input(patches)
        return self.seq.forward(np.ascontiguousarray(patches, dtype=self.dtype), train)

    def forward(self, patches, train=False):
        """Per-patch probabilities over the scanner models, rows sum to 1."""
        return softmax(self.logits(patches, train))

    def backward(self, dlogits):
        """Propagate a loss gradient w.r.t. the logits; accumulates grads."""
        return self.seq.backward(np.ascontiguousarray(dlogits, dtype=self.dtype))


def build_network(n_classes, seed, descriptor=None, dtype=np.float32):
    """He-initialized PatchNet; identical weights for identical seeds."""
    net = PatchNet(n_classes, descriptor, dtype)
    rng = np.random.default_rng(seed)
    net.seq.init_weights(rng, net.dtype)
    return net


def inception_forward(module, features, train=False):
    """Concatenated branch output of one inception module."""
    return module.inception_forward(features, train)


def resnet34_param_count(n_classes):
    """Parameter count of a standard 34-layer residual reference network."""
    total = 3 * 64 * 7 * 7 + 2 * 64  # stem conv + BN
    cin = 64
    for blocks, ch in ((3, 64), (4, 128), (6, 256), (3, 512)):
        for b in range(blocks):
            first_in = cin if b == 0 else ch
            total += first_in * ch * 9 + 2 * ch       # conv1 + BN
            total += ch * ch * 9 + 2 * ch             # conv2 + BN
            if b == 0 and first_in != ch:
                total += first_in * ch + 2 * ch       # downsample 1x1 + BN
        cin = ch
    total += 512 * n_classes + n_classes              # fc
    return total
