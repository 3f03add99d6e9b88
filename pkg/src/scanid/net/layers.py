"""Neural-net building blocks with explicit forward/backward passes.

All feature maps are NCHW. Convolutions are stride 1 and bias-free
(batch norm always follows); gradients are exact, verified against
finite differences in the test suite.
"""

import numpy as np

from .. import kernels


class Param:
    """A learnable tensor with its gradient and a weight-decay flag."""

    __slots__ = ("value", "grad", "decay")

    def __init__(self, value, decay=True):
        self.value = value
        self.grad = np.zeros_like(value)
        self.decay = decay


class Module:
    """Minimal layer protocol: forward caches, backward consumes the cache."""

    def named_params(self, prefix=""):
        return []

    def named_buffers(self, prefix=""):
        return []

    def named_modules(self, prefix=""):
        return [(prefix.rstrip("."), self)]

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Conv2D(Module):
    """Stride-1 2D convolution with same/valid padding, no bias."""

    def __init__(self, cin, cout, ksize, pad):
        self.cin, self.cout, self.ksize, self.pad = cin, cout, ksize, pad
        self.w = Param(np.zeros((cout, cin, ksize, ksize), dtype=np.float32))
        self._cache = None

    def init_weights(self, rng, dtype):
        fan_in = self.cin * self.ksize * self.ksize
        std = np.sqrt(2.0 / fan_in)
        self.w = Param((rng.standard_normal(
            (self.cout, self.cin, self.ksize, self.ksize)) * std).astype(dtype))

    def named_params(self, prefix=""):
        return [(prefix + "w", self.w)]

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        if c != self.cin:
            raise ValueError(
                f"conv expects {self.cin} input channels, got shape {x.shape}")
        k, p = self.ksize, self.pad
        if k == 1:  # 1x1 conv is a plain matmul, skip im2col
            cols = np.ascontiguousarray(x.transpose(0, 2, 3, 1)).reshape(-1, c)
        else:
            cols = kernels.im2col(np.ascontiguousarray(x), k, k, p, p)
        wmat = self.w.value.reshape(self.cout, -1)
        out = cols @ wmat.T
        oh = h + 2 * p - k + 1
        ow = w + 2 * p - k + 1
        if train:
            self._cache = (cols, x.shape)
        return np.ascontiguousarray(
            out.reshape(n, oh, ow, self.cout).transpose(0, 3, 1, 2))

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("conv backward without cached forward")
        cols, xshape = self._cache
        n, c, h, w = xshape
        k, p = self.ksize, self.pad
        dmat = np.ascontiguousarray(
            dout.transpose(0, 2, 3, 1)).reshape(-1, self.cout)
        self.w.grad += (dmat.T @ cols).reshape(self.w.value.shape)
        dcols = np.ascontiguousarray(dmat @ self.w.value.reshape(self.cout, -1))
        if k == 1:
            return np.ascontiguousarray(
                dcols.reshape(n, h, w, c).transpose(0, 3, 1, 2))
        return kernels.col2im(dcols, n, c, h, w, k, k, p, p)


class BatchNorm2D(Module):
    """Per-channel batch normalization with running statistics."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Param(np.ones(channels, dtype=np.float32), decay=False)
        self.beta = Param(np.zeros(channels, dtype=np.float32), decay=False)
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self._cache = None

    def init_weights(self, rng, dtype):
        self.gamma = Param(np.ones(self.channels, dtype=dtype), decay=False)
        self.beta = Param(np.zeros(self.channels, dtype=dtype), decay=False)
        self.running_mean = np.zeros(self.channels, dtype=dtype)
        self.running_var = np.ones(self.channels, dtype=dtype)

    def named_params(self, prefix=""):
        return [(prefix + "gamma", self.gamma), (prefix + "beta", self.beta)]

    def named_buffers(self, prefix=""):
        return [(prefix + "running_mean", self.running_mean),
                (prefix + "running_var", self.running_var)]

    def forward(self, x, train=False):
        g = self.gamma.value.reshape(1, -1, 1, 1)
        b = self.beta.value.reshape(1, -1, 1, 1)
        if train:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(x.dtype)
            self.running_var = ((1 - m) * self.running_var + m * var).astype(x.dtype)
            invstd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean.reshape(1, -1, 1, 1)) * invstd.reshape(1, -1, 1, 1)
            self._cache = (xhat, invstd)
            return g * xhat + b
        invstd = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x - self.running_mean.reshape(1, -1, 1, 1)) * invstd.reshape(1, -1, 1, 1)
        return g * xhat + b

    def backward(self, dout):
        if self._cache is None:
            raise RuntimeError("batchnorm backward without cached forward")
        xhat, invstd = self._cache
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        self.gamma.grad += (dout * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += dout.sum(axis=(0, 2, 3))
        g = self.gamma.value.reshape(1, -1, 1, 1)
        dxhat = dout * g
        s1 = dxhat.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        return (invstd.reshape(1, -1, 1, 1) / m) * (m * dxhat - s1 - xhat * s2)


class ReLU(Module):
    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._mask


class MaxPool2D(Module):
    def __init__(self, ksize, stride, pad=0):
        self.ksize, self.stride, self.pad = ksize, stride, pad
        self._cache = None

    def forward(self, x, train=False):
        out, argmax = kernels.maxpool_forward(
            np.ascontiguousarray(x), self.ksize, self.stride, self.pad)
        if train:
            self._cache = (argmax, x.shape)
        return out

    def backward(self, dout):
        argmax, xshape = self._cache
        n, c, h, w = xshape
        return kernels.maxpool_backward(
            np.ascontiguousarray(dout), argmax, n, c, h, w,
            self.ksize, self.stride, self.pad)


class GlobalAvgPool(Module):
    def __init__(self):
        self._xshape = None

    def forward(self, x, train=False):
        if train:
            self._xshape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        n, c, h, w = self._xshape
        return np.broadcast_to(
            dout[:, :, None, None] / (h * w), self._xshape).astype(dout.dtype).copy()


class Dense(Module):
    """Inner-product layer: (N, cin) -> (N, cout)."""

    def __init__(self, cin, cout):
        self.cin, self.cout = cin, cout
        self.w = Param(np.zeros((cin, cout), dtype=np.float32))
        self.b = Param(np.zeros(cout, dtype=np.float32))
        self._x = None

    def init_weights(self, rng, dtype):
        std = np.sqrt(2.0 / self.cin)
        self.w = Param((rng.standard_normal((self.cin, self.cout)) * std).astype(dtype))
        self.b = Param(np.zeros(self.cout, dtype=dtype))

    def named_params(self, prefix=""):
        return [(prefix + "w", self.w), (prefix + "b", self.b)]

    def forward(self, x, train=False):
        if train:
            self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dout):
        self.w.grad += self._x.T @ dout
        self.b.grad += dout.sum(axis=0)
        return dout @ self.w.value.T


class Sequential(Module):
    def __init__(self, children):
        # children: list of (name, module)
        self.children = children

    def named_params(self, prefix=""):
        out = []
        for name, mod in self.children:
            out.extend(mod.named_params(f"{prefix}{name}."))
        return out

    def named_buffers(self, prefix=""):
        out = []
        for name, mod in self.children:
            out.extend(mod.named_buffers(f"{prefix}{name}."))
        return out

    def named_modules(self, prefix=""):
        out = []
        for name, mod in self.children:
            out.extend(mod.named_modules(f"{prefix}{name}."))
        return out

    def init_weights(self, rng, dtype):
        for _, mod in self.children:
            if hasattr(mod, "init_weights"):
                mod.init_weights(rng, dtype)

    def forward(self, x, train=False):
        for _, mod in self.children:
            x = mod.forward(x, train)
        return x

    def backward(self, dout):
        for _, mod in reversed(self.children):
            dout = mod.backward(dout)
        return dout


def softmax(logits):
    """Numerically stable softmax, computed in double precision."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
