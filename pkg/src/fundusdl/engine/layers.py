"""Network layers with explicit forward/backward passes.

Every layer follows the same protocol: ``forward(x, train=False, rng=None)``
caches whatever the matching ``backward(grad_out)`` needs, ``backward``
returns the gradient with respect to the input and stores parameter
gradients on the layer. Arrays are float32 unless the layer was converted
with ``astype`` (gradient checks run in float64).

Shape algebra lives in ``out_shape`` so a network can be validated without
allocating activations. Spatial shapes are (channels, height, width);
flattened shapes are (features,).
"""

import numpy as np

from ..errors import ConfigurationError
from .init import orthogonal

__all__ = [
    "Conv2d",
    "Dense",
    "MaxPool2d",
    "LeakyReLU",
    "ReLU",
    "Dropout",
    "Maxout",
    "Flatten",
]


class Layer:
    """Shared plumbing. Subclasses fill in forward/backward/out_shape."""

    name = ""

    def params(self):
        """List of (suffix, array) parameter pairs; empty when stateless."""
        return []

    def grads(self):
        return []

    def astype(self, dtype):
        return self

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def out_shape(self, in_shape):
        raise NotImplementedError

    def _require(self, cond, msg):
        if not cond:
            raise ConfigurationError(f"{self.name or type(self).__name__}: {msg}")


class Conv2d(Layer):
    """2-d convolution (cross-correlation) via an im2col matrix product.

    One bias per output feature map, shared across spatial positions. Padding
    is symmetric zero padding; the output side is
    floor((in + 2*padding - kernel)/stride) + 1.
    """

    def __init__(self, in_channels, out_channels, kernel=4, stride=1, padding=0,
                 rng=None, dtype=np.float32, name=""):
        self.name = name or "conv"
        self._require(kernel >= 1 and stride >= 1 and padding >= 0,
                      "kernel/stride must be >= 1 and padding >= 0")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel = int(kernel)
        self.stride = int(stride)
        self.padding = int(padding)
        if rng is None:
            rng = np.random.default_rng()
        self.weight = orthogonal(
            (self.out_channels, self.in_channels, self.kernel, self.kernel),
            rng, dtype=dtype)
        self.bias = np.zeros(self.out_channels, dtype=dtype)
        self.grad_weight = None
        self.grad_bias = None
        self._cache = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def grads(self):
        return [("weight", self.grad_weight), ("bias", self.grad_bias)]

    def astype(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)
        return self

    def out_shape(self, in_shape):
        self._require(len(in_shape) == 3, f"expects (c,h,w) input, got {in_shape}")
        c, h, w = in_shape
        self._require(c == self.in_channels,
                      f"expects {self.in_channels} input channels, got {c}")
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        self._require(oh >= 1 and ow >= 1,
                      f"kernel {self.kernel} does not fit {h}x{w} input "
                      f"with padding {self.padding}")
        return (self.out_channels, oh, ow)

    def _im2col(self, x):
        n = x.shape[0]
        k, s, p = self.kernel, self.stride, self.padding
        if p:
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        oh = (x.shape[2] - k) // s + 1
        ow = (x.shape[3] - k) // s + 1
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]                      # n, c, oh, ow, k, k
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, -1)
        return cols, oh, ow

    def forward(self, x, train=False, rng=None):
        _, oh, ow = self.out_shape(tuple(x.shape[1:]))
        n = x.shape[0]
        cols, oh2, ow2 = self._im2col(x)
        assert (oh, ow) == (oh2, ow2)
        wmat = self.weight.reshape(self.out_channels, -1)
        out = cols @ wmat.T + self.bias
        out = out.reshape(n, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        self._cache = (cols, x.shape, oh, ow)
        return np.ascontiguousarray(out)

    def backward(self, grad_out):
        cols, x_shape, oh, ow = self._cache
        n, c, h, w = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        f = self.out_channels
        go = grad_out.transpose(0, 2, 3, 1).reshape(-1, f)
        wmat = self.weight.reshape(f, -1)
        self.grad_weight = (go.T @ cols).reshape(self.weight.shape)
        self.grad_bias = go.sum(axis=0)
        gcols = go @ wmat                               # n*oh*ow, c*k*k
        gcols = gcols.reshape(n, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
        gx = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i + s * oh:s, j:j + s * ow:s] += gcols[:, :, i, j]
        if p:
            gx = gx[:, :, p:-p, p:-p]
        return np.ascontiguousarray(gx)


class Dense(Layer):
    """Fully connected layer: y = x @ W.T + b."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32,
                 name=""):
        self.name = name or "dense"
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        if rng is None:
            rng = np.random.default_rng()
        self.weight = orthogonal((self.out_features, self.in_features), rng,
                                 dtype=dtype)
        self.bias = np.zeros(self.out_features, dtype=dtype)
        self.grad_weight = None
        self.grad_bias = None
        self._cache = None

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def grads(self):
        return [("weight", self.grad_weight), ("bias", self.grad_bias)]

    def astype(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)
        return self

    def out_shape(self, in_shape):
        self._require(len(in_shape) == 1,
                      f"expects flat (features,) input, got {in_shape}")
        self._require(in_shape[0] == self.in_features,
                      f"expects {self.in_features} features, got {in_shape[0]}")
        return (self.out_features,)

    def forward(self, x, train=False, rng=None):
        self._cache = x
        return x @ self.weight.T + self.bias

    def backward(self, grad_out):
        x = self._cache
        self.grad_weight = grad_out.T @ x
        self.grad_bias = grad_out.sum(axis=0)
        return grad_out @ self.weight


class MaxPool2d(Layer):
    """Max pooling with floor semantics and no padding.

    Argmax indices are cached on forward; the backward pass routes each
    output gradient to exactly one input element (first max wins on ties).
    """

    def __init__(self, window=3, stride=2, name=""):
        self.name = name or "maxpool"
        self._require(window >= 1 and stride >= 1, "window/stride must be >= 1")
        self.window = int(window)
        self.stride = int(stride)
        self._cache = None

    def out_shape(self, in_shape):
        self._require(len(in_shape) == 3, f"expects (c,h,w) input, got {in_shape}")
        c, h, w = in_shape
        oh = (h - self.window) // self.stride + 1
        ow = (w - self.window) // self.stride + 1
        self._require(oh >= 1 and ow >= 1,
                      f"window {self.window} does not fit {h}x{w} input")
        return (c, oh, ow)

    def forward(self, x, train=False, rng=None):
        k, s = self.window, self.stride
        n, c, h, w = x.shape
        _, oh, ow = self.out_shape((c, h, w))
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s].reshape(n, c, oh, ow, k * k)
        arg = win.argmax(axis=-1)
        out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        self._cache = (arg, x.shape, oh, ow)
        return np.ascontiguousarray(out)

    def backward(self, grad_out):
        arg, x_shape, oh, ow = self._cache
        n, c, h, w = x_shape
        k, s = self.window, self.stride
        gx = np.zeros(x_shape, dtype=grad_out.dtype)
        ni, ci, oi, oj = np.indices((n, c, oh, ow), sparse=False)
        rows = oi * s + arg // k
        cols = oj * s + arg % k
        np.add.at(gx, (ni, ci, rows, cols), grad_out)
        return gx


class LeakyReLU(Layer):
    """max(x, slope*x); x >= 0 passes through unchanged."""

    def __init__(self, slope=0.01, name=""):
        self.name = name or "leakyrelu"
        self.slope = float(slope)
        self._cache = None

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        neg = x < 0
        self._cache = neg
        return np.where(neg, self.slope * x, x)

    def backward(self, grad_out):
        neg = self._cache
        return np.where(neg, self.slope * grad_out, grad_out)


class ReLU(LeakyReLU):
    """LeakyReLU with slope 0."""

    def __init__(self, name=""):
        super().__init__(slope=0.0, name=name or "relu")


class Dropout(Layer):
    """Inverted dropout: kept activations are scaled by 1/(1-p) at train
    time so inference is a plain identity."""

    def __init__(self, p=0.5, name=""):
        self.name = name or "dropout"
        self._require(0.0 <= p < 1.0, f"p must be in [0, 1), got {p}")
        self.p = float(p)
        self._cache = None

    def out_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0.0:
            self._cache = None
            return x
        if rng is None:
            raise ConfigurationError(
                f"{self.name}: training forward needs an rng for the mask")
        keep = rng.random(x.shape) >= self.p
        scale = 1.0 / (1.0 - self.p)
        self._cache = (keep, scale)
        return np.where(keep, x * scale, 0.0).astype(x.dtype, copy=False)

    def backward(self, grad_out):
        if self._cache is None:
            return grad_out
        keep, scale = self._cache
        return np.where(keep, grad_out * scale, 0.0).astype(grad_out.dtype,
                                                            copy=False)


class Maxout(Layer):
    """Max over disjoint groups of ``group`` consecutive units.

    (n, u) -> (n, u/group). Gradient flows only to the argmax element of each
    group (first max wins on ties).
    """

    def __init__(self, group=2, name=""):
        self.name = name or "maxout"
        self._require(group >= 2, f"group must be >= 2, got {group}")
        self.group = int(group)
        self._cache = None

    def out_shape(self, in_shape):
        self._require(len(in_shape) == 1,
                      f"expects flat (features,) input, got {in_shape}")
        u = in_shape[0]
        self._require(u % self.group == 0,
                      f"{u} units not divisible by group {self.group}")
        return (u // self.group,)

    def forward(self, x, train=False, rng=None):
        n, u = x.shape
        self._require(u % self.group == 0,
                      f"{u} units not divisible by group {self.group}")
        g = x.reshape(n, u // self.group, self.group)
        arg = g.argmax(axis=-1)
        out = np.take_along_axis(g, arg[..., None], axis=-1)[..., 0]
        self._cache = (arg, u)
        return np.ascontiguousarray(out)

    def backward(self, grad_out):
        arg, u = self._cache
        n = grad_out.shape[0]
        gx = np.zeros((n, u // self.group, self.group), dtype=grad_out.dtype)
        np.put_along_axis(gx, arg[..., None], grad_out[..., None], axis=-1)
        return gx.reshape(n, u)


class Flatten(Layer):
    """(n, c, h, w) -> (n, c*h*w), row-major."""

    def __init__(self, name=""):
        self.name = name or "flatten"
        self._cache = None

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, rng=None):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._cache)
