"""Sequential network container."""

import numpy as np

from ..errors import ConfigurationError
from .layers import Flatten, MaxPool2d

__all__ = ["Network"]


class Network:
    """An ordered stack of layers with whole-net forward/backward.

    Layer parameter names are ``<layer.name>.<suffix>`` and layer names are
    unique, so parameters, gradients, and optimizer slots all join on the
    same keys.
    """

    def __init__(self, layers, input_shape, config=None):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.config = config
        seen = set()
        for layer in self.layers:
            if not layer.name:
                raise ConfigurationError("every layer needs a name")
            if layer.name in seen:
                raise ConfigurationError(f"duplicate layer name '{layer.name}'")
            seen.add(layer.name)
        self.shapes = self._validate_shapes()

    def _validate_shapes(self):
        """Walk the shape algebra once; raises naming the offending layer."""
        shapes = [self.input_shape]
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
            shapes.append(tuple(shape))
        return shapes

    def forward(self, x, train=False, rng=None):
        if tuple(x.shape[1:]) != self.input_shape:
            raise ConfigurationError(
                f"input shape {tuple(x.shape[1:])} does not match network "
                f"input {self.input_shape}")
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def feature_forward(self, x):
        """Inference forward through the last max-pool, flattened per sample."""
        last = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, MaxPool2d):
                last = i
        if last is None:
            raise ConfigurationError("network has no max-pool layer")
        for layer in self.layers[:last + 1]:
            x = layer.forward(x, train=False)
        return x.reshape(x.shape[0], -1)

    def parameters(self):
        out = []
        for layer in self.layers:
            for suffix, p in layer.params():
                out.append((f"{layer.name}.{suffix}", p))
        return out

    def gradients(self):
        out = []
        for layer in self.layers:
            for suffix, g in layer.grads():
                out.append((f"{layer.name}.{suffix}", g))
        return out

    def parameter_count(self):
        return int(sum(p.size for _, p in self.parameters()))

    def set_parameters(self, arrays):
        """Overwrite parameters from a {name: array} mapping (shape-checked)."""
        for name, p in self.parameters():
            if name not in arrays:
                raise ConfigurationError(f"missing parameter '{name}'")
            a = arrays[name]
            if tuple(a.shape) != tuple(p.shape):
                raise ConfigurationError(
                    f"parameter '{name}' has shape {a.shape}, expected {p.shape}")
            p[...] = a
        return self

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def find(self, name):
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    @property
    def feature_dim(self):
        """Width of the flattened last max-pool output."""
        last = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, MaxPool2d):
                last = i
        if last is None:
            raise ConfigurationError("network has no max-pool layer")
        return int(np.prod(self.shapes[last + 1]))
