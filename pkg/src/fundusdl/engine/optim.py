"""Optimizers.

Both optimizers fold L2 weight decay into the gradient before any momentum
bookkeeping (g' = g + weight_decay * param) and update parameter arrays in
place. A non-finite gradient raises TrainingError instead of silently
corrupting the weights.

State is keyed by parameter name so it can ride along in checkpoints and make
a save/resume cycle bit-identical to an uninterrupted run.
"""

import numpy as np

from ..errors import TrainingError

__all__ = ["SgdNesterov", "Adam"]


def _check_finite(name, grad):
    if grad is None:
        raise TrainingError(f"no gradient for parameter '{name}'")
    if not np.all(np.isfinite(grad)):
        raise TrainingError(f"non-finite gradient for parameter '{name}'")


class SgdNesterov:
    """SGD with Nesterov momentum.

    Per step, with g' = grad + weight_decay*param:

        v     <- momentum * v - lr * g'
        param <- param + momentum * v - lr * g'

    so the parameter moves along the look-ahead velocity.
    """

    def __init__(self, params, momentum=0.9, weight_decay=0.0):
        self.params = list(params)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = {name: np.zeros_like(p) for name, p in self.params}

    def step(self, grads, lr):
        grads = dict(grads)
        m, wd = self.momentum, self.weight_decay
        for name, p in self.params:
            g = grads.get(name)
            _check_finite(name, g)
            gp = g + wd * p if wd else g
            v = self.velocity[name]
            v *= m
            v -= lr * gp
            p += m * v - lr * gp

    def state_arrays(self):
        return [(f"velocity.{name}", v) for name, v in self.velocity.items()]

    def load_state(self, arrays):
        for name, v in self.velocity.items():
            key = f"velocity.{name}"
            if key not in arrays:
                raise TrainingError(f"resume state missing '{key}'")
            if arrays[key].shape != v.shape:
                raise TrainingError(f"resume state shape mismatch for '{key}'")
            v[...] = arrays[key]


class Adam:
    """Adam with bias correction.

    Weight decay enters the gradient before the moment updates, matching the
    SGD path rather than decoupled decay.
    """

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.m = {name: np.zeros_like(p) for name, p in self.params}
        self.v = {name: np.zeros_like(p) for name, p in self.params}
        self.t = 0

    def step(self, grads, lr):
        grads = dict(grads)
        self.t += 1
        b1, b2, wd = self.beta1, self.beta2, self.weight_decay
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in self.params:
            g = grads.get(name)
            _check_finite(name, g)
            gp = g + wd * p if wd else g
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * gp
            v *= b2
            v += (1.0 - b2) * gp * gp
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self):
        out = [(f"adam_m.{name}", m) for name, m in self.m.items()]
        out += [(f"adam_v.{name}", v) for name, v in self.v.items()]
        out.append(("adam_t", np.array([self.t], dtype=np.float32)))
        return out

    def load_state(self, arrays):
        for prefix, slots in (("adam_m", self.m), ("adam_v", self.v)):
            for name, s in slots.items():
                key = f"{prefix}.{name}"
                if key not in arrays:
                    raise TrainingError(f"resume state missing '{key}'")
                s[...] = arrays[key]
        if "adam_t" not in arrays:
            raise TrainingError("resume state missing 'adam_t'")
        self.t = int(arrays["adam_t"][0])
