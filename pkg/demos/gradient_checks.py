"""Verify backward passes against finite differences.

Every layer computes its own gradients by hand, so each one is checked
against central differences (f(x+eps) - f(x-eps)) / (2 eps) at sampled
coordinates. The check runs in float64; float32 rounding would swamp the
comparison at eps = 1e-3.
"""

import numpy as np

from fundusdl.engine import Conv2d, Dense, MaxPool2d, check_gradients, mse_loss
from fundusdl.model import build_reduced_network

rng = np.random.default_rng(2024)


def check_layer(layer, x, label):
    # Project the output through a fixed random tensor so the loss is a
    # scalar with a dense, nontrivial gradient everywhere.
    proj = np.random.default_rng(99).standard_normal(
        layer.forward(x).shape)

    def loss_fn():
        return float(np.sum(layer.forward(x) * proj))

    loss_fn()
    grad_in = layer.backward(proj)
    pairs = [(f"param.{name}", p, g)
             for (name, p), (_, g) in zip(layer.params(), layer.grads())]
    pairs.append(("input", x, grad_in))
    report = check_gradients(loss_fn, pairs, eps=1e-3, n_samples=130,
                             rng=np.random.default_rng(0))
    print(f"{label:22s} {report}")
    return report.max_rel_error


print("Layer-by-layer checks (random projection loss):")
conv = Conv2d(3, 4, kernel=3, stride=2, padding=1, rng=rng).astype(np.float64)
check_layer(conv, rng.standard_normal((2, 3, 9, 9)), "Conv2d 3x3 s2 p1")

dense = Dense(12, 5, rng=rng).astype(np.float64)
check_layer(dense, rng.standard_normal((4, 12)), "Dense 12 -> 5")

pool = MaxPool2d(window=3, stride=2)
# Pooling has a kink wherever two window entries tie; well-separated random
# inputs keep every sampled coordinate away from it.
check_layer(pool, rng.standard_normal((2, 3, 9, 9)), "MaxPool 3x3 s2")

# Composed check: the full reduced network under the real MSE objective.
# Input coordinates exercise the chain rule through every layer's backward.
print("\nWhole reduced network (input 32), MSE objective:")
net = build_reduced_network(32, seed=13).astype(np.float64)
x = rng.standard_normal((2, 3, 32, 32))
targets = np.array([[1.0], [3.0]])


def loss_fn():
    loss, _ = mse_loss(net.forward(x), targets)
    return loss


_, grad = mse_loss(net.forward(x), targets)
grad_in = net.backward(grad)
report = check_gradients(loss_fn, [("input", x, grad_in)],
                         eps=1e-3, n_samples=150,
                         rng=np.random.default_rng(1))
print(f"{'composed, 18 layers':22s} {report}")
assert report.max_rel_error < 1e-4
print("\nAll gradients agree with finite differences to better than 1e-4.")
