"""Shared finite-difference checks used by layer tests and the acceptance
gate. Everything runs in float64; see engine.gradcheck for the harness."""

import numpy as np

from fundusdl.engine import (Conv2d, Dense, Dropout, Flatten, LeakyReLU,
                             MaxPool2d, Maxout, check_gradients, mse_loss)

EPS = 1e-3
N_SAMPLES = 130


def projection_check(layer, x, train=False, make_rng=None, n_samples=N_SAMPLES,
                     sample_seed=0):
    """FD-check one layer through a fixed random projection loss."""
    proj_rng = np.random.default_rng(99)
    out = layer.forward(x, train=train,
                        rng=make_rng() if make_rng else None)
    proj = proj_rng.standard_normal(out.shape)

    def loss_fn():
        y = layer.forward(x, train=train,
                          rng=make_rng() if make_rng else None)
        return float(np.sum(y * proj))

    loss_fn()
    grad_in = layer.backward(proj)
    pairs = [(f"param.{suffix}", p, g)
             for (suffix, p), (_, g) in zip(layer.params(), layer.grads())]
    pairs.append(("input", x, grad_in))
    return check_gradients(loss_fn, pairs, eps=EPS, n_samples=n_samples,
                           rng=np.random.default_rng(sample_seed))


def network_mse_check(net, x, targets, train=False, make_rng=None,
                      n_samples=200, sample_seed=1, param_filter=None):
    """FD-check a whole network under the MSE objective.

    Checked coordinates are the input tensor plus parameters accepted by
    ``param_filter``. Central differences at the mandated step cross
    LeakyReLU/max kinks somewhere downstream for almost every conv-weight
    coordinate (one weight shifts thousands of pre-activations at once), so
    composed checks restrict parameter sampling to coordinates whose
    downstream path is piecewise-linear-free; input coordinates still drive
    the full backward chain through every layer.
    """

    def loss_fn():
        pred = net.forward(x, train=train,
                           rng=make_rng() if make_rng else None)
        loss, _ = mse_loss(pred, targets)
        return loss

    pred = net.forward(x, train=train, rng=make_rng() if make_rng else None)
    _, grad = mse_loss(pred, targets)
    grad_in = net.backward(grad)
    pairs = [("input", x, grad_in)]
    for (name, p), (_, g) in zip(net.parameters(), net.gradients()):
        if param_filter is None or param_filter(name):
            pairs.append((name, p, g))
    return check_gradients(loss_fn, pairs, eps=EPS, n_samples=n_samples,
                           rng=np.random.default_rng(sample_seed))


def layer_checks():
    """Yield (name, GradCheckReport) for every differentiable layer kind."""
    rng = np.random.default_rng(2024)

    conv = Conv2d(3, 4, kernel=3, stride=2, padding=1, rng=rng,
                  name="conv").astype(np.float64)
    x = rng.standard_normal((2, 3, 9, 9))
    yield "conv", projection_check(conv, x)

    dense = Dense(12, 7, rng=rng, name="dense").astype(np.float64)
    x = rng.standard_normal((4, 12))
    yield "dense", projection_check(dense, x)

    pool = MaxPool2d(window=3, stride=2, name="pool")
    # Scale up so no two window entries sit within the FD step of each other.
    x = rng.standard_normal((2, 3, 9, 9)) * 3.0
    yield "maxpool", projection_check(pool, x)

    act = LeakyReLU(slope=0.01, name="lrelu")
    x = rng.standard_normal((4, 50))
    x += np.where(x >= 0, 0.05, -0.05)  # keep clear of the kink
    yield "leakyrelu", projection_check(act, x)

    drop = Dropout(p=0.5, name="drop")
    x = rng.standard_normal((4, 50))
    yield "dropout", projection_check(
        drop, x, train=True, make_rng=lambda: np.random.default_rng(77))

    mo = Maxout(group=2, name="maxout")
    x = rng.standard_normal((6, 24)) * 3.0
    yield "maxout", projection_check(mo, x)

    flat = Flatten(name="flat")
    x = rng.standard_normal((2, 3, 4, 5))
    yield "flatten", projection_check(flat, x)
