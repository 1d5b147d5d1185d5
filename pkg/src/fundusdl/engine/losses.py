"""Training objectives."""

import numpy as np

__all__ = ["mse_loss"]


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient with respect to ``pred``.

    Returns (loss, grad). The mean runs over every element, so for the
    (n, 1) regression head the gradient is 2*(pred-target)/n.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype, copy=False)
