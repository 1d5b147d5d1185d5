"""Weight initialization."""

import numpy as np
from scipy import linalg

__all__ = ["orthogonal"]


def orthogonal(shape: tuple, rng: np.random.Generator, dtype=np.float32) -> np.ndarray:
    """Orthogonal weight matrix for a tensor of the given shape.

    The tensor is treated as a matrix of ``shape[0]`` rows by the product of
    the remaining dims. Whichever side is shorter comes out orthonormal, so
    the singular values of the flattened matrix are all 1.
    """
    if len(shape) < 2:
        raise ValueError("orthogonal init needs at least a 2-d shape")
    rows = shape[0]
    cols = int(np.prod(shape[1:]))
    flat_shape = (cols, rows) if rows < cols else (rows, cols)
    # Draw and factor in the target dtype; a float64 detour would double
    # the QR cost for float32 weights without changing any property.
    a = rng.standard_normal(flat_shape, dtype=dtype)
    q, r = linalg.qr(a, mode="economic", overwrite_a=True,
                     check_finite=False)
    # Sign fix makes the distribution Haar-uniform instead of QR-biased.
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(q.reshape(shape), dtype=dtype)
