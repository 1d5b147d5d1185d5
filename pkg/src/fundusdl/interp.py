"""Bilinear resampling primitives shared by preprocessing and augmentation.

Coordinates follow the half-pixel-center convention: output pixel i samples
input position (i + 0.5) * scale - 0.5, so a same-size resize is an exact
identity. Resize clamps to the edge; affine sampling fills out-of-frame
samples with 0 (the preprocessed fundus background).
"""

import numpy as np

__all__ = ["bilinear_resize", "affine_sample"]


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize (H, W, C) float array with bilinear interpolation."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()
    ys = np.clip((np.arange(out_h) + 0.5) * (h / out_h) - 0.5, 0, h - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * (w / out_w) - 0.5, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    a = img[y0[:, None], x0[None, :]]
    b = img[y0[:, None], x1[None, :]]
    c = img[y1[:, None], x0[None, :]]
    d = img[y1[:, None], x1[None, :]]
    return (a * (1 - wy) * (1 - wx) + b * (1 - wy) * wx
            + c * wy * (1 - wx) + d * wy * wx)


def affine_sample(img: np.ndarray, matrix: np.ndarray, offset: np.ndarray):
    """Sample (H, W, C) through an inverse affine map, zero outside the frame.

    For output pixel (y, x), the source position is matrix @ (y, x) + offset
    in (row, col) order. Output has the input's shape.
    """
    h, w = img.shape[:2]
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    ys = matrix[0, 0] * yy + matrix[0, 1] * xx + offset[0]
    xs = matrix[1, 0] * yy + matrix[1, 1] * xx + offset[1]

    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = ys - y0
    wx = xs - x0
    out = np.zeros(img.shape, dtype=np.float64)
    for dy in (0, 1):
        for dx in (0, 1):
            yn = y0 + dy
            xn = x0 + dx
            valid = (yn >= 0) & (yn < h) & (xn >= 0) & (xn < w)
            weight = (wy if dy else 1.0 - wy) * (wx if dx else 1.0 - wx)
            vals = img[np.clip(yn, 0, h - 1), np.clip(xn, 0, w - 1)]
            out += np.where(valid, weight, 0.0)[..., None] * vals
    return out
