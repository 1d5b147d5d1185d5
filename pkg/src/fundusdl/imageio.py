"""PNG/JPEG load and save. The only module that touches Pillow."""

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import UnusableImageError

__all__ = ["load_image", "save_image"]


def load_image(path) -> np.ndarray:
    """Read an image file as (H, W, 3) uint8 RGB.

    Raises UnusableImageError (reason 'read_error') when the file is missing
    or not decodable, so batch preprocessing can log and move on.
    """
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise UnusableImageError("read_error", f"{path}: {exc}") from exc


def save_image(array: np.ndarray, path) -> None:
    """Write (H, W, 3) uint8 RGB as PNG (or whatever the suffix says)."""
    if array.dtype != np.uint8 or array.ndim != 3 or array.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) uint8, got {array.dtype} {array.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array, mode="RGB").save(path)
