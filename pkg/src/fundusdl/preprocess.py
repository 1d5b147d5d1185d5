"""Fundus photograph standardization.

Raw photographs vary wildly in lighting and scale. The pipeline rescales
every eye to a common fundus radius, subtracts the local average color
(mapping it to mid-gray so vessels and lesions stand out), clips the rim
where boundary effects live, and emits fixed-size squares:

    1. estimate the fundus radius from the center row,
    2. rescale so the radius equals target_radius,
    3. out = 4*I - 4*blur(I, sigma=target_radius/blur_divisor) + gray_level,
    4. zero everything beyond clip_fraction of the radius,
    5. center-crop/pad to a 2*target_radius square and resize to output_size.

The circular mask is re-applied in output coordinates after the final
resize, so pixels beyond clip_fraction * (output_size/2) are exactly zero
rather than interpolation residue.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigurationError, UnusableImageError
from .imageio import load_image, save_image
from .interp import bilinear_resize
from .manifest import DatasetManifest, ManifestRow, save_manifest

__all__ = ["PreprocessConfig", "estimate_radius", "gaussian_blur",
           "normalize_image", "preprocess_manifest"]

MIN_RADIUS_PX = 16


@dataclass(frozen=True)
class PreprocessConfig:
    target_radius: int = 300
    output_size: int = 512
    gray_level: int = 128
    clip_fraction: float = 0.9
    blur_divisor: float = 30.0

    def __post_init__(self):
        if not (0.0 < self.clip_fraction <= 1.0):
            raise ConfigurationError(
                f"clip_fraction must be in (0, 1], got {self.clip_fraction}")
        if self.target_radius < 1 or self.output_size < 1:
            raise ConfigurationError("target_radius and output_size must be >= 1")
        if self.blur_divisor <= 0:
            raise ConfigurationError("blur_divisor must be > 0")


def estimate_radius(image: np.ndarray) -> float:
    """Fundus radius in pixels, from the brightness of the center row.

    Half the count of center-row pixels whose channel sum exceeds a tenth of
    the row's mean channel sum. Below MIN_RADIUS_PX the frame is considered
    blank or corrupt.
    """
    row = image[image.shape[0] // 2, :, :].astype(np.float64).sum(axis=1)
    radius = float((row > row.mean() / 10.0).sum()) / 2.0
    if radius < MIN_RADIUS_PX:
        raise UnusableImageError(
            "radius_too_small",
            f"estimated radius {radius:.1f}px < {MIN_RADIUS_PX}px")
    return radius


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel half-width ceil(3*sigma), clamp-to-edge."""
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be > 0, got {sigma}")
    half = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma * sigma))
    kernel /= kernel.sum()
    out = image.astype(np.float64, copy=False)
    out = ndimage.correlate1d(out, kernel, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="nearest")
    return out


def _center_crop_pad(img: np.ndarray, side: int) -> np.ndarray:
    """Square crop of the frame center, zero-padded where it overruns."""
    h, w = img.shape[:2]
    out = np.zeros((side, side, img.shape[2]), dtype=img.dtype)
    y0 = (h - side) // 2
    x0 = (w - side) // 2
    src_y0, src_x0 = max(y0, 0), max(x0, 0)
    dst_y0, dst_x0 = max(-y0, 0), max(-x0, 0)
    copy_h = min(h - src_y0, side - dst_y0)
    copy_w = min(w - src_x0, side - dst_x0)
    out[dst_y0:dst_y0 + copy_h, dst_x0:dst_x0 + copy_w] = \
        img[src_y0:src_y0 + copy_h, src_x0:src_x0 + copy_w]
    return out


def _disk_mask(size: int, radius: float) -> np.ndarray:
    center = (size - 1) / 2.0
    yy, xx = np.ogrid[:size, :size]
    return ((yy - center) ** 2 + (xx - center) ** 2) <= radius * radius


def normalize_image(image: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """Standardize one (H, W, 3) uint8 fundus photo per the module pipeline."""
    radius = estimate_radius(image)
    scale = cfg.target_radius / radius
    new_h = max(1, int(round(image.shape[0] * scale)))
    new_w = max(1, int(round(image.shape[1] * scale)))
    img = bilinear_resize(image.astype(np.float64), new_h, new_w)

    blurred = gaussian_blur(img, cfg.target_radius / cfg.blur_divisor)
    img = np.clip(4.0 * img - 4.0 * blurred + cfg.gray_level, 0.0, 255.0)

    mask = _disk_mask_rect(img.shape[0], img.shape[1],
                           cfg.clip_fraction * cfg.target_radius)
    img *= mask[:, :, None]

    img = _center_crop_pad(img, 2 * cfg.target_radius)
    img = bilinear_resize(img, cfg.output_size, cfg.output_size)
    img = np.clip(img, 0.0, 255.0)

    out_mask = _disk_mask(cfg.output_size,
                          cfg.clip_fraction * (cfg.output_size / 2.0))
    img *= out_mask[:, :, None]
    return np.rint(img).astype(np.uint8)


def _disk_mask_rect(h: int, w: int, radius: float) -> np.ndarray:
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.ogrid[:h, :w]
    return ((yy - cy) ** 2 + (xx - cx) ** 2) <= radius * radius


def _process_row(args):
    row, out_dir, cfg = args
    try:
        image = load_image(row.image_path)
        if min(image.shape[:2]) < 32:
            raise UnusableImageError(
                "radius_too_small", f"frame {image.shape[1]}x{image.shape[0]} "
                f"smaller than 32px")
        result = normalize_image(image, cfg)
    except UnusableImageError as exc:
        return row, None, (exc.reason, exc.detail)
    out_path = Path(out_dir) / "images" / f"{row.image_id}.png"
    save_image(result, out_path)
    return row, str(out_path), None


def preprocess_manifest(manifest: DatasetManifest, out_dir,
                        cfg: PreprocessConfig, workers: int = 1):
    """Normalize every manifest image into ``out_dir``.

    Writes images/<id>.png, preprocessed_manifest.csv, and rejected.csv
    (image_path, reason, detail). Per-image jobs are independent, so the
    output bytes do not depend on the worker count. Returns the new manifest
    and the rejection list.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(row, out_dir, cfg) for row in manifest]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_process_row, jobs, chunksize=4))
    else:
        results = [_process_row(j) for j in jobs]

    kept, rejected = [], []
    for row, out_path, failure in results:
        if failure is None:
            kept.append(replace(row, image_path=out_path))
        else:
            rejected.append((row.image_path, failure[0], failure[1]))

    new_manifest = DatasetManifest(kept)
    save_manifest(new_manifest, out_dir / "preprocessed_manifest.csv")
    with open(out_dir / "rejected.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_path", "reason", "detail"])
        writer.writerows(rejected)
    return new_manifest, rejected
