"""Synthetic fundus-like images for demos, smoke runs, and tests.

Real graded photographs cannot ship with the package. These generators draw
a bright disk on black and encode the grade twice over: the disk's mean
brightness scales with grade (a signal models can read from raw pixels),
and the number of small high-contrast lesion spots scales with grade (a
signal that survives local-contrast normalization, which removes absolute
brightness).
"""

from pathlib import Path

import numpy as np

from .imageio import save_image
from .manifest import DatasetManifest, ManifestRow, save_manifest
from .rng import derive_rng

__all__ = ["make_disk", "make_fundus", "make_dataset"]


def make_disk(size: int, radius: float, value) -> np.ndarray:
    """Uniform disk of ``value`` (scalar or RGB triple) on black, uint8."""
    img = np.zeros((size, size, 3), dtype=np.uint8)
    center = (size - 1) / 2.0
    yy, xx = np.ogrid[:size, :size]
    mask = (yy - center) ** 2 + (xx - center) ** 2 <= radius * radius
    img[mask] = np.asarray(value, dtype=np.uint8)
    return img


def make_fundus(size: int, grade: int, rng: np.random.Generator,
                radius: float = None) -> np.ndarray:
    """Fundus-like disk whose brightness and lesion count encode the grade."""
    if radius is None:
        radius = 0.42 * size
    base = 70 + 28 * grade
    color = np.array([base + 20, base, max(base - 30, 10)], dtype=np.float64)
    img = np.zeros((size, size, 3), dtype=np.float64)
    center = (size - 1) / 2.0
    yy, xx = np.ogrid[:size, :size]
    dist2 = (yy - center) ** 2 + (xx - center) ** 2
    mask = dist2 <= radius * radius
    img[mask] = color

    # A few soft blobs as grade-independent texture.
    for _ in range(3):
        by, bx = rng.uniform(0.3 * size, 0.7 * size, size=2)
        bs = rng.uniform(0.03, 0.08) * size
        amp = rng.uniform(-20.0, 20.0)
        blob = amp * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * bs * bs))
        img += blob[..., None] * mask[..., None]

    # Hard-edged bright spots, 3 per grade step, kept near the center so
    # moderate crops and shifts retain them. Their sharp boundaries carry
    # the grade through high-pass style contrast normalization.
    for _ in range(3 * grade):
        angle = rng.uniform(0.0, 2 * np.pi)
        dist = rng.uniform(0.0, 0.60) * radius
        ly = center + dist * np.sin(angle)
        lx = center + dist * np.cos(angle)
        lr = rng.uniform(0.040, 0.070) * size
        spot = (yy - ly) ** 2 + (xx - lx) ** 2 <= lr * lr
        img[spot & mask] += 65.0

    img += rng.normal(0.0, 2.0, size=img.shape) * mask[..., None]
    return np.clip(img, 0, 255).astype(np.uint8)


def make_dataset(out_dir, counts_per_grade, size: int, seed: int,
                 name: str = "manifest.csv") -> DatasetManifest:
    """Write a synthetic graded dataset and its manifest CSV.

    ``counts_per_grade`` is a dict mapping grade -> image count, or a
    sequence indexed by grade. Every image gets its own patient id, eyes
    alternating left/right.
    """
    if not isinstance(counts_per_grade, dict):
        counts_per_grade = dict(enumerate(counts_per_grade))
    out_dir = Path(out_dir)
    (out_dir / "raw").mkdir(parents=True, exist_ok=True)
    rows = []
    idx = 0
    for grade in sorted(counts_per_grade):
        for _ in range(counts_per_grade[grade]):
            rng = derive_rng(seed, "synthetic", idx)
            img = make_fundus(size, grade, rng)
            path = out_dir / "raw" / f"img{idx:04d}.png"
            save_image(img, path)
            rows.append(ManifestRow(str(path), f"p{idx:04d}",
                                    "left" if idx % 2 == 0 else "right", grade))
            idx += 1
    manifest = DatasetManifest(rows)
    save_manifest(manifest, out_dir / name)
    return manifest
