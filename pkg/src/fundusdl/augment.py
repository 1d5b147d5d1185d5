"""Seeded augmentation and the per-grade class-balancing plan.

Geometric augmentation composes flips, rotation, shear, zoom, and
translation into a single affine resampling pass (one interpolation, no blur
accumulation), followed by a center crop and a resize back to the original
side. Color jitter shifts RGB along the principal components of the
training set's pixel covariance.

Every copy's parameters come from an RNG derived from (master seed, image
id, copy index), so the corpus is byte-identical across runs and worker
counts.
"""

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError
from .imageio import load_image, save_image
from .interp import affine_sample, bilinear_resize
from .manifest import (GRADES, DatasetManifest, save_manifest, split_dataset)
from .rng import derive_rng

__all__ = ["AugmentParams", "AugmentRanges", "AugmentPlan", "ColorStats",
           "ChannelStats", "sample_params", "apply_augment", "color_pca",
           "build_plan", "build_plan_from_counts", "compute_channel_stats",
           "standardize", "augment_corpus", "load_augmented_manifest",
           "DEFAULT_MULTIPLIERS", "identity_params"]

DEFAULT_MULTIPLIERS = (0, 11, 4, 27, 35)


@dataclass(frozen=True)
class AugmentRanges:
    """Sampling ranges. Defaults match the full-scale recipe; small-image
    runs may narrow translate_max so the fundus stays in frame."""
    rotation_max: float = 360.0
    shear_max: float = 20.0
    zoom_max: float = 1.3
    crop_min: float = 0.85
    crop_max: float = 0.95
    translate_max: float = 25.0
    alpha_std: float = 0.1


DEFAULT_RANGES = AugmentRanges()


@dataclass(frozen=True)
class AugmentParams:
    rotation_deg: float
    shear_deg: float
    flip_h: bool
    flip_v: bool
    zoom: float
    crop_fraction: float
    translate_px: tuple
    color_alpha: tuple

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "AugmentParams":
        d = json.loads(text)
        d["translate_px"] = tuple(d["translate_px"])
        d["color_alpha"] = tuple(d["color_alpha"])
        return cls(**d)


def identity_params() -> AugmentParams:
    return AugmentParams(rotation_deg=0.0, shear_deg=0.0, flip_h=False,
                         flip_v=False, zoom=1.0, crop_fraction=1.0,
                         translate_px=(0.0, 0.0), color_alpha=(0.0, 0.0, 0.0))


def sample_params(rng: np.random.Generator,
                  ranges: AugmentRanges = DEFAULT_RANGES) -> AugmentParams:
    """Draw one parameter set; uniform fields, Gaussian color alphas."""
    return AugmentParams(
        rotation_deg=float(rng.uniform(0.0, ranges.rotation_max)),
        shear_deg=float(rng.uniform(-ranges.shear_max, ranges.shear_max)),
        flip_h=bool(rng.integers(0, 2)),
        flip_v=bool(rng.integers(0, 2)),
        zoom=float(rng.uniform(1.0 / ranges.zoom_max, ranges.zoom_max)),
        crop_fraction=float(rng.uniform(ranges.crop_min, ranges.crop_max)),
        translate_px=(float(rng.uniform(-ranges.translate_max,
                                        ranges.translate_max)),
                      float(rng.uniform(-ranges.translate_max,
                                        ranges.translate_max))),
        color_alpha=tuple(float(a) for a in rng.normal(0.0, ranges.alpha_std,
                                                       size=3)),
    )


@dataclass(frozen=True)
class ColorStats:
    """RGB principal components on the unit (0-1) scale."""
    eigvecs: tuple          # 3x3, columns are eigenvectors
    eigvals: tuple          # descending
    enabled: bool = True

    def shift(self, alpha) -> np.ndarray:
        """Additive RGB shift on the 0-255 scale for the given alphas."""
        if not self.enabled:
            return np.zeros(3)
        v = np.asarray(self.eigvecs, dtype=np.float64)
        lam = np.asarray(self.eigvals, dtype=np.float64)
        return 255.0 * (v @ (lam * np.asarray(alpha, dtype=np.float64)))


@dataclass(frozen=True)
class ChannelStats:
    mean: tuple   # per channel, 0-255 scale
    std: tuple


def _affine_inverse_rc(params: AugmentParams, size: int):
    """Inverse-map (matrix, offset) in (row, col) coordinates for sampling."""
    theta = math.radians(params.rotation_deg)
    phi = math.radians(params.shear_deg)
    fl = np.diag([-1.0 if params.flip_h else 1.0,
                  -1.0 if params.flip_v else 1.0])
    rot = np.array([[math.cos(theta), -math.sin(theta)],
                    [math.sin(theta), math.cos(theta)]])
    sh = np.array([[1.0, math.tan(phi)], [0.0, 1.0]])
    zm = np.diag([params.zoom, params.zoom])
    fwd = zm @ sh @ rot @ fl                      # acts on (x, y)
    inv = np.linalg.inv(fwd)
    c = np.array([(size - 1) / 2.0, (size - 1) / 2.0])
    t = np.asarray(params.translate_px, dtype=np.float64)
    offset_xy = c - inv @ (c + t)
    perm = np.array([[0.0, 1.0], [1.0, 0.0]])
    return perm @ inv @ perm, perm @ offset_xy


def _is_identity_affine(params: AugmentParams) -> bool:
    return (params.rotation_deg == 0.0 and params.shear_deg == 0.0
            and not params.flip_h and not params.flip_v
            and params.zoom == 1.0 and params.translate_px == (0.0, 0.0))


def apply_augment(image: np.ndarray, params: AugmentParams,
                  color_stats: ColorStats = None) -> np.ndarray:
    """Augment one square (S, S, 3) uint8 image; output has the same shape."""
    h, w = image.shape[:2]
    if h != w:
        raise ConfigurationError(f"augmentation expects square input, got {h}x{w}")
    img = image.astype(np.float64)
    if not _is_identity_affine(params):
        matrix, offset = _affine_inverse_rc(params, h)
        img = affine_sample(img, matrix, offset)
    side = int(round(h * params.crop_fraction))
    if side != h:
        start = (h - side) // 2
        img = img[start:start + side, start:start + side]
        img = bilinear_resize(img, h, h)
    if color_stats is not None and any(params.color_alpha):
        img = img + color_stats.shift(params.color_alpha)
    return np.rint(np.clip(img, 0.0, 255.0)).astype(np.uint8)


def color_pca(pixels: np.ndarray) -> ColorStats:
    """Principal components of an (N, 3) RGB pixel sample.

    Pixels may be uint8 or unit-scale floats; computation happens on the
    0-1 scale. A near-singular covariance (grayscale data) disables jitter
    instead of producing garbage directions.
    """
    if pixels.ndim != 2 or pixels.shape[1] != 3:
        raise ConfigurationError(f"expected (n, 3) pixels, got {pixels.shape}")
    if pixels.shape[0] < 10_000:
        raise ConfigurationError(
            f"color PCA needs >= 10000 pixels, got {pixels.shape[0]}")
    data = pixels.astype(np.float64)
    if data.max() > 1.5:
        data = data / 255.0
    cov = np.cov(data, rowvar=False)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    # Deterministic sign: largest-magnitude component of each vector positive.
    for j in range(3):
        k = np.argmax(np.abs(vecs[:, j]))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    enabled = bool(np.isfinite(vals).all() and vals[0] > 0
                   and vals[2] / vals[0] > 1e-10)
    return ColorStats(eigvecs=tuple(map(tuple, vecs)),
                      eigvals=tuple(vals), enabled=enabled)


@dataclass(frozen=True)
class AugmentPlan:
    validation_per_class: int
    multipliers: dict        # grade -> extra copies per training image
    train_counts: dict       # grade -> training images after holdout

    @property
    def expected_totals(self) -> dict:
        return {g: self.train_counts[g] * (self.multipliers[g] + 1)
                for g in self.train_counts}


def build_plan_from_counts(raw_counts: dict, validation_per_class: int = 200,
                           multipliers=DEFAULT_MULTIPLIERS) -> AugmentPlan:
    """Plan arithmetic from raw per-grade counts."""
    mult = {g: int(multipliers[g]) for g in GRADES}
    train = {}
    for g in GRADES:
        raw = int(raw_counts.get(g, 0))
        if raw < validation_per_class:
            raise ConfigurationError(
                f"grade {g} has {raw} images, fewer than "
                f"validation_per_class={validation_per_class}")
        train[g] = raw - validation_per_class
    return AugmentPlan(validation_per_class=validation_per_class,
                       multipliers=mult, train_counts=train)


def build_plan(manifest: DatasetManifest, validation_per_class: int = 200,
               multipliers=DEFAULT_MULTIPLIERS) -> AugmentPlan:
    for row in manifest:
        if row.grade < 0:
            raise ConfigurationError(
                f"unlabeled row {row.image_path!r} cannot join an "
                f"augmentation plan")
    counts = {g: len(rows) for g, rows in manifest.by_grade().items()}
    return build_plan_from_counts(counts, validation_per_class, multipliers)


def compute_channel_stats(moment_sums) -> ChannelStats:
    """Finalize per-channel stats from (count, sum, sumsq) accumulators."""
    count, total, sumsq = moment_sums
    if count == 0:
        raise ConfigurationError("no pixels to compute channel stats from")
    mean = total / count
    var = sumsq / count - mean ** 2
    if np.any(var <= 0):
        raise ConfigurationError(
            f"degenerate channel variance {var}; corpus is constant")
    return ChannelStats(mean=tuple(mean), std=tuple(np.sqrt(var)))


def standardize(batch: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """(x - mean_c) / std_c on an (N, 3, H, W) float batch."""
    mean = np.asarray(stats.mean, dtype=batch.dtype).reshape(1, 3, 1, 1)
    std = np.asarray(stats.std, dtype=batch.dtype).reshape(1, 3, 1, 1)
    return (batch - mean) / std


def _pixel_sample(image: np.ndarray, rng: np.random.Generator,
                  per_image: int) -> np.ndarray:
    """Sample fundus (non-black) pixels from one image."""
    flat = image.reshape(-1, 3)
    lit = flat[flat.any(axis=1)]
    if len(lit) == 0:
        return np.empty((0, 3), dtype=np.uint8)
    idx = rng.integers(0, len(lit), size=min(per_image, len(lit)))
    return lit[idx]


def _augment_one(args):
    """Generate all copies for one training image. Returns manifest rows and
    channel-moment partial sums."""
    row, out_dir, seed, multiplier, ranges, color_stats = args
    image = load_image(row.image_path)
    records = []
    count = 0
    total = np.zeros(3)
    sumsq = np.zeros(3)
    for copy in range(multiplier + 1):
        if copy == 0:
            params = identity_params()
            out = image
        else:
            rng = derive_rng(seed, "augment", row.image_id, copy)
            params = sample_params(rng, ranges)
            out = apply_augment(image, params, color_stats)
        rel_path = f"images/{row.image_id}_a{copy:03d}.png"
        save_image(out, Path(out_dir) / rel_path)
        # Relative paths keep the corpus relocatable and its manifest
        # byte-stable across output directories.
        records.append((rel_path, row.image_path, row.grade, copy,
                        params.to_json()))
        pixels = out.reshape(-1, 3).astype(np.float64)
        count += pixels.shape[0]
        total += pixels.sum(axis=0)
        sumsq += (pixels ** 2).sum(axis=0)
    return records, (count, total, sumsq)


AUGMENTED_HEADER = ["augmented_path", "source_path", "grade", "copy_index",
                    "params"]


def augment_corpus(manifest: DatasetManifest, out_dir, seed: int,
                   validation_per_class: int = 200,
                   multipliers=DEFAULT_MULTIPLIERS,
                   ranges: AugmentRanges = DEFAULT_RANGES,
                   workers: int = 1):
    """Run the full augmentation stage.

    Splits the manifest (patient-disjoint, seeded), fits color PCA on
    training pixels, pre-generates every copy per the plan, and writes:
    images/, augmented_manifest.csv, validation_manifest.csv, stats.json.
    Returns (plan, train_manifest, val_manifest, channel_stats).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    plan = build_plan(manifest, validation_per_class, multipliers)
    train, val = split_dataset(manifest, validation_per_class, seed)

    samples = []
    for row in train:
        rng = derive_rng(seed, "pca", row.image_id)
        samples.append(_pixel_sample(load_image(row.image_path), rng,
                                     per_image=max(1, 40_000 // len(train))))
    pixels = np.concatenate(samples, axis=0)
    if len(pixels) < 10_000:
        # Tiny corpora: resample with replacement to meet the estimator's floor.
        reps = int(np.ceil(10_000 / max(len(pixels), 1)))
        pixels = np.concatenate([pixels] * reps, axis=0)
    color_stats = color_pca(pixels)

    jobs = [(row, out_dir, seed, plan.multipliers[row.grade], ranges,
             color_stats) for row in train]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_augment_one, jobs, chunksize=1))
    else:
        results = [_augment_one(j) for j in jobs]

    count, total, sumsq = 0, np.zeros(3), np.zeros(3)
    with open(out_dir / "augmented_manifest.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AUGMENTED_HEADER)
        for records, (c, t, s) in results:
            writer.writerows(records)
            count += c
            total += t
            sumsq += s
    channel_stats = compute_channel_stats((count, total, sumsq))

    save_manifest(val, out_dir / "validation_manifest.csv")
    stats_payload = {
        "channel_mean": list(channel_stats.mean),
        "channel_std": list(channel_stats.std),
        "color_eigvecs": [list(r) for r in color_stats.eigvecs],
        "color_eigvals": list(color_stats.eigvals),
        "color_enabled": color_stats.enabled,
    }
    with open(out_dir / "stats.json", "w") as fh:
        json.dump(stats_payload, fh, indent=2, sort_keys=True)
    return plan, train, val, channel_stats


def load_stats(path):
    """Read stats.json back as (ChannelStats, ColorStats)."""
    with open(path) as fh:
        d = json.load(fh)
    channel = ChannelStats(mean=tuple(d["channel_mean"]),
                           std=tuple(d["channel_std"]))
    color = ColorStats(eigvecs=tuple(map(tuple, d["color_eigvecs"])),
                       eigvals=tuple(d["color_eigvals"]),
                       enabled=bool(d["color_enabled"]))
    return channel, color


def load_augmented_manifest(path):
    """Rows of (augmented_path, source_path, grade, copy_index, AugmentParams).

    Stored augmented paths are relative to the manifest's directory; this
    resolves them to absolute paths.
    """
    base = Path(path).parent
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != AUGMENTED_HEADER:
            raise DataError(
                f"{path}: expected header {AUGMENTED_HEADER}, got {header}")
        for rec in reader:
            rows.append((str(base / rec[0]), rec[1], int(rec[2]), int(rec[3]),
                         AugmentParams.from_json(rec[4])))
    return rows
