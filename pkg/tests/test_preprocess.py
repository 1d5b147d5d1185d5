"""Fundus standardization: radius estimation, blur, normalization, batch runs."""

import numpy as np
import pytest

from fundusdl.errors import UnusableImageError
from fundusdl.manifest import DatasetManifest, ManifestRow, load_manifest
from fundusdl.preprocess import (PreprocessConfig, estimate_radius,
                                 gaussian_blur, normalize_image,
                                 preprocess_manifest)
from fundusdl.imageio import save_image
from fundusdl.synthetic import make_disk, make_fundus


def center_distances(size):
    center = (size - 1) / 2.0
    yy, xx = np.ogrid[:size, :size]
    return np.sqrt((yy - center) ** 2 + (xx - center) ** 2)


class TestEstimateRadius:
    def test_centered_disk(self):
        img = make_disk(512, 200, (255, 255, 255))
        assert estimate_radius(img) == pytest.approx(200, abs=2)

    def test_all_black_rejected(self):
        with pytest.raises(UnusableImageError):
            estimate_radius(np.zeros((256, 256, 3), dtype=np.uint8))

    def test_all_white_is_half_width(self):
        img = np.full((256, 512, 3), 255, dtype=np.uint8)
        assert estimate_radius(img) == pytest.approx(256, abs=1)


class TestGaussianBlur:
    def test_constant_preserved(self):
        img = np.full((40, 40, 3), 77.0)
        out = gaussian_blur(img, sigma=2.5)
        np.testing.assert_allclose(out, 77.0, atol=1e-9)

    def test_impulse_center_weight(self):
        img = np.zeros((31, 31, 1))
        img[15, 15, 0] = 1.0
        out = gaussian_blur(img, sigma=1.0)
        assert out[15, 15, 0] == pytest.approx(0.159, abs=2e-3)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)

    def test_shift_equivariant_on_interior(self):
        rng = np.random.default_rng(0)
        img = rng.uniform(0, 255, size=(40, 40, 1))
        blurred = gaussian_blur(img, sigma=1.5)
        shifted = gaussian_blur(np.roll(img, 3, axis=1), sigma=1.5)
        # Compare away from the wrapped/clamped borders.
        np.testing.assert_allclose(shifted[10:-10, 10:-10],
                                   np.roll(blurred, 3, axis=1)[10:-10, 10:-10],
                                   atol=1e-9)


class TestNormalizeImage:
    CFG = PreprocessConfig(target_radius=100, output_size=128)

    def test_output_shape_and_range(self):
        img = make_fundus(256, grade=2, rng=np.random.default_rng(0))
        out = normalize_image(img, self.CFG)
        assert out.shape == (128, 128, 3)
        assert out.dtype == np.uint8

    def test_constant_disk_interior_is_gray(self):
        img = make_disk(256, 100, (120, 120, 120))
        out = normalize_image(img, self.CFG)
        dist = center_distances(128)
        interior = out[dist < 0.70 * 64]
        assert np.abs(interior.astype(int) - 128).max() <= 1

    def test_mask_zeroes_beyond_clip_radius(self):
        img = make_fundus(256, grade=3, rng=np.random.default_rng(1))
        out = normalize_image(img, self.CFG)
        dist = center_distances(128)
        mask_radius = 0.9 * 64
        assert (out[dist > mask_radius + 1] == 0).all()
        inside = out[dist < mask_radius - 1]
        assert (inside.reshape(-1, 3).max(axis=1) > 0).mean() > 0.95

    def test_contrast_blob_survives(self):
        img = make_disk(256, 100, (110, 110, 110)).astype(np.int16)
        img[124:129, 124:129] = 240
        out = normalize_image(np.clip(img, 0, 255).astype(np.uint8), self.CFG)
        center_patch = out[60:68, 60:68].astype(int)
        assert center_patch.max() - 128 > 60

    def test_rescale_idempotent_radius(self):
        # Uniform disk isolates the scale map from the estimator: on
        # re-amplified texture the count-based radius can undercount
        # interior pixels, which is not the property under test.
        cfg = PreprocessConfig(target_radius=100, output_size=256)
        disk = make_disk(300, 126, (120, 120, 120))
        once = normalize_image(disk, cfg)
        r1 = estimate_radius(once)
        twice = normalize_image(once, cfg)
        r2 = estimate_radius(twice)
        assert abs(r2 - r1) / r1 < 0.02


class TestPreprocessManifest:
    def test_batch_with_rejects(self, tmp_path):
        rows = []
        good = make_fundus(200, grade=0, rng=np.random.default_rng(3))
        save_image(good, tmp_path / "good.png")
        rows.append(ManifestRow(str(tmp_path / "good.png"), "p1", "left", 0))
        save_image(np.zeros((128, 128, 3), dtype=np.uint8),
                   tmp_path / "black.png")
        rows.append(ManifestRow(str(tmp_path / "black.png"), "p2", "right", 1))
        rows.append(ManifestRow(str(tmp_path / "missing.png"), "p3", "left", 2))

        cfg = PreprocessConfig(target_radius=64, output_size=64)
        out, rejected = preprocess_manifest(DatasetManifest(rows),
                                            tmp_path / "out", cfg)
        assert len(out) == 1
        assert out.rows[0].image_id == "good"
        reasons = {path: reason for path, reason, _ in rejected}
        assert reasons[str(tmp_path / "black.png")] == "radius_too_small"
        assert reasons[str(tmp_path / "missing.png")] == "read_error"
        assert (tmp_path / "out" / "rejected.csv").exists()
        reloaded = load_manifest(tmp_path / "out" / "preprocessed_manifest.csv")
        assert reloaded.ids() == ["good"]

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        rows = []
        for i in range(3):
            img = make_fundus(160, grade=i, rng=np.random.default_rng(10 + i))
            save_image(img, tmp_path / f"im{i}.png")
            rows.append(ManifestRow(str(tmp_path / f"im{i}.png"), f"p{i}",
                                    "left", i))
        cfg = PreprocessConfig(target_radius=48, output_size=48)
        m1, _ = preprocess_manifest(DatasetManifest(rows), tmp_path / "o1", cfg,
                                    workers=1)
        m2, _ = preprocess_manifest(DatasetManifest(rows), tmp_path / "o2", cfg,
                                    workers=2)
        for r1, r2 in zip(m1, m2):
            b1 = open(r1.image_path, "rb").read()
            b2 = open(r2.image_path, "rb").read()
            assert b1 == b2
