"""Binary feature store round-trips and corruption handling."""

import numpy as np
import pytest

from fundusdl.errors import DataError
from fundusdl.features import read_features, write_features


def sample_rows(n=5, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    return [(f"img{i:03d}", rng.normal(0, 1, size=dim).astype(np.float32),
             float(i % 5)) for i in range(n)]


class TestFeatureStore:
    def test_roundtrip_bit_exact(self, tmp_path):
        path = tmp_path / "features.bin"
        rows = sample_rows()
        write_features(path, rows, dim=8)
        dim, loaded = read_features(path)
        assert dim == 8
        assert len(loaded) == len(rows)
        for (id_a, vec_a, t_a), (id_b, vec_b, t_b) in zip(rows, loaded):
            assert id_a == id_b
            np.testing.assert_array_equal(vec_a, vec_b)
            assert np.float32(t_a) == np.float32(t_b)

    def test_empty_store(self, tmp_path):
        path = tmp_path / "features.bin"
        write_features(path, [], dim=16)
        dim, loaded = read_features(path)
        assert dim == 16 and loaded == []

    def test_dim_mismatch_rejected(self, tmp_path):
        rows = [("a", np.zeros(4, dtype=np.float32), 0.0)]
        with pytest.raises(DataError, match="shape"):
            write_features(tmp_path / "f.bin", rows, dim=8)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "f.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(DataError, match="magic"):
            read_features(path)

    def test_truncation_rejected(self, tmp_path):
        path = tmp_path / "f.bin"
        write_features(path, sample_rows(), dim=8)
        path.write_bytes(path.read_bytes()[:-6])
        with pytest.raises(DataError, match="truncated"):
            read_features(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "f.bin"
        rows = [("same", np.zeros(2, dtype=np.float32), 0.0),
                ("same", np.ones(2, dtype=np.float32), 1.0)]
        write_features(path, rows, dim=2)
        with pytest.raises(DataError, match="duplicate"):
            read_features(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataError, match="no such"):
            read_features(tmp_path / "absent.bin")
