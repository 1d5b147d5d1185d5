"""Command-line interface: every subcommand wired end to end."""

import json

import pytest

from fundusdl.cli import _parse_multipliers, _parse_schedule, main
from fundusdl.errors import ConfigurationError
from fundusdl.manifest import DatasetManifest, ManifestRow, load_manifest, save_manifest
from fundusdl.synthetic import make_dataset, make_fundus
from fundusdl.imageio import save_image

import numpy as np


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cliwork")
    make_dataset(root / "data", (2, 2, 2, 2, 2), size=64, seed=3)
    return root


@pytest.fixture(scope="module")
def preprocessed(work):
    rc = main(["preprocess",
               "--manifest", str(work / "data" / "manifest.csv"),
               "--out", str(work / "pre"),
               "--target-radius", "15", "--output-size", "32"])
    assert rc == 0
    return work / "pre" / "preprocessed_manifest.csv"


@pytest.fixture(scope="module")
def augmented(work, preprocessed):
    rc = main(["--seed", "5", "augment",
               "--manifest", str(preprocessed),
               "--out", str(work / "aug"),
               "--validation-per-class", "1",
               "--multipliers", "0,1,1,2,2",
               "--translate-max", "2"])
    assert rc == 0
    return work / "aug"


@pytest.fixture(scope="module")
def trained(work, augmented):
    rc = main(["--seed", "5", "train",
               "--manifest", str(augmented / "augmented_manifest.csv"),
               "--val-manifest", str(augmented / "validation_manifest.csv"),
               "--stats", str(augmented / "stats.json"),
               "--out", str(work / "train"),
               "--schedule", "3:1e-3",
               "--batch-size", "8", "--weight-decay", "0"])
    assert rc == 0
    return work / "train"


@pytest.fixture(scope="module")
def features(work, preprocessed, augmented, trained):
    out = work / "features.bin"
    rc = main(["--seed", "5", "extract-features",
               "--manifest", str(preprocessed),
               "--checkpoint", str(trained / "best.ckpt"),
               "--stats", str(augmented / "stats.json"),
               "--out", str(out), "--passes", "2",
               "--translate-max", "2"])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def blended(work, augmented, features):
    rc = main(["--seed", "5", "blend-train",
               "--features", str(features),
               "--out", str(work / "blend"),
               "--val-manifest", str(augmented / "validation_manifest.csv"),
               "--schedule", "5:1e-3", "--batch-size", "8"])
    assert rc == 0
    return work / "blend"


@pytest.fixture(scope="module")
def predictions(work, features, blended):
    out = work / "predictions.csv"
    rc = main(["predict", "--features", str(features),
               "--checkpoint", str(blended / "best.ckpt"),
               "--out", str(out)])
    assert rc == 0
    return out


class TestStageCommands:
    def test_preprocess_outputs(self, preprocessed):
        assert preprocessed.exists()
        assert len(load_manifest(preprocessed)) == 10

    def test_augment_outputs(self, augmented):
        assert (augmented / "augmented_manifest.csv").exists()
        assert (augmented / "stats.json").exists()

    def test_train_outputs(self, trained):
        for name in ("best.ckpt", "final.ckpt", "history.csv"):
            assert (trained / name).exists()

    def test_feature_store(self, features):
        from fundusdl.features import read_features
        dim, rows = read_features(features)
        assert dim == 128 and len(rows) == 10

    def test_predictions(self, predictions):
        lines = predictions.read_text().splitlines()
        assert lines[0] == "image_id,score"
        assert len(lines) == 11

    def test_evaluate_prints_and_writes(self, work, preprocessed,
                                        predictions, capsys):
        rc = main(["evaluate", "--predictions", str(predictions),
                   "--manifest", str(preprocessed),
                   "--out", str(work / "report")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "kappa:" in out and "confusion" in out
        report = json.loads((work / "report" / "report.json").read_text())
        assert report["total"] == 10


class TestStats:
    def test_distribution_output(self, tmp_path, capsys):
        rows = []
        rng = np.random.default_rng(0)
        for i, grade in enumerate([0, 0, 0, 1]):
            path = tmp_path / f"im{i}.png"
            save_image(make_fundus(48, grade, rng), path)
            rows.append(ManifestRow(str(path), f"p{i}", "left", grade))
        save_manifest(DatasetManifest(rows), tmp_path / "m.csv")
        rc = main(["stats", "--manifest", str(tmp_path / "m.csv")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "grade 0:" in out and "(75.00%)" in out
        assert "(25.00%)" in out and "total:" in out


class TestSplit:
    def test_writes_disjoint_manifests(self, work, tmp_path, capsys):
        rc = main(["--seed", "9", "split",
                   "--manifest", str(work / "data" / "manifest.csv"),
                   "--out", str(tmp_path),
                   "--validation-per-class", "1"])
        assert rc == 0
        train = load_manifest(tmp_path / "train_manifest.csv")
        val = load_manifest(tmp_path / "validation_manifest.csv")
        assert len(val) == 5 and len(train) == 5
        assert not set(train.ids()) & set(val.ids())


class TestRunCommand:
    def test_run_with_config_file(self, work, tmp_path):
        cfg = {
            "manifest": str(work / "data" / "manifest.csv"),
            "out_dir": str(tmp_path / "run"),
            "seed": 5,
            "augment": {"validation_per_class": 1,
                        "multipliers": [0, 1, 1, 2, 2],
                        "translate_max": 2.0},
            "train": {"schedule": [[2, 1e-3]], "batch_size": 8,
                      "weight_decay": 0.0},
            "features": {"passes": 2},
            "blend": {"schedule": [[5, 1e-3]], "batch_size": 8},
        }
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps(cfg))
        rc = main(["run", "--config", str(cfg_path)])
        assert rc == 0
        assert (tmp_path / "run" / "evaluate" / "report.json").exists()

    def test_run_without_inputs_fails(self, capsys):
        rc = main(["run"])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_force_stage_fails(self, work, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({
            "manifest": str(work / "data" / "manifest.csv"),
            "out_dir": str(tmp_path / "r")}))
        rc = main(["run", "--config", str(cfg_path), "--force", "nope"])
        assert rc == 1
        assert "unknown stage" in capsys.readouterr().err


class TestErrorHandling:
    def test_missing_file_exits_nonzero(self, capsys):
        rc = main(["stats", "--manifest", "/nonexistent/m.csv"])
        assert rc == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_unknown_command_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_bad_schedule_string(self):
        with pytest.raises(ConfigurationError):
            _parse_schedule("80,70")

    def test_schedule_parsing(self):
        assert _parse_schedule("80:1e-4,70:1e-5") == ((80, 1e-4),
                                                      (70, 1e-5))

    def test_multiplier_parsing(self):
        assert _parse_multipliers("0,11,4,27,35") == (0, 11, 4, 27, 35)
        with pytest.raises(ConfigurationError):
            _parse_multipliers("1,2,3")
