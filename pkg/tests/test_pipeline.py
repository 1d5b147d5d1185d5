"""Staged pipeline: artifacts, skip markers, forced reruns, determinism."""

import json
import shutil

import pytest

from fundusdl.errors import ConfigurationError, FundusError
from fundusdl.pipeline import STAGES, RunConfig, run_pipeline
from fundusdl.synthetic import make_dataset

TINY = {
    "seed": 5,
    "augment": {"validation_per_class": 1, "multipliers": [0, 1, 1, 2, 2],
                "translate_max": 2.0},
    "train": {"schedule": [[3, 1e-3]], "batch_size": 8,
              "weight_decay": 0.0},
    "features": {"passes": 2},
    "blend": {"schedule": [[10, 1e-3]], "batch_size": 8,
              "weight_decay": 1e-3},
}


def tiny_config(manifest, out_dir, **extra) -> RunConfig:
    data = {"manifest": str(manifest), "out_dir": str(out_dir), **TINY}
    for key, value in extra.items():
        if isinstance(value, dict) and key in data:
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return RunConfig.from_dict(data)


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tinydata")
    make_dataset(root, (2, 2, 2, 2, 2), size=64, seed=3)
    return root / "manifest.csv"


@pytest.fixture(scope="module")
def tiny_run(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("tinyrun")
    cfg = tiny_config(tiny_dataset, out)
    status = run_pipeline(cfg)
    return cfg, out, status


def stage_paths(out):
    return {stage: out / stage.replace("-", "_") for stage in STAGES}


class TestArtifacts:
    def test_exit_status(self, tiny_run):
        _, _, status = tiny_run
        assert status == 0

    def test_every_stage_leaves_its_marker(self, tiny_run):
        _, out, _ = tiny_run
        for stage, path in stage_paths(out).items():
            marker = path / "stage.done"
            assert marker.exists(), stage
            recorded = json.loads(marker.read_text())
            assert recorded["stage"] == stage
            assert recorded["inputs"]
            for digest in recorded["inputs"].values():
                assert isinstance(digest, str)

    def test_expected_outputs(self, tiny_run):
        _, out, _ = tiny_run
        paths = stage_paths(out)
        assert (paths["preprocess"] / "preprocessed_manifest.csv").exists()
        assert (paths["augment"] / "augmented_manifest.csv").exists()
        assert (paths["augment"] / "stats.json").exists()
        for name in ("best.ckpt", "latest.ckpt", "final.ckpt",
                     "history.csv"):
            assert (paths["train"] / name).exists()
        assert (paths["extract-features"] / "features.bin").exists()
        assert (paths["blend-train"] / "final.ckpt").exists()
        assert (paths["predict"] / "predictions.csv").exists()
        assert (paths["evaluate"] / "report.json").exists()
        assert (paths["evaluate"] / "report.txt").exists()

    def test_run_json_in_every_output_directory(self, tiny_run):
        cfg, out, _ = tiny_run
        locations = [out] + list(stage_paths(out).values())
        for directory in locations:
            payload = json.loads((directory / "run.json").read_text())
            assert payload["seed"] == cfg.seed
            assert payload["package_version"]
            assert len(payload["network_digest"]) == 64
            assert len(payload["run_config_digest"]) == 64
            assert payload["config"]["manifest"] == cfg.manifest
            assert "time" not in payload and "date" not in payload

    def test_report_covers_all_originals(self, tiny_run):
        _, out, _ = tiny_run
        report = json.loads(
            (out / "evaluate" / "report.json").read_text())
        assert report["total"] == 10
        assert set(report["auc"]) == {"healthy_vs_sick", "low_vs_high"}


class TestRerunSemantics:
    def test_rerun_skips_everything(self, tiny_run):
        cfg, out, _ = tiny_run
        before = {p: (p / "stage.done").stat().st_mtime_ns
                  for p in stage_paths(out).values()}
        run_pipeline(cfg)
        after = {p: (p / "stage.done").stat().st_mtime_ns
                 for p in stage_paths(out).values()}
        assert before == after

    def test_force_reruns_stage_and_downstream(self, tiny_dataset,
                                               tiny_run, tmp_path):
        cfg0, src, _ = tiny_run
        out = tmp_path / "copy"
        shutil.copytree(src, out)
        cfg = tiny_config(tiny_dataset, out)
        run_pipeline(cfg)  # adopt the copied directory (paths differ)
        paths = stage_paths(out)
        before = {s: (p / "stage.done").stat().st_mtime_ns
                  for s, p in paths.items()}
        run_pipeline(cfg, force="blend-train")
        after = {s: (p / "stage.done").stat().st_mtime_ns
                 for s, p in paths.items()}
        for stage in ("preprocess", "augment", "train", "extract-features"):
            assert before[stage] == after[stage], stage
        for stage in ("blend-train", "predict", "evaluate"):
            assert before[stage] != after[stage], stage

    def test_config_change_cascades_through_changed_content(
            self, tiny_dataset, tiny_run, tmp_path):
        # Skipping is content addressed: a stage reruns exactly when its
        # recorded input digests no longer match. Changing the descriptor
        # pass count rewrites features.bin, which is a direct input of
        # both blend-train and predict.
        _, src, _ = tiny_run
        out = tmp_path / "copy"
        shutil.copytree(src, out)
        cfg = tiny_config(tiny_dataset, out)
        run_pipeline(cfg)
        paths = stage_paths(out)
        before = {s: (p / "stage.done").stat().st_mtime_ns
                  for s, p in paths.items()}
        pred_before = (paths["predict"] / "predictions.csv").read_bytes()
        changed = tiny_config(tiny_dataset, out, features={"passes": 3})
        run_pipeline(changed)
        after = {s: (p / "stage.done").stat().st_mtime_ns
                 for s, p in paths.items()}
        for stage in ("preprocess", "augment", "train"):
            assert before[stage] == after[stage], stage
        for stage in ("extract-features", "blend-train", "predict"):
            assert before[stage] != after[stage], stage
        pred_after = (paths["predict"] / "predictions.csv").read_bytes()
        evaluated_again = before["evaluate"] != after["evaluate"]
        assert evaluated_again == (pred_before != pred_after)

    def test_same_seed_runs_are_bit_identical(self, tiny_dataset, tiny_run,
                                              tmp_path):
        _, first, _ = tiny_run
        out = tmp_path / "again"
        run_pipeline(tiny_config(tiny_dataset, out))
        for rel in ("train/final.ckpt", "train/best.ckpt",
                    "blend_train/final.ckpt", "predict/predictions.csv",
                    "evaluate/report.json"):
            assert (first / rel).read_bytes() == (out / rel).read_bytes(), rel


class TestRunConfig:
    def test_json_roundtrip(self, tmp_path):
        cfg = tiny_config("m.csv", "out")
        path = tmp_path / "run.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert RunConfig.from_json(path) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            RunConfig.from_dict({"manifest": "m", "out_dir": "o",
                                 "bogus": 1})

    def test_requires_manifest_and_out_dir(self):
        with pytest.raises(ConfigurationError):
            RunConfig.from_dict({"manifest": "m"})

    def test_partial_section_merges_with_defaults(self):
        cfg = RunConfig.from_dict({"manifest": "m", "out_dir": "o",
                                   "train": {"batch_size": 4}})
        assert cfg.train["batch_size"] == 4
        assert cfg.train["schedule"]  # default retained


class TestFailureModes:
    def test_missing_manifest(self, tmp_path):
        cfg = tiny_config(tmp_path / "nope.csv", tmp_path / "out")
        with pytest.raises(FundusError):
            run_pipeline(cfg)

    def test_unknown_force_stage(self, tiny_dataset, tmp_path):
        cfg = tiny_config(tiny_dataset, tmp_path / "out")
        with pytest.raises(ConfigurationError, match="unknown stage"):
            run_pipeline(cfg, force="compile")

    def test_network_input_must_match_preprocess_output(self, tiny_dataset,
                                                        tmp_path):
        cfg = tiny_config(tiny_dataset, tmp_path / "out",
                          preprocess={"output_size": 48})
        with pytest.raises(ConfigurationError, match="input_size"):
            run_pipeline(cfg)
