"""Staged run orchestration: preprocess through evaluate.

Each stage owns a subdirectory of the run root and finishes by writing a
``stage.done`` marker holding sha256 digests of the inputs it consumed. A
rerun recomputes those digests and skips stages whose marker still matches,
so an interrupted run resumes where it stopped and an upstream change
cascades forward on its own. ``force`` reruns a named stage and everything
after it.

Nothing here records wall-clock time: two runs with one seed and one worker
produce byte-identical artifacts.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .augment import (AugmentRanges, augment_corpus, load_augmented_manifest,
                      load_stats)
from .errors import ConfigurationError, FundusError
from .features import read_features, write_features
from .imageio import load_image
from .manifest import load_manifest
from .metrics import evaluate_files, save_predictions
from .model import (blend_digest, build_blend_network, build_network,
                    extract_features, load_blend_model, load_model, predict)
from .netconfig import (config_digest, load_network_config,
                        main_network_config, reduced_network_config)
from .preprocess import PreprocessConfig, preprocess_manifest
from .rng import derive_rng
from .trainer import ImageDataset, TrainConfig, train_blend, train_main

__all__ = ["STAGES", "RunConfig", "smoke_run_config", "run_pipeline"]

STAGES = ("preprocess", "augment", "train", "extract-features",
          "blend-train", "predict", "evaluate")


@dataclass(frozen=True)
class RunConfig:
    """Everything one pipeline run needs; defaults fit the small synthetic
    profile, full-scale runs override via a JSON file."""
    manifest: str
    out_dir: str
    seed: int = 7
    workers: int = 1
    network: dict = field(default_factory=lambda: {
        "preset": "reduced-32", "input_size": 32, "dropout": 0.0})
    preprocess: dict = field(default_factory=lambda: {
        "target_radius": 15, "output_size": 32, "blur_divisor": 4.0})
    augment: dict = field(default_factory=lambda: {
        "validation_per_class": 1,
        "multipliers": [0, 11, 4, 27, 35],
        "translate_max": 3.0})
    train: dict = field(default_factory=lambda: {
        "schedule": [[25, 1e-3]], "batch_size": 16,
        "weight_decay": 0.0, "momentum": 0.9})
    features: dict = field(default_factory=lambda: {"passes": 4})
    blend: dict = field(default_factory=lambda: {
        "schedule": [[100, 1e-3]], "batch_size": 32, "weight_decay": 1e-3})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(
                f"unknown run-config keys {sorted(unknown)}")
        if "manifest" not in data or "out_dir" not in data:
            raise ConfigurationError(
                "run config needs 'manifest' and 'out_dir'")
        base = cls(manifest=data["manifest"], out_dir=data["out_dir"])
        merged = {}
        for name in known:
            value = data.get(name, getattr(base, name))
            default = getattr(base, name)
            if isinstance(default, dict) and name in data:
                filled = dict(default)
                filled.update(data[name])
                value = filled
            merged[name] = value
        return cls(**merged)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read run config {path}: "
                                     f"{exc}") from exc
        return cls.from_dict(data)


def smoke_run_config(manifest, out_dir, seed: int = 7,
                     workers: int = 1) -> RunConfig:
    """The default small-profile configuration."""
    return RunConfig(manifest=str(manifest), out_dir=str(out_dir),
                     seed=seed, workers=workers)


def _network_config(spec: dict):
    if "config" in spec:
        return load_network_config(spec["config"])
    preset = spec.get("preset", "reduced-32")
    if preset == "paper-512":
        return main_network_config()
    if preset == "reduced-32":
        return reduced_network_config(
            input_size=int(spec.get("input_size", 32)),
            dropout=float(spec.get("dropout", 0.5)))
    raise ConfigurationError(f"unknown network preset {preset!r}")


def _augment_ranges(spec: dict) -> AugmentRanges:
    keys = ("rotation_max", "shear_max", "zoom_max", "crop_min", "crop_max",
            "translate_max", "alpha_std")
    return AugmentRanges(**{k: float(spec[k]) for k in keys if k in spec})


def _train_config(spec: dict, seed: int) -> TrainConfig:
    schedule = tuple((int(c), float(lr)) for c, lr in spec["schedule"])
    return TrainConfig(
        schedule=schedule,
        total_epochs=sum(c for c, _ in schedule),
        momentum=float(spec.get("momentum", 0.9)),
        weight_decay=float(spec.get("weight_decay", 0.0)),
        batch_size=int(spec.get("batch_size", 16)),
        seed=seed,
        checkpoint_every=int(spec.get("checkpoint_every", 0)))


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_digest(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True).encode()).hexdigest()


class _Run:
    """One pipeline execution over a run directory."""

    def __init__(self, cfg: RunConfig, force=None, echo=None):
        self.cfg = cfg
        self.echo = echo or (lambda line: None)
        self.root = Path(cfg.out_dir)
        self.net_cfg = _network_config(cfg.network)
        if self.net_cfg.input_size != int(
                cfg.preprocess.get("output_size", 512)):
            raise ConfigurationError(
                f"preprocess output_size "
                f"{cfg.preprocess.get('output_size')} does not match "
                f"network input_size {self.net_cfg.input_size}")
        if force is not None and force != "all" and force not in STAGES:
            raise ConfigurationError(
                f"unknown stage {force!r}; stages are {', '.join(STAGES)}")
        self.force_from = (0 if force == "all"
                           else STAGES.index(force) if force else None)
        self.ranges = _augment_ranges(cfg.augment)

    # -- bookkeeping ------------------------------------------------------

    def stage_dir(self, stage: str) -> Path:
        return self.root / stage.replace("-", "_")

    def _run_payload(self) -> dict:
        return {
            "package_version": __version__,
            "seed": self.cfg.seed,
            "workers": self.cfg.workers,
            "network_digest": config_digest(self.net_cfg),
            "run_config_digest": _json_digest(self.cfg.to_dict()),
            "config": self.cfg.to_dict(),
            "stages": list(STAGES),
        }

    def _write_run_json(self, directory: Path, stage=None):
        payload = self._run_payload()
        if stage is not None:
            payload["stage"] = stage
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / "run.json", "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    def _should_skip(self, stage: str, inputs: dict) -> bool:
        skip = self._marker_current(stage, inputs)
        self.echo(f"{stage}: {'up to date, skipped' if skip else 'running'}")
        return skip

    def _marker_current(self, stage: str, inputs: dict) -> bool:
        index = STAGES.index(stage)
        if self.force_from is not None and index >= self.force_from:
            return False
        marker = self.stage_dir(stage) / "stage.done"
        if not marker.exists():
            return False
        try:
            recorded = json.loads(marker.read_text())
        except json.JSONDecodeError:
            return False
        return recorded.get("inputs") == inputs

    def _finish(self, stage: str, inputs: dict):
        marker = self.stage_dir(stage) / "stage.done"
        with open(marker, "w") as fh:
            json.dump({"stage": stage, "inputs": inputs}, fh, indent=2,
                      sort_keys=True)
        self._write_run_json(self.stage_dir(stage), stage)
        self.echo(f"{stage}: done")

    # -- stages -----------------------------------------------------------

    def stage_preprocess(self):
        stage = "preprocess"
        inputs = {"manifest": _file_digest(self.cfg.manifest),
                  "config": _json_digest(self.cfg.preprocess)}
        if self._should_skip(stage, inputs):
            return
        out = self.stage_dir(stage)
        manifest = load_manifest(self.cfg.manifest, check_files=True)
        pcfg = PreprocessConfig(**self.cfg.preprocess)
        preprocess_manifest(manifest, out, pcfg, workers=self.cfg.workers)
        self._finish(stage, inputs)

    def stage_augment(self):
        stage = "augment"
        src = self.stage_dir("preprocess") / "preprocessed_manifest.csv"
        inputs = {"preprocessed_manifest": _file_digest(src),
                  "config": _json_digest(self.cfg.augment),
                  "seed": str(self.cfg.seed)}
        if self._should_skip(stage, inputs):
            return
        manifest = load_manifest(src)
        augment_corpus(
            manifest, self.stage_dir(stage), seed=self.cfg.seed,
            validation_per_class=int(
                self.cfg.augment.get("validation_per_class", 200)),
            multipliers=tuple(
                self.cfg.augment.get("multipliers", (0, 11, 4, 27, 35))),
            ranges=self.ranges, workers=self.cfg.workers)
        self._finish(stage, inputs)

    def stage_train(self):
        stage = "train"
        aug_dir = self.stage_dir("augment")
        inputs = {
            "augmented_manifest": _file_digest(
                aug_dir / "augmented_manifest.csv"),
            "stats": _file_digest(aug_dir / "stats.json"),
            "network": config_digest(self.net_cfg),
            "config": _json_digest(self.cfg.train),
            "seed": str(self.cfg.seed),
        }
        if self._should_skip(stage, inputs):
            return
        channel_stats, _ = load_stats(aug_dir / "stats.json")
        rows = load_augmented_manifest(aug_dir / "augmented_manifest.csv")
        train_data = ImageDataset([r[0] for r in rows],
                                  [float(r[2]) for r in rows],
                                  channel_stats)
        val_manifest = load_manifest(aug_dir / "validation_manifest.csv")
        val_rows = list(val_manifest)
        val_data = ImageDataset(
            [r.image_path for r in val_rows],
            [float(r.grade) for r in val_rows],
            channel_stats) if val_rows else None
        net = build_network(self.net_cfg, seed=self.cfg.seed)
        cfg = _train_config(self.cfg.train, self.cfg.seed)
        train_main(net, train_data, val_data, cfg, self.stage_dir(stage),
                   digest=config_digest(self.net_cfg))
        self._finish(stage, inputs)

    def stage_extract_features(self):
        stage = "extract-features"
        ckpt = self.stage_dir("train") / "best.ckpt"
        stats_path = self.stage_dir("augment") / "stats.json"
        src = self.stage_dir("preprocess") / "preprocessed_manifest.csv"
        inputs = {"checkpoint": _file_digest(ckpt),
                  "preprocessed_manifest": _file_digest(src),
                  "stats": _file_digest(stats_path),
                  "config": _json_digest(self.cfg.features),
                  "seed": str(self.cfg.seed)}
        if self._should_skip(stage, inputs):
            return
        net, _ = load_model(ckpt, self.net_cfg, seed=self.cfg.seed)
        channel_stats, color_stats = load_stats(stats_path)
        passes = int(self.cfg.features.get("passes", 40))
        manifest = load_manifest(src)
        rows = []
        for row in manifest:
            rng = derive_rng(self.cfg.seed, "features", row.image_id)
            descriptor = extract_features(
                net, load_image(row.image_path), passes, rng,
                channel_stats, color_stats=color_stats, ranges=self.ranges)
            rows.append((row.image_id, descriptor, float(row.grade)))
        out = self.stage_dir(stage)
        out.mkdir(parents=True, exist_ok=True)
        write_features(out / "features.bin", rows, dim=2 * net.feature_dim)
        self._finish(stage, inputs)

    def stage_blend_train(self):
        stage = "blend-train"
        feat_path = self.stage_dir("extract-features") / "features.bin"
        inputs = {"features": _file_digest(feat_path),
                  "config": _json_digest(self.cfg.blend),
                  "seed": str(self.cfg.seed)}
        if self._should_skip(stage, inputs):
            return
        dim, rows = read_features(feat_path)
        val_manifest = load_manifest(
            self.stage_dir("augment") / "validation_manifest.csv")
        val_ids = set(val_manifest.ids())
        train_rows = [r for r in rows if r[0] not in val_ids]
        val_rows = [r for r in rows if r[0] in val_ids]
        x = np.stack([r[1] for r in train_rows])
        y = np.array([r[2] for r in train_rows])
        val = None
        if val_rows:
            val = (np.stack([r[1] for r in val_rows]),
                   np.array([r[2] for r in val_rows]))
        net = build_blend_network(input_dim=dim, seed=self.cfg.seed)
        cfg = _train_config(self.cfg.blend, self.cfg.seed)
        train_blend(net, x, y, cfg, self.stage_dir(stage), val=val,
                    digest=blend_digest(dim))
        self._finish(stage, inputs)

    def stage_predict(self):
        stage = "predict"
        feat_path = self.stage_dir("extract-features") / "features.bin"
        ckpt = self.stage_dir("blend-train") / "best.ckpt"
        inputs = {"features": _file_digest(feat_path),
                  "checkpoint": _file_digest(ckpt)}
        if self._should_skip(stage, inputs):
            return
        dim, rows = read_features(feat_path)
        net, _ = load_blend_model(ckpt, input_dim=dim, seed=self.cfg.seed)
        x = np.stack([r[1] for r in rows])
        scores = predict(net, x)[:, 0]
        out = self.stage_dir(stage)
        save_predictions(
            [(row[0], float(score)) for row, score in zip(rows, scores)],
            out / "predictions.csv")
        self._finish(stage, inputs)

    def stage_evaluate(self):
        stage = "evaluate"
        pred_path = self.stage_dir("predict") / "predictions.csv"
        truth_path = self.stage_dir("preprocess") / "preprocessed_manifest.csv"
        inputs = {"predictions": _file_digest(pred_path),
                  "manifest": _file_digest(truth_path)}
        if self._should_skip(stage, inputs):
            return
        report = evaluate_files(pred_path, load_manifest(truth_path))
        out = self.stage_dir(stage)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.to_text())
        self._finish(stage, inputs)

    def execute(self) -> int:
        self.root.mkdir(parents=True, exist_ok=True)
        self._write_run_json(self.root)
        self.stage_preprocess()
        self.stage_augment()
        self.stage_train()
        self.stage_extract_features()
        self.stage_blend_train()
        self.stage_predict()
        self.stage_evaluate()
        return 0


def run_pipeline(cfg: RunConfig, force=None, echo=None) -> int:
    """Run all stages in order; returns 0 when the report was written.

    Raises the failing stage's error otherwise, leaving completed stages'
    outputs (and their markers) on disk so the next invocation resumes
    after them. ``echo``, if given, receives one progress line per stage
    decision; artifacts are unaffected.
    """
    if not isinstance(cfg, RunConfig):
        raise ConfigurationError("run_pipeline needs a RunConfig")
    if not Path(cfg.manifest).exists():
        raise FundusError(f"manifest {cfg.manifest} does not exist")
    return _Run(cfg, force=force, echo=echo).execute()
