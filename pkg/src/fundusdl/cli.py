"""Command-line entry point.

One subcommand per pipeline stage plus ``run``, which chains them over a
single output directory with skip markers. Global flags: ``--seed`` (master
seed), ``--workers`` (process count for the image stages), ``--config``
(run configuration JSON for ``run``, network configuration file for the
training and feature commands).
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .augment import (DEFAULT_MULTIPLIERS, AugmentRanges, augment_corpus,
                      load_augmented_manifest, load_stats)
from .errors import ConfigurationError, FundusError
from .features import read_features, write_features
from .imageio import load_image
from .manifest import (GRADES, grade_distribution, load_manifest,
                       save_manifest, split_dataset)
from .metrics import evaluate_files, save_predictions
from .model import (blend_digest, build_blend_network, build_network,
                    extract_features, load_blend_model, load_model, predict)
from .netconfig import (config_digest, load_network_config,
                        main_network_config, reduced_network_config)
from .pipeline import RunConfig, run_pipeline, smoke_run_config
from .preprocess import PreprocessConfig, preprocess_manifest
from .rng import derive_rng
from .trainer import (MAIN_SCHEDULE, ImageDataset, blend_train_config,
                      main_train_config, train_blend, train_main)

__all__ = ["main", "build_parser"]


def _parse_schedule(text: str):
    """``"80:1e-4,70:1e-5"`` -> ((80, 1e-4), (70, 1e-5))."""
    try:
        pairs = []
        for part in text.split(","):
            count, lr = part.split(":")
            pairs.append((int(count), float(lr)))
        return tuple(pairs)
    except ValueError as exc:
        raise ConfigurationError(
            f"bad schedule {text!r}; expected EPOCHS:LR[,EPOCHS:LR...]"
        ) from exc


def _parse_multipliers(text: str):
    try:
        values = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigurationError(f"bad multipliers {text!r}") from exc
    if len(values) != len(GRADES):
        raise ConfigurationError(
            f"need {len(GRADES)} multipliers, got {len(values)}")
    return values


def _network_from_args(args):
    spec = args.config or "reduced-32"
    if spec == "paper-512":
        return main_network_config()
    if spec == "reduced-32":
        return reduced_network_config()
    return load_network_config(spec)


def _add_global_flags(parser, suppress: bool):
    # On subparsers the defaults are suppressed so a value given before
    # the subcommand is not clobbered by a subparser default.
    def dflt(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--seed", type=int, default=dflt(0),
                        help="master seed (default 0)")
    parser.add_argument("--workers", type=int, default=dflt(1),
                        help="worker processes for image stages (default 1)")
    parser.add_argument("--config", default=dflt(None),
                        help="configuration file (run JSON, or network "
                             "preset/file for train and feature commands)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fundusdl",
        description="Retina fundus grading pipeline.")
    _add_global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, suppress=True)
    subparsers = parser.add_subparsers(dest="command", required=True)

    def sub_parser(name, **kwargs):
        return subparsers.add_parser(name, parents=[common], **kwargs)

    p = sub_parser("stats", help="print the grade distribution")
    p.add_argument("--manifest", required=True)

    p = sub_parser("split", help="hold out a validation set per grade")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--validation-per-class", type=int, default=200)

    p = sub_parser("preprocess", help="normalize raw fundus images")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-radius", type=int, default=300)
    p.add_argument("--output-size", type=int, default=512)

    p = sub_parser("augment",
                       help="build the class-balanced training corpus")
    p.add_argument("--manifest", required=True,
                   help="preprocessed manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--validation-per-class", type=int, default=200)
    p.add_argument("--multipliers", default=None,
                   help="per-grade copy counts, e.g. 0,11,4,27,35")
    p.add_argument("--translate-max", type=float, default=None,
                   help="override the translation range in pixels")

    p = sub_parser("train", help="train the grading network")
    p.add_argument("--manifest", required=True, help="augmented manifest")
    p.add_argument("--val-manifest", default=None)
    p.add_argument("--stats", required=True, help="stats.json from augment")
    p.add_argument("--out", required=True)
    p.add_argument("--schedule", default=None,
                   help="EPOCHS:LR[,EPOCHS:LR...]; default is the full "
                        "300-epoch recipe")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--resume", action="store_true")

    p = sub_parser("extract-features",
                       help="write averaged descriptors for each image")
    p.add_argument("--manifest", required=True, help="preprocessed manifest")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True, help="output .bin path")
    p.add_argument("--passes", type=int, default=40)
    p.add_argument("--translate-max", type=float, default=None)

    p = sub_parser("blend-train", help="train the feature blender")
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-manifest", default=None,
                   help="ids listed here are held out for validation")
    p.add_argument("--schedule", default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=1e-3)
    p.add_argument("--resume", action="store_true")

    p = sub_parser("predict", help="score descriptors with the blender")
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="predictions CSV path")

    p = sub_parser("evaluate", help="score predictions against labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None,
                   help="directory for report.json and report.txt")

    p = sub_parser("run", help="execute all stages over one directory")
    p.add_argument("--manifest", default=None,
                   help="raw manifest (with --out, builds the default "
                        "small-profile config)")
    p.add_argument("--out", default=None)
    p.add_argument("--force", nargs="?", const="all", default=None,
                   metavar="STAGE",
                   help="rerun STAGE and everything after it "
                        "(bare --force reruns all stages)")
    return parser


def _cmd_stats(args) -> int:
    manifest = load_manifest(args.manifest)
    counts, percent, total = grade_distribution(manifest)
    for g in GRADES:
        print(f"grade {g}: {counts[g]:7d}  ({percent[g]:.2f}%)")
    print(f"total:   {total:7d}")
    return 0


def _cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    train, val = split_dataset(manifest, args.validation_per_class,
                               seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(train, out / "train_manifest.csv")
    save_manifest(val, out / "validation_manifest.csv")
    print(f"train: {len(train)} images, validation: {len(val)} images")
    return 0


def _cmd_preprocess(args) -> int:
    manifest = load_manifest(args.manifest, check_files=True)
    cfg = PreprocessConfig(target_radius=args.target_radius,
                           output_size=args.output_size)
    kept, rejected = preprocess_manifest(manifest, args.out, cfg,
                                         workers=args.workers)
    print(f"kept {len(kept)} images, rejected {len(rejected)}")
    return 0


def _ranges_from_args(args) -> AugmentRanges:
    if getattr(args, "translate_max", None) is not None:
        return AugmentRanges(translate_max=args.translate_max)
    return AugmentRanges()


def _cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    multipliers = (_parse_multipliers(args.multipliers)
                   if args.multipliers else DEFAULT_MULTIPLIERS)
    plan, train, val, _ = augment_corpus(
        manifest, args.out, seed=args.seed,
        validation_per_class=args.validation_per_class,
        multipliers=multipliers, ranges=_ranges_from_args(args),
        workers=args.workers)
    print(f"augmented corpus: {len(train)} training images "
          f"({sum(plan.expected_totals.values())} planned), "
          f"{len(val)} validation images")
    return 0


def _cmd_train(args) -> int:
    cfg_net = _network_from_args(args)
    channel_stats, _ = load_stats(args.stats)
    rows = load_augmented_manifest(args.manifest)
    train_data = ImageDataset([r[0] for r in rows],
                              [float(r[2]) for r in rows], channel_stats)
    val_data = None
    if args.val_manifest:
        val_rows = list(load_manifest(args.val_manifest))
        val_data = ImageDataset([r.image_path for r in val_rows],
                                [float(r.grade) for r in val_rows],
                                channel_stats)
    schedule = (_parse_schedule(args.schedule) if args.schedule
                else MAIN_SCHEDULE)
    cfg = main_train_config(schedule=schedule,
                            total_epochs=sum(c for c, _ in schedule),
                            batch_size=args.batch_size,
                            weight_decay=args.weight_decay,
                            momentum=args.momentum, seed=args.seed)
    net = build_network(cfg_net, seed=args.seed)
    _, history = train_main(net, train_data, val_data, cfg, args.out,
                            digest=config_digest(cfg_net),
                            resume=args.resume)
    last = history.records[-1]
    print(f"trained {len(history.records)} epochs, final loss "
          f"{last.train_loss:.6f}, validation kappa {last.val_kappa:.4f}")
    return 0


def _cmd_extract_features(args) -> int:
    cfg_net = _network_from_args(args)
    net, _ = load_model(args.checkpoint, cfg_net, seed=args.seed)
    channel_stats, color_stats = load_stats(args.stats)
    manifest = load_manifest(args.manifest)
    ranges = _ranges_from_args(args)
    rows = []
    for row in manifest:
        rng = derive_rng(args.seed, "features", row.image_id)
        descriptor = extract_features(net, load_image(row.image_path),
                                      args.passes, rng, channel_stats,
                                      color_stats=color_stats, ranges=ranges)
        rows.append((row.image_id, descriptor, float(row.grade)))
    write_features(args.out, rows, dim=2 * net.feature_dim)
    print(f"wrote {len(rows)} descriptors of dimension "
          f"{2 * net.feature_dim} to {args.out}")
    return 0


def _cmd_blend_train(args) -> int:
    dim, rows = read_features(args.features)
    val_ids = set()
    if args.val_manifest:
        val_ids = set(load_manifest(args.val_manifest).ids())
    train_rows = [r for r in rows if r[0] not in val_ids]
    val_rows = [r for r in rows if r[0] in val_ids]
    if not train_rows:
        raise ConfigurationError("no training descriptors after holdout")
    x = np.stack([r[1] for r in train_rows])
    y = np.array([r[2] for r in train_rows])
    val = None
    if val_rows:
        val = (np.stack([r[1] for r in val_rows]),
               np.array([r[2] for r in val_rows]))
    schedule = (_parse_schedule(args.schedule) if args.schedule else None)
    overrides = {"batch_size": args.batch_size,
                 "weight_decay": args.weight_decay, "seed": args.seed}
    if schedule:
        overrides["schedule"] = schedule
        overrides["total_epochs"] = sum(c for c, _ in schedule)
    cfg = blend_train_config(**overrides)
    net = build_blend_network(input_dim=dim, seed=args.seed)
    _, history = train_blend(net, x, y, cfg, args.out, val=val,
                             digest=blend_digest(dim), resume=args.resume)
    print(f"trained blender for {len(history.records)} epochs on "
          f"{len(train_rows)} descriptors")
    return 0


def _cmd_predict(args) -> int:
    dim, rows = read_features(args.features)
    net, _ = load_blend_model(args.checkpoint, input_dim=dim,
                              seed=args.seed)
    scores = predict(net, np.stack([r[1] for r in rows]))[:, 0]
    save_predictions([(row[0], float(s)) for row, s in zip(rows, scores)],
                     args.out)
    print(f"wrote {len(rows)} predictions to {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate_files(args.predictions, load_manifest(args.manifest))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.to_json())
        (out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def _cmd_run(args) -> int:
    if args.config:
        cfg = RunConfig.from_json(args.config)
        if args.seed:
            cfg = RunConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
        if args.workers != 1:
            cfg = RunConfig.from_dict({**cfg.to_dict(),
                                       "workers": args.workers})
    elif args.manifest and args.out:
        cfg = smoke_run_config(args.manifest, args.out, seed=args.seed,
                               workers=args.workers)
    else:
        raise ConfigurationError(
            "run needs --config, or --manifest with --out")
    status = run_pipeline(cfg, force=args.force, echo=print)
    print(f"run complete: {cfg.out_dir}")
    return status


_COMMANDS = {
    "stats": _cmd_stats,
    "split": _cmd_split,
    "preprocess": _cmd_preprocess,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "extract-features": _cmd_extract_features,
    "blend-train": _cmd_blend_train,
    "predict": _cmd_predict,
    "evaluate": _cmd_evaluate,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FundusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
