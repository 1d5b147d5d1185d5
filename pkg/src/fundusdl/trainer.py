"""Training loops: stepped-LR SGD for the grading network, Adam for the
feature blender. Both checkpoint the best-validation-kappa model and the
latest state (with optimizer moments for bit-exact resume), and append one
history record per completed epoch.
"""

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import Adam, SgdNesterov, mse_loss
from .errors import ConfigurationError, TrainingError
from .imageio import load_image
from .augment import standardize
from .metrics import discretize, quadratic_weighted_kappa
from .model import save_model
from .checkpoint import read_records
from .rng import derive_rng

__all__ = ["MAIN_SCHEDULE", "BLEND_SCHEDULE", "TrainConfig",
           "main_train_config", "blend_train_config", "lr_at_epoch",
           "EpochRecord", "TrainHistory", "ArrayDataset", "ImageDataset",
           "train_main", "train_blend"]

MAIN_SCHEDULE = ((80, 1e-4), (70, 1e-5), (40, 5e-5), (110, 1e-6))
BLEND_SCHEDULE = ((100, 1e-3),)


@dataclass(frozen=True)
class TrainConfig:
    schedule: tuple
    total_epochs: int
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 16
    seed: int = 0
    checkpoint_every: int = 0   # extra epoch_NNNN.ckpt cadence; 0 disables

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.schedule:
            raise ConfigurationError("schedule is empty")
        for count, lr in self.schedule:
            if count < 1 or lr <= 0:
                raise ConfigurationError(
                    f"bad schedule step ({count}, {lr})")
        total = sum(count for count, _ in self.schedule)
        if total != self.total_epochs:
            raise ConfigurationError(
                f"schedule covers {total} epochs but total_epochs is "
                f"{self.total_epochs}")


def main_train_config(**overrides) -> TrainConfig:
    """Grading-network defaults: 300 epochs of Nesterov SGD, L2 5e-4,
    batches of 16."""
    fields = dict(schedule=MAIN_SCHEDULE, total_epochs=300, momentum=0.9,
                  weight_decay=5e-4, batch_size=16)
    fields.update(overrides)
    return TrainConfig(**fields)


def blend_train_config(**overrides) -> TrainConfig:
    """Blend-network defaults: 100 epochs of Adam, L2 1e-3, batches of 32."""
    fields = dict(schedule=BLEND_SCHEDULE, total_epochs=100,
                  weight_decay=1e-3, batch_size=32)
    fields.update(overrides)
    return TrainConfig(**fields)


def lr_at_epoch(schedule, epoch: int) -> float:
    """Piecewise-constant learning rate lookup."""
    if epoch < 0:
        raise ConfigurationError(f"epoch {epoch} is negative")
    upto = 0
    for count, lr in schedule:
        upto += count
        if epoch < upto:
            return float(lr)
    raise ConfigurationError(
        f"epoch {epoch} is beyond the {upto}-epoch schedule")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float     # nan when no validation set
    val_kappa: float    # nan when no validation set
    lr: float
    seconds: float


class TrainHistory:
    """Per-epoch records, serialized to history.csv."""

    HEADER = ["epoch", "train_loss", "val_loss", "val_kappa", "lr",
              "seconds"]

    def __init__(self, records=()):
        self.records = list(records)

    def append(self, record: EpochRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.HEADER)
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_loss),
                                 repr(r.val_loss), repr(r.val_kappa),
                                 repr(r.lr), repr(r.seconds)])

    @classmethod
    def load(cls, path) -> "TrainHistory":
        records = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for rec in reader:
                records.append(EpochRecord(int(rec[0]), *map(float, rec[1:])))
        return cls(records)


class ArrayDataset:
    """In-memory dataset: standardized inputs and float targets."""

    def __init__(self, x: np.ndarray, y):
        self.x = np.asarray(x, dtype=np.float32)
        y = np.asarray(y, dtype=np.float32).reshape(-1, 1)
        if len(self.x) != len(y):
            raise ConfigurationError(
                f"{len(self.x)} inputs but {len(y)} targets")
        self.y = y

    def __len__(self):
        return len(self.x)

    def batch(self, indices):
        return self.x[indices], self.y[indices]


class ImageDataset:
    """Lazy dataset: loads, scales, and standardizes images per batch."""

    def __init__(self, paths, targets, channel_stats):
        self.paths = list(paths)
        y = np.asarray(targets, dtype=np.float32).reshape(-1, 1)
        if len(self.paths) != len(y):
            raise ConfigurationError(
                f"{len(self.paths)} paths but {len(y)} targets")
        self.y = y
        self.channel_stats = channel_stats

    def __len__(self):
        return len(self.paths)

    def batch(self, indices):
        imgs = [load_image(self.paths[i]) for i in indices]
        x = np.stack(imgs).astype(np.float32).transpose(0, 3, 1, 2)
        return standardize(x, self.channel_stats), self.y[indices]


def _validation_pass(net, data, batch_size):
    """(unclamped MSE, kappa of clamped-discretized scores)."""
    losses = []
    sizes = []
    scores = []
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        x, y = data.batch(idx)
        out = net.forward(x, train=False)
        loss, _ = mse_loss(out, y)
        losses.append(loss)
        sizes.append(len(idx))
        scores.append(out[:, 0])
    scores = np.concatenate(scores)
    val_loss = float(np.average(losses, weights=sizes))
    grades_true = np.rint(data.y[:, 0]).astype(np.int64)
    grades_pred = discretize(np.clip(scores, 0.0, 4.0))
    return val_loss, quadratic_weighted_kappa(grades_true, grades_pred)


# Auxiliary record names stored next to parameters in latest.ckpt.
_STATE_PREFIX = "state."
_EPOCH_KEY = "state.epoch"
_BEST_KEY = "state.best_kappa64"


def _pack_best(value: float) -> np.ndarray:
    # Exact float64 smuggled through the float32 record payload.
    return np.array([value], dtype=np.float64).view(np.float32)


def _unpack_best(arr: np.ndarray) -> float:
    return float(np.ascontiguousarray(arr, dtype=np.float32)
                 .view(np.float64)[0])


def _resume_state(out_dir, net, optimizer, digest):
    """Load latest.ckpt back into net and optimizer; return
    (start_epoch, best_kappa)."""
    ckpt_digest, records = read_records(Path(out_dir) / "latest.ckpt")
    if digest and ckpt_digest and ckpt_digest != digest:
        raise TrainingError(
            "resume checkpoint was written for a different architecture")
    param_names = {name for name, _ in net.parameters()}
    net.set_parameters({n: a for n, a in records.items()
                        if n in param_names})
    state = {n[len(_STATE_PREFIX):]: a for n, a in records.items()
             if n.startswith(_STATE_PREFIX)}
    if _EPOCH_KEY[len(_STATE_PREFIX):] not in state:
        raise TrainingError("resume checkpoint carries no epoch counter")
    start_epoch = int(state.pop("epoch")[0])
    best = _unpack_best(state.pop("best_kappa64"))
    optimizer.load_state(state)
    return start_epoch, best


def _run_training(net, optimizer, train_data, val_data, cfg: TrainConfig,
                  out_dir, digest: str, resume: bool):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history_path = out_dir / "history.csv"
    start_epoch = 0
    best_kappa = -np.inf
    history = TrainHistory()
    if resume:
        start_epoch, best_kappa = _resume_state(out_dir, net, optimizer,
                                                digest)
        if history_path.exists():
            history = TrainHistory.load(history_path)

    n = len(train_data)
    if n == 0:
        raise ConfigurationError("training set is empty")
    try:
        for epoch in range(start_epoch, cfg.total_epochs):
            t0 = time.perf_counter()
            lr = lr_at_epoch(cfg.schedule, epoch)
            rng = derive_rng(cfg.seed, "epoch", epoch)
            perm = rng.permutation(n)
            losses = []
            sizes = []
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                x, y = train_data.batch(idx)
                out = net.forward(x, train=True, rng=rng)
                loss, grad = mse_loss(out, y)
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite training loss at epoch {epoch}")
                net.backward(grad)
                optimizer.step(net.gradients(), lr)
                losses.append(loss)
                sizes.append(len(idx))
            train_loss = float(np.average(losses, weights=sizes))

            if val_data is not None and len(val_data):
                val_loss, val_kappa = _validation_pass(net, val_data,
                                                       cfg.batch_size)
                if val_kappa > best_kappa:
                    best_kappa = val_kappa
                    save_model(out_dir / "best.ckpt", net, digest=digest)
            else:
                val_loss = float("nan")
                val_kappa = float("nan")

            history.append(EpochRecord(
                epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                val_kappa=val_kappa, lr=lr,
                seconds=time.perf_counter() - t0))

            state = [(_STATE_PREFIX + name, arr)
                     for name, arr in optimizer.state_arrays()]
            state.append((_EPOCH_KEY,
                          np.array([epoch + 1], dtype=np.float32)))
            state.append((_BEST_KEY, _pack_best(best_kappa)))
            save_model(out_dir / "latest.ckpt", net, digest=digest,
                       extra_records=state)
            if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
                save_model(out_dir / f"epoch_{epoch + 1:04d}.ckpt", net,
                           digest=digest)
    finally:
        history.save(history_path)

    save_model(out_dir / "final.ckpt", net, digest=digest)
    if not (out_dir / "best.ckpt").exists():
        save_model(out_dir / "best.ckpt", net, digest=digest)
    return net, history


def train_main(net, train_data, val_data, cfg: TrainConfig, out_dir,
               digest: str = "", resume: bool = False):
    """Train the grading network with Nesterov-momentum SGD.

    Emits history.csv plus best.ckpt (highest validation kappa, first best
    kept), latest.ckpt (parameters + optimizer state each epoch, the resume
    point), and final.ckpt. A non-finite loss aborts with the previous
    epoch's checkpoints intact.
    """
    optimizer = SgdNesterov(net.parameters(), momentum=cfg.momentum,
                            weight_decay=cfg.weight_decay)
    return _run_training(net, optimizer, train_data, val_data, cfg, out_dir,
                         digest, resume)


def train_blend(net, descriptors, targets, cfg: TrainConfig, out_dir,
                val=None, digest: str = "", resume: bool = False):
    """Train the feature blender with Adam on descriptor/target arrays.

    ``val`` is an optional (descriptors, targets) pair; without it only
    latest.ckpt and final.ckpt are meaningful (best.ckpt mirrors final).
    """
    descriptors = np.asarray(descriptors, dtype=np.float32)
    expected = net.input_shape[0]
    if descriptors.ndim != 2 or descriptors.shape[1] != expected:
        raise ConfigurationError(
            f"descriptors have shape {descriptors.shape}, expected "
            f"(n, {expected})")
    train_data = ArrayDataset(descriptors, targets)
    val_data = ArrayDataset(*val) if val is not None else None
    optimizer = Adam(net.parameters(), weight_decay=cfg.weight_decay)
    return _run_training(net, optimizer, train_data, val_data, cfg, out_dir,
                         digest, resume)
