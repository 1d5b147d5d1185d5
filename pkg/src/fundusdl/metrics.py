"""Evaluation: discretization, weighted kappa, AUC, F-score, rate splits.

All functions are pure. The report carries every figure under an explicit
name (for instance AUC is computed for both binarizations) so nothing has
to be inferred from context.
"""

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, MetricError

__all__ = ["GRADE_THRESHOLDS", "Binarization", "HEALTHY_VS_SICK",
           "LOW_VS_HIGH", "BINARIZATIONS", "discretize",
           "quadratic_weighted_kappa", "kappa_from_confusion", "roc_auc",
           "sensitivity_specificity", "f_score", "confusion_matrix",
           "EvalReport", "evaluate", "evaluate_files", "load_predictions",
           "save_predictions"]

GRADE_THRESHOLDS = (0.5, 1.5, 2.5, 3.5)
_N_GRADES = 5


@dataclass(frozen=True)
class Binarization:
    """A named split of the 5 grades into negative/positive sets."""
    name: str
    positive_grades: tuple

    def __post_init__(self):
        pos = set(self.positive_grades)
        if not pos or not pos.issubset(range(_N_GRADES)):
            raise MetricError(f"invalid positive grade set {pos}")
        if len(pos) == _N_GRADES:
            raise MetricError("positive set covers every grade")

    def positives(self, grades: np.ndarray) -> np.ndarray:
        return np.isin(grades, tuple(self.positive_grades))


HEALTHY_VS_SICK = Binarization("healthy_vs_sick", (1, 2, 3, 4))
LOW_VS_HIGH = Binarization("low_vs_high", (2, 3, 4))
BINARIZATIONS = (HEALTHY_VS_SICK, LOW_VS_HIGH)


def discretize(scores) -> np.ndarray:
    """Map real-valued severity scores onto grades 0..4.

    A score's grade is the number of thresholds at or below it, so each
    boundary value maps upward (0.5 becomes grade 1).
    """
    arr = np.asarray(scores, dtype=np.float64)
    if np.isnan(arr).any():
        raise MetricError("cannot discretize NaN scores")
    grades = np.searchsorted(GRADE_THRESHOLDS, arr, side="right")
    return grades.astype(np.int64)


def _as_grades(values, name) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 1 or arr.size == 0:
        raise MetricError(f"{name} must be a non-empty 1-d array")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise MetricError(f"{name} contains non-integer grades")
        arr = arr.astype(np.int64)
    if arr.min() < 0 or arr.max() >= _N_GRADES:
        raise MetricError(f"{name} grades must lie in 0..4")
    return arr.astype(np.int64)


def confusion_matrix(y_true, y_pred) -> np.ndarray:
    """5x5 matrix; rows index truth, columns prediction."""
    t = _as_grades(y_true, "y_true")
    p = _as_grades(y_pred, "y_pred")
    if t.shape != p.shape:
        raise MetricError(f"length mismatch: {t.shape} vs {p.shape}")
    mat = np.zeros((_N_GRADES, _N_GRADES), dtype=np.int64)
    np.add.at(mat, (t, p), 1)
    return mat


def kappa_from_confusion(confusion: np.ndarray) -> float:
    """Quadratic weighted kappa from a 5x5 contingency matrix."""
    observed = np.asarray(confusion, dtype=np.float64)
    n = observed.sum()
    if n < 2:
        raise MetricError("kappa needs at least 2 samples")
    idx = np.arange(_N_GRADES, dtype=np.float64)
    weights = (idx[:, None] - idx[None, :]) ** 2 / (_N_GRADES - 1) ** 2
    expected = np.outer(observed.sum(axis=1), observed.sum(axis=0)) / n
    denom = (weights * expected).sum()
    if denom == 0.0:
        warnings.warn("zero expected disagreement (identical constant "
                      "labels); kappa defined as 1.0", RuntimeWarning,
                      stacklevel=2)
        return 1.0
    return float(1.0 - (weights * observed).sum() / denom)


def quadratic_weighted_kappa(y_true, y_pred) -> float:
    """Agreement between graded vectors, penalizing squared grade distance."""
    return kappa_from_confusion(confusion_matrix(y_true, y_pred))


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    _, inverse, counts = np.unique(values, return_inverse=True,
                                   return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts
    mean_rank = (starts + 1 + ends) / 2.0
    return mean_rank[inverse]


def roc_auc(scores, labels) -> float:
    """Rank statistic: P(score_pos > score_neg) + half the tie mass."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricError("scores and labels must be matching 1-d arrays")
    if np.isnan(s).any():
        raise MetricError("cannot rank NaN scores")
    n_pos = int(y.sum())
    n_neg = int(len(y) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined with a single class")
    ranks = _average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def sensitivity_specificity(y_true, y_pred, split: Binarization):
    """(sensitivity, specificity) after collapsing grades through a split."""
    t = split.positives(_as_grades(y_true, "y_true"))
    p = split.positives(_as_grades(y_pred, "y_pred"))
    if t.shape != p.shape:
        raise MetricError(f"length mismatch: {t.shape} vs {p.shape}")
    tp = int(np.sum(t & p))
    fn = int(np.sum(t & ~p))
    tn = int(np.sum(~t & ~p))
    fp = int(np.sum(~t & p))
    if tp + fn == 0 or tn + fp == 0:
        raise MetricError(
            f"split {split.name!r}: a class is empty in the truth labels, "
            f"rates are undefined")
    return tp / (tp + fn), tn / (tn + fp)


def f_score(y_true, y_pred) -> float:
    """Macro F1 over grades; a grade absent from both vectors is skipped."""
    t = _as_grades(y_true, "y_true")
    p = _as_grades(y_pred, "y_pred")
    if t.shape != p.shape:
        raise MetricError(f"length mismatch: {t.shape} vs {p.shape}")
    scores = []
    for g in range(_N_GRADES):
        in_t = t == g
        in_p = p == g
        if not in_t.any() and not in_p.any():
            continue
        tp = int(np.sum(in_t & in_p))
        precision = tp / in_p.sum() if in_p.any() else 0.0
        recall = tp / in_t.sum() if in_t.any() else 0.0
        if precision + recall == 0.0:
            scores.append(0.0)
        else:
            scores.append(2 * precision * recall / (precision + recall))
    return float(np.mean(scores))


@dataclass(frozen=True)
class EvalReport:
    """Everything reported for one prediction set, with a stable schema."""
    total: int
    confusion: tuple           # 5x5, rows truth
    kappa: float
    f_score: float
    auc: dict                  # split name -> AUC of the continuous score
    sensitivity: dict          # split name -> rate (discretized grades)
    specificity: dict
    per_grade_true: tuple
    per_grade_pred: tuple

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "confusion": [list(row) for row in self.confusion],
            "kappa": self.kappa,
            "f_score": self.f_score,
            "auc": dict(self.auc),
            "sensitivity": dict(self.sensitivity),
            "specificity": dict(self.specificity),
            "per_grade_true": list(self.per_grade_true),
            "per_grade_pred": list(self.per_grade_pred),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [f"samples: {self.total}",
                 f"kappa:   {self.kappa:+.4f}",
                 f"f_score: {self.f_score:.4f}"]
        for split in sorted(self.auc):
            lines.append(f"{split}: auc {self.auc[split]:.4f}  "
                         f"sensitivity {self.sensitivity[split]:.4f}  "
                         f"specificity {self.specificity[split]:.4f}")
        lines.append("confusion (rows=truth, cols=prediction):")
        header = "      " + "".join(f"{f'p{g}':>7s}" for g in range(_N_GRADES))
        lines.append(header)
        for g, row in enumerate(self.confusion):
            lines.append(f"  t{g}  " + "".join(f"{v:>7d}" for v in row))
        return "\n".join(lines) + "\n"


def evaluate(scores, y_true) -> EvalReport:
    """Full report from continuous scores and true grades (aligned arrays)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    t = _as_grades(y_true, "y_true")
    if s.shape != t.shape:
        raise MetricError(f"length mismatch: {s.shape} vs {t.shape}")
    pred = discretize(s)
    confusion = confusion_matrix(t, pred)
    auc = {}
    sens = {}
    spec = {}
    for split in BINARIZATIONS:
        auc[split.name] = roc_auc(s, split.positives(t))
        sn, sp = sensitivity_specificity(t, pred, split)
        sens[split.name] = sn
        spec[split.name] = sp
    return EvalReport(
        total=int(len(t)),
        confusion=tuple(map(tuple, confusion.tolist())),
        kappa=kappa_from_confusion(confusion),
        f_score=f_score(t, pred),
        auc=auc, sensitivity=sens, specificity=spec,
        per_grade_true=tuple(np.bincount(t, minlength=_N_GRADES).tolist()),
        per_grade_pred=tuple(np.bincount(pred, minlength=_N_GRADES).tolist()),
    )


PREDICTIONS_HEADER = ["image_id", "score"]


def save_predictions(rows, path) -> None:
    """Write (image_id, score) pairs as CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTIONS_HEADER)
        for image_id, score in rows:
            writer.writerow([image_id, repr(float(score))])


def load_predictions(path) -> dict:
    """Read a predictions CSV into {image_id: score}."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PREDICTIONS_HEADER:
            raise DataError(f"{path}: expected header {PREDICTIONS_HEADER}, "
                            f"got {header}")
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields")
            image_id, score = rec
            if image_id in out:
                raise DataError(f"{path}:{lineno}: duplicate id {image_id!r}")
            try:
                out[image_id] = float(score)
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad score "
                                f"{score!r}") from exc
    return out


def evaluate_files(predictions_path, manifest) -> EvalReport:
    """Evaluate a predictions CSV against a labeled manifest.

    Every manifest image needs a prediction and vice versa; offenders are
    listed in the error.
    """
    preds = load_predictions(predictions_path)
    truth = {row.image_id: row.grade for row in manifest}
    missing = sorted(set(truth) - set(preds))
    if missing:
        raise DataError(f"missing predictions for {len(missing)} images: "
                        f"{missing[:5]}...")
    unknown = sorted(set(preds) - set(truth))
    if unknown:
        raise DataError(f"predictions for unknown images: {unknown[:5]}...")
    ids = sorted(truth)
    scores = np.array([preds[i] for i in ids])
    grades = np.array([truth[i] for i in ids])
    return evaluate(scores, grades)
