"""Dataset manifests: the CSV contract every pipeline stage speaks.

Schema: ``image_path,patient_id,eye,grade`` with eye in {left, right,
unknown} and grade in {0..4}, or -1 for unlabeled rows. Image ids are path
stems and must be unique across a manifest so they can key feature files and
prediction CSVs.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigurationError, DataError
from .rng import derive_rng

__all__ = ["ManifestRow", "DatasetManifest", "load_manifest", "save_manifest",
           "split_dataset", "grade_distribution", "GRADES"]

GRADES = (0, 1, 2, 3, 4)
_EYES = ("left", "right", "unknown")
_HEADER = ["image_path", "patient_id", "eye", "grade"]


@dataclass(frozen=True)
class ManifestRow:
    image_path: str
    patient_id: str
    eye: str
    grade: int

    @property
    def image_id(self) -> str:
        return Path(self.image_path).stem


class DatasetManifest:
    def __init__(self, rows):
        self.rows = list(rows)
        ids = [r.image_id for r in self.rows]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate image ids: {dupes[:5]}")

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def ids(self):
        return [r.image_id for r in self.rows]

    def by_grade(self):
        """grade -> list of rows, labeled grades only."""
        out = {g: [] for g in GRADES}
        for r in self.rows:
            if r.grade >= 0:
                out[r.grade].append(r)
        return out

    def labeled(self):
        return DatasetManifest([r for r in self.rows if r.grade >= 0])


def load_manifest(path, check_files=False) -> DatasetManifest:
    """Parse and validate a manifest CSV. Errors carry the line number."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    rows = []
    seen_paths = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _HEADER:
            raise DataError(
                f"{path}:1: expected header {','.join(_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            image_path, patient_id, eye, grade_text = (c.strip() for c in row)
            if not image_path:
                raise DataError(f"{path}:{lineno}: empty image_path")
            if image_path in seen_paths:
                raise DataError(f"{path}:{lineno}: duplicate path {image_path!r}")
            seen_paths.add(image_path)
            if eye not in _EYES:
                raise DataError(
                    f"{path}:{lineno}: eye must be one of {_EYES}, got {eye!r}")
            try:
                grade = int(grade_text)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: grade must be an integer, got {grade_text!r}")
            if grade != -1 and grade not in GRADES:
                raise DataError(
                    f"{path}:{lineno}: grade must be 0..4 or -1, got {grade}")
            if check_files and not Path(image_path).exists():
                raise DataError(f"{path}:{lineno}: missing file {image_path}")
            rows.append(ManifestRow(image_path, patient_id, eye, grade))
    return DatasetManifest(rows)


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADER)
        for r in manifest:
            writer.writerow([r.image_path, r.patient_id, r.eye, r.grade])


def split_dataset(manifest: DatasetManifest, validation_per_class: int,
                  seed: int):
    """Hold out exactly ``validation_per_class`` images per grade.

    Sampling is seeded and patient-disjoint: all images of one patient land
    on the same side. Patients are drawn per class in shuffled order,
    skipping any whose images would overshoot an exact class quota; if the
    quotas cannot be met exactly the split fails rather than approximating.
    Rows with empty patient_id count as their own singleton patients.
    """
    labeled = manifest.labeled()
    by_grade = labeled.by_grade()
    for g in GRADES:
        if by_grade[g] and len(by_grade[g]) <= validation_per_class:
            raise ConfigurationError(
                f"grade {g} has {len(by_grade[g])} images; needs more than "
                f"validation_per_class={validation_per_class}")

    patients = {}
    for i, row in enumerate(labeled):
        key = row.patient_id if row.patient_id else f"__solo_{i}"
        patients.setdefault(key, []).append(row)

    rng = derive_rng(seed, "split")
    order = sorted(patients.keys())
    rng.shuffle(order)

    need = {g: (validation_per_class if by_grade[g] else 0) for g in GRADES}
    val_rows = []
    val_patients = set()
    for key in order:
        group = patients[key]
        counts = {g: sum(1 for r in group if r.grade == g) for g in GRADES}
        if any(counts[g] > need[g] for g in GRADES):
            continue
        if not any(counts[g] for g in GRADES):
            continue
        val_patients.add(key)
        val_rows.extend(group)
        for g in GRADES:
            need[g] -= counts[g]
        if not any(need.values()):
            break
    if any(need.values()):
        missing = {g: n for g, n in need.items() if n}
        raise ConfigurationError(
            f"cannot hold out exactly {validation_per_class} per grade with "
            f"patient-disjoint sampling; short by {missing}")

    val_ids = {r.image_id for r in val_rows}
    train_rows = [r for r in labeled if r.image_id not in val_ids]
    return DatasetManifest(train_rows), DatasetManifest(val_rows)


def grade_distribution(manifest: DatasetManifest):
    """Per-grade counts and percentages over labeled rows."""
    by_grade = manifest.labeled().by_grade()
    total = sum(len(v) for v in by_grade.values())
    counts = {g: len(by_grade[g]) for g in GRADES}
    percent = {g: (100.0 * counts[g] / total if total else 0.0) for g in GRADES}
    return counts, percent, total
