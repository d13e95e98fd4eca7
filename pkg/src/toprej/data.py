"""Datasets, feature CSV I/O, stratified folds, batch sampling and the
synthetic outlier-injection generator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Malformed input data."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``X`` (N, D), boolean ``y`` (True = positive), stable ``ids``."""

    X: np.ndarray
    y: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=bool)
        ids = np.asarray(self.ids, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],) or ids.shape != y.shape:
            raise DataError("inconsistent dataset shapes")
        if not np.all(np.isfinite(X)):
            raise DataError("features must be finite")
        if np.unique(ids).size != ids.size:
            raise DataError("sample ids must be unique")
        for name, arr in (("X", X), ("y", y), ("ids", ids)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, X, y, ids=None) -> "Dataset":
        X = np.asarray(X, dtype=np.float64)
        if ids is None:
            ids = np.arange(X.shape[0])
        return cls(X, y, ids)

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def pos_index(self) -> np.ndarray:
        return np.flatnonzero(self.y)

    @property
    def neg_index(self) -> np.ndarray:
        return np.flatnonzero(~self.y)

    @property
    def n_pos(self) -> int:
        return int(self.y.sum())

    @property
    def n_neg(self) -> int:
        return len(self) - self.n_pos

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.X[index], self.y[index], self.ids[index])


def load_csv(path) -> Dataset:
    """Read ``label,f1,...,fD`` rows; an optional header must start with ``label,``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such data file: {path}")
    rows, labels = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if lineno == 1 and row[0].strip().lower() == "label":
                continue
            if len(row) < 2:
                raise DataError(f"{path}: row {lineno} has no features")
            label = row[0].strip()
            if label not in ("0", "1"):
                raise DataError(f"{path}: row {lineno}: unknown label {label!r} (expected 0 or 1)")
            try:
                feats = [float(v) for v in row[1:]]
            except ValueError:
                raise DataError(f"{path}: row {lineno}: non-numeric feature") from None
            if rows and len(feats) != len(rows[0]):
                raise DataError(
                    f"{path}: row {lineno}: ragged row with {len(feats)} features, expected {len(rows[0])}"
                )
            if not all(np.isfinite(feats)):
                raise DataError(f"{path}: row {lineno}: non-finite feature")
            rows.append(feats)
            labels.append(label == "1")
    if not rows:
        raise DataError(f"{path}: empty data file")
    return Dataset.from_arrays(np.array(rows), np.array(labels))


def save_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"f{i + 1}" for i in range(ds.dim)])
        for label, x in zip(ds.y, ds.X):
            w.writerow([int(label)] + [repr(float(v)) for v in x])


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: np.ndarray  # fold index per dataset row
    seed: int

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignment == fold)
        train = np.flatnonzero(self.assignment != fold)
        return train, test


def stratified_folds(ds: Dataset, k: int, seed: int) -> FoldPlan:
    """Seeded stratified k-fold assignment; per-fold class counts differ by at most one."""
    if k < 2:
        raise DataError("need at least two folds")
    if min(ds.n_pos, ds.n_neg) < k:
        raise DataError(
            f"each class needs at least k={k} samples (positives={ds.n_pos}, negatives={ds.n_neg})"
        )
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(ds), dtype=np.int64)
    offset = 0
    for index in (ds.pos_index, ds.neg_index):
        perm = rng.permutation(index)
        assignment[perm] = (np.arange(perm.size) + offset) % k
        # continue the round robin so fold totals stay balanced too
        offset = (offset + perm.size) % k
    return FoldPlan(k, assignment, seed)


def stratified_split(ds: Dataset, index, frac: float, rng: np.random.Generator):
    """Split ``index`` into (train, holdout) keeping each class's share of ``frac``."""
    index = np.asarray(index)
    train, hold = [], []
    for cls in (True, False):
        members = rng.permutation(index[ds.y[index] == cls])
        n_hold = max(1, int(round(frac * members.size)))
        if members.size - n_hold < 1:
            raise DataError("class too small for a validation split")
        hold.append(members[:n_hold])
        train.append(members[n_hold:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(hold))


def sample_batch(ds: Dataset, n_pos: int = 5, n_neg: int = 45, rng=None):
    """Row indices of ``n_pos`` positives and ``n_neg`` negatives, drawn without replacement."""
    rng = np.random.default_rng(rng)
    pos, neg = ds.pos_index, ds.neg_index
    if n_pos > pos.size or n_neg > neg.size:
        raise DataError(
            f"batch needs {n_pos} positives and {n_neg} negatives, "
            f"dataset has {pos.size} and {neg.size}"
        )
    return rng.choice(pos, n_pos, replace=False), rng.choice(neg, n_neg, replace=False)


@dataclass(frozen=True)
class SynthConfig:
    n_pos: int = 300
    n_neg: int = 300
    dim: int = 10
    separation: float = 3.0
    outlier_rate: float = 0.05
    outlier_shift: float | None = None  # None: move outliers onto the positive mean
    seed: int = 0

    def __post_init__(self):
        if self.n_pos < 1 or self.n_neg < 1 or self.dim < 1:
            raise DataError("counts and dimension must be positive")
        if not 0.0 <= self.outlier_rate < 1.0:
            raise DataError("outlier_rate must lie in [0, 1)")
        if self.separation <= 0:
            raise DataError("separation must be positive")

    @property
    def shift(self) -> float:
        return self.separation if self.outlier_shift is None else float(self.outlier_shift)


def synth_generate(cfg: SynthConfig):
    """Two unit-covariance Gaussians ``separation`` apart along the first axis.

    A fraction ``outlier_rate`` of the *training* negatives is moved by
    ``shift`` towards the positive mean.  The test set is drawn clean.
    Returns ``(train, test, outlier_ids)``; ids of the test set continue after
    those of the training set.
    """
    rng = np.random.default_rng(cfg.seed)
    mu = np.zeros(cfg.dim)
    mu[0] = cfg.separation

    def draw():
        Xp = rng.standard_normal((cfg.n_pos, cfg.dim)) + mu
        Xn = rng.standard_normal((cfg.n_neg, cfg.dim))
        return np.vstack([Xp, Xn]), np.r_[np.ones(cfg.n_pos, bool), np.zeros(cfg.n_neg, bool)]

    Xtr, ytr = draw()
    Xte, yte = draw()
    n_out = int(round(cfg.outlier_rate * cfg.n_neg))
    picked = cfg.n_pos + np.sort(rng.choice(cfg.n_neg, n_out, replace=False))
    Xtr[picked, 0] += cfg.shift
    n = Xtr.shape[0]
    train = Dataset.from_arrays(Xtr, ytr)
    test = Dataset.from_arrays(Xte, yte, ids=np.arange(n, n + Xte.shape[0]))
    return train, test, train.ids[picked]


def write_outlier_flags(train: Dataset, outlier_ids, path) -> None:
    flagged = set(np.asarray(outlier_ids).tolist())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "is_injected"])
        for i in train.ids.tolist():
            w.writerow([i, int(i in flagged)])
