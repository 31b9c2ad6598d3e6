"""Tabular classification data: loading, min-max scaling, splits and bagging draws."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Labelled sample matrix.

    ``labels`` are class indices in ``1..n_classes``; ``row_ids`` track the
    rows of the table the samples came from so splits can be audited.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_ids: tuple = ()
    class_names: tuple = ()
    row_ids: np.ndarray = None
    n_classes: int = 0

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        if y.shape != (X.shape[0],):
            raise DatasetError("labels must have one entry per row")
        if not np.all(np.isfinite(X)):
            raise DatasetError("non-finite feature values")
        n_classes = self.n_classes or (int(y.max()) if y.size else 0)
        if y.size and (y.min() < 1 or y.max() > n_classes):
            raise DatasetError("labels must lie in 1..C")
        row_ids = self.row_ids
        if row_ids is None:
            row_ids = np.arange(X.shape[0])
        ids = self.feature_ids or tuple(f"f{j}" for j in range(X.shape[1]))
        names = self.class_names or tuple(str(c) for c in range(1, n_classes + 1))
        X.setflags(write=False)
        y.setflags(write=False)
        row_ids = np.asarray(row_ids, dtype=np.int64)
        row_ids.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "row_ids", row_ids)
        object.__setattr__(self, "feature_ids", tuple(ids))
        object.__setattr__(self, "class_names", tuple(names))
        object.__setattr__(self, "n_classes", int(n_classes))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes + 1)[1:]

    def subset(self, rows=None, columns=None) -> "Dataset":
        X, y, r = self.features, self.labels, self.row_ids
        ids = self.feature_ids
        if rows is not None:
            rows = np.asarray(rows, dtype=np.int64)
            X, y, r = X[rows], y[rows], r[rows]
        if columns is not None:
            columns = np.asarray(columns, dtype=np.int64)
            X = X[:, columns]
            ids = tuple(ids[j] for j in columns)
        return Dataset(X, y, ids, self.class_names, r, self.n_classes)

    def with_features(self, X: np.ndarray, feature_ids=()) -> "Dataset":
        return Dataset(X, self.labels, feature_ids, self.class_names, self.row_ids, self.n_classes)


@dataclass(frozen=True)
class NormStats:
    minimum: np.ndarray
    maximum: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        span = self.maximum - self.minimum
        safe = np.where(span > 0, span, 1.0)
        Z = (np.asarray(X, dtype=np.float64) - self.minimum) / safe
        Z[:, span <= 0] = 0.0
        return np.clip(Z, 0.0, 1.0)


@dataclass(frozen=True)
class BagSample:
    sample_indices: np.ndarray
    feature_indices: np.ndarray
    seed: int = 0


def _parse_float(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def _resolve_label_column(label_col, header, width):
    if isinstance(label_col, str):
        stripped = label_col.strip()
        if stripped.lstrip("-").isdigit():
            label_col = int(stripped)
        elif header is None:
            raise DatasetError(f"label column {label_col!r} given by name but table has no header")
        elif stripped not in header:
            raise DatasetError(f"label column {label_col!r} not in header")
        else:
            return header.index(stripped)
    idx = int(label_col)
    if idx < 0:
        idx += width
    if not 0 <= idx < width:
        raise DatasetError(f"label column {label_col} out of range for {width} columns")
    return idx


def load_table(path, label_col=-1) -> Dataset:
    """Read a comma-delimited table with one label column.

    ``label_col`` is a 0-based position (negative counts from the end) or a
    header name. A first row containing any non-numeric cell is taken as a
    header. Labels may be numeric or strings; they are remapped to ``1..C``
    following their sorted order.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such dataset file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError("empty table")
    header = None
    if any(_parse_float(c) is None for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DatasetError("empty table")
    width = len(rows[0])
    if width < 2:
        raise DatasetError("table needs at least one feature column and a label column")
    lab = _resolve_label_column(label_col, header, width)
    feat_cols = [j for j in range(width) if j != lab]

    X = np.empty((len(rows), width - 1))
    raw_labels = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DatasetError(f"row {i + 1} has {len(row)} cells, expected {width}")
        for k, j in enumerate(feat_cols):
            v = _parse_float(row[j])
            if v is None:
                raise DatasetError(f"non-numeric feature cell {row[j]!r} at row {i + 1}, column {j}")
            X[i, k] = v
        raw_labels.append(row[lab].strip())

    numeric = [_parse_float(v) for v in raw_labels]
    if all(v is not None for v in numeric):
        keys = sorted(set(numeric))
        lookup = {v: c for c, v in enumerate(keys, start=1)}
        y = np.array([lookup[v] for v in numeric])
        names = tuple(f"{v:g}" for v in keys)
    else:
        keys = sorted(set(raw_labels))
        lookup = {v: c for c, v in enumerate(keys, start=1)}
        y = np.array([lookup[v] for v in raw_labels])
        names = tuple(keys)
    if len(keys) < 2:
        raise DatasetError("single-class table")
    ids = tuple(header[j] for j in feat_cols) if header else tuple(f"f{j}" for j in feat_cols)
    return Dataset(X, y, ids, names, None, len(keys))


def normalize_minmax(train: Dataset, test: Dataset | None = None):
    """Scale to [0, 1] with statistics from ``train`` only.

    Constant training columns map to 0; test values are clipped into range.
    Returns ``(train, test, stats)``; ``test`` is ``None`` when not given.
    """
    if train.n_samples == 0:
        raise DatasetError("cannot normalise an empty training set")
    stats = NormStats(train.features.min(axis=0), train.features.max(axis=0))
    new_train = train.with_features(stats.apply(train.features), train.feature_ids)
    new_test = None
    if test is not None:
        new_test = test.with_features(stats.apply(test.features), test.feature_ids)
    return new_train, new_test, stats


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_holdout_split(data: Dataset, test_fraction: float, seed: int):
    """Per-class random hold-out; class ``c`` contributes round(N_c * fraction) test rows."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in range(1, data.n_classes + 1):
        members = np.flatnonzero(data.labels == c)
        n_test = _round_half_up(len(members) * test_fraction)
        if n_test >= len(members):
            n_test = len(members) - 1
        if n_test <= 0:
            if len(members):
                warnings.warn(f"class {c} has {len(members)} sample(s); kept entirely in train",
                              stacklevel=2)
            continue
        test_idx.append(rng.permutation(members)[:n_test])
    test_idx = np.sort(np.concatenate(test_idx)) if test_idx else np.empty(0, dtype=np.int64)
    mask = np.ones(data.n_samples, dtype=bool)
    mask[test_idx] = False
    return data.subset(np.flatnonzero(mask)), data.subset(test_idx)


def _floor_count(frac: float, total: int) -> int:
    # tolerate representation error such as 0.7 * 10 = 7.000000000000001
    return int(math.floor(frac * total + 1e-9))


def _stratified_counts(counts: np.ndarray, m: int) -> np.ndarray:
    """Largest-remainder allocation of ``m`` draws proportional to ``counts``."""
    total = counts.sum()
    target = m * counts / total
    alloc = np.minimum(np.floor(target).astype(np.int64), counts)
    remainder = target - alloc
    order = np.lexsort((np.arange(len(counts)), -remainder))
    for c in order:
        if alloc.sum() >= m:
            break
        if alloc[c] < counts[c]:
            alloc[c] += 1
    return alloc


def bagging_sample(data: Dataset, delta_rows: float, delta_features: float, seed: int,
                   max_attempts: int = 10) -> BagSample:
    """Stratified row subsample without replacement plus a random feature subset."""
    if not (0.0 < delta_rows <= 1.0 and 0.0 < delta_features <= 1.0):
        raise ValueError("sampling ratios must lie in (0, 1]")
    m = _floor_count(delta_rows, data.n_samples)
    f = _floor_count(delta_features, data.n_features)
    if m < 1 or f < 1:
        raise ValueError("sampling ratio leaves no rows or no features")
    counts = data.class_counts()
    for attempt in range(max_attempts):
        s = seed + attempt
        rng = np.random.default_rng(s)
        alloc = _stratified_counts(counts, m)
        rows = []
        for c in range(1, data.n_classes + 1):
            if alloc[c - 1]:
                members = np.flatnonzero(data.labels == c)
                rows.append(rng.choice(members, size=alloc[c - 1], replace=False))
        rows = np.sort(np.concatenate(rows))
        if len(np.unique(data.labels[rows])) >= 2:
            feats = np.sort(rng.choice(data.n_features, size=f, replace=False))
            return BagSample(rows, feats, s)
    raise DatasetError(f"bagging sample kept fewer than 2 classes after {max_attempts} attempts")


def make_ad_surrogate(seed: int = 0, n_per_class: int = 30, n_features: int = 32,
                      separation: float = 0.2) -> Dataset:
    """Small three-class Gaussian stand-in with the shape of the private AD data.

    Only meant to exercise code paths on a 90 x 32 x 3 problem; ``separation``
    is tuned so a grid-searched RBF SVM on the raw features averages about 55%
    over hold-out splits.
    """
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=separation, size=(3, n_features))
    X = np.concatenate([rng.normal(loc=c, size=(n_per_class, n_features)) for c in centers])
    y = np.repeat(np.arange(1, 4), n_per_class)
    return Dataset(X, y, n_classes=3)
