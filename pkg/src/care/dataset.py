"""Data ingestion, validation and synthetic data generation."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import DataError, ParameterError

ColumnSelector = Union[int, str]


@dataclass(frozen=True)
class Dataset:
    """An n x d matrix of finite points with optional 0/1 outlier labels."""

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    feature_names: Optional[tuple] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True)
        if points.ndim != 2:
            raise DataError(f"points must be a 2-D matrix, got shape {points.shape}")
        n, d = points.shape
        if n < 2 or d < 1:
            raise DataError(f"need at least 2 rows and 1 column, got {n}x{d}")
        if not np.all(np.isfinite(points)):
            r, c = np.argwhere(~np.isfinite(points))[0]
            raise DataError(f"non-finite value at row {r + 1}, column {c + 1}")
        points.setflags(write=False)
        object.__setattr__(self, "points", points)

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise DataError(f"labels must have length {n}, got shape {labels.shape}")
            if not np.all((labels == 0) | (labels == 1)):
                raise DataError("labels must be 0 or 1")
            labels = labels.astype(np.int8)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

        if self.feature_names is not None:
            names = tuple(str(x) for x in self.feature_names)
            if len(names) != d:
                raise DataError(f"expected {d} feature names, got {len(names)}")
            object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_csv(
    path,
    label_column: Optional[ColumnSelector] = None,
    delimiter: str = ",",
    positive_label: Optional[str] = None,
) -> Dataset:
    """Read a numeric table into a :class:`Dataset`.

    Args:
        path: CSV file. A first line containing a non-numeric feature cell is
            treated as a header.
        label_column: column holding 0/1 labels, as a 0-based index (negative
            counts from the end, so ``-1`` is the last column) or a header name.
            ``None`` means the file carries no labels.
        delimiter: field separator.
        positive_label: when given, label cells are compared as text against
            this value (match -> 1, anything else -> 0) instead of parsed as 0/1.

    Raises:
        DataError: unreadable file, ragged rows, non-numeric or non-finite cells.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            raw = [(i + 1, row) for i, row in enumerate(csv.reader(fh, delimiter=delimiter))]
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    rows = [(lineno, [c.strip() for c in row]) for lineno, row in raw if any(c.strip() for c in row)]
    if not rows:
        raise DataError(f"{path} contains no data")

    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(f"ragged row at line {lineno}: expected {width} fields, got {len(row)}")

    label_idx = None
    if isinstance(label_column, int):
        if not -width <= label_column < width:
            raise DataError(f"label column {label_column} out of range for {width} columns")
        label_idx = label_column % width

    first = rows[0][1]
    header = None
    if isinstance(label_column, str):
        if label_column not in first:
            raise DataError(f"label column {label_column!r} not found in header")
        header = first
        label_idx = first.index(label_column)
    else:
        checked = [c for j, c in enumerate(first) if j != label_idx or positive_label is None]
        if not all(_is_number(c) for c in checked):
            header = first
    if header is not None:
        rows = rows[1:]
        if not rows:
            raise DataError(f"{path} has a header but no data rows")

    feature_cols = [j for j in range(width) if j != label_idx]
    if not feature_cols:
        raise DataError("no feature columns left after removing the label column")

    points = np.empty((len(rows), len(feature_cols)), dtype=np.float64)
    labels = np.empty(len(rows), dtype=np.int8) if label_idx is not None else None
    for r, (lineno, row) in enumerate(rows):
        for c, j in enumerate(feature_cols):
            try:
                points[r, c] = float(row[j])
            except ValueError:
                raise DataError(
                    f"non-numeric value {row[j]!r} at row {lineno}, column {j + 1}"
                ) from None
        if labels is not None:
            cell = row[label_idx]
            if positive_label is not None:
                labels[r] = 1 if cell == positive_label else 0
                continue
            try:
                value = float(cell)
            except ValueError:
                raise DataError(
                    f"non-numeric label {cell!r} at row {lineno}, column {label_idx + 1}"
                ) from None
            if value not in (0.0, 1.0):
                raise DataError(f"label {cell!r} at row {lineno} is not 0 or 1")
            labels[r] = int(value)

    bad = np.argwhere(~np.isfinite(points))
    if bad.size:
        r, c = bad[0]
        raise DataError(f"non-finite value at row {rows[r][0]}, column {feature_cols[c] + 1}")

    names = [header[j] for j in feature_cols] if header is not None else None
    return Dataset(points, labels, names)


def write_csv(dataset: Dataset, path, delimiter: str = ",") -> None:
    """Write points (and labels as the last column) with round-trip precision."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if dataset.feature_names is not None:
            head = list(dataset.feature_names)
            if dataset.labels is not None:
                head.append("label")
            writer.writerow(head)
        for i, row in enumerate(dataset.points):
            out = [repr(float(v)) for v in row]
            if dataset.labels is not None:
                out.append(str(int(dataset.labels[i])))
            writer.writerow(out)


# --------------------------------------------------------------------------
# Synthetic data for the bias/variance study
# --------------------------------------------------------------------------

OUTLIER_MODELS = ("uniform", "powerlaw")


@dataclass(frozen=True)
class SyntheticBVSpec:
    """Generator settings for training/test sets of mixture inliers plus outliers.

    When ``means`` is None, ``n_components`` means are drawn uniformly from
    ``[-mean_range, mean_range]^dim`` using the spec seed. ``covariances`` of
    None means identity covariance for every component.
    """

    dim: int = 20
    n_components: int = 3
    means: Optional[tuple] = None
    covariances: Optional[tuple] = None
    weights: Optional[tuple] = None
    mean_range: float = 5.0
    outlier_model: str = "uniform"
    pareto_shape: float = 1.5
    box_inflation: float = 2.0
    train_size: int = 210
    train_outliers: int = 10
    test_size: int = 1000
    test_outliers: Optional[int] = None
    num_train_sets: int = 5
    num_test_sets: int = 10
    seed: int = 0

    def __post_init__(self):
        for name in ("dim", "n_components", "train_size", "test_size", "num_train_sets", "num_test_sets"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if not 0 < self.train_outliers < self.train_size:
            raise ParameterError("train_outliers must satisfy 0 < train_outliers < train_size")
        if self.test_outliers is not None and not 0 <= self.test_outliers < self.test_size:
            raise ParameterError("test_outliers must satisfy 0 <= test_outliers < test_size")
        if self.outlier_model not in OUTLIER_MODELS:
            raise ParameterError(f"outlier_model must be one of {OUTLIER_MODELS}")
        if self.pareto_shape <= 0 or self.box_inflation <= 0 or self.mean_range <= 0:
            raise ParameterError("pareto_shape, box_inflation and mean_range must be positive")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.n_components,) or np.any(w < 0):
                raise ParameterError("weights must be n_components nonnegative values")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ParameterError(f"mixture weights sum to {w.sum()!r}, not 1")
        if self.means is not None and np.shape(self.means) != (self.n_components, self.dim):
            raise ParameterError("means must have shape (n_components, dim)")
        if self.covariances is not None:
            covs = np.asarray(self.covariances, dtype=float)
            if covs.shape != (self.n_components, self.dim, self.dim):
                raise ParameterError("covariances must have shape (n_components, dim, dim)")
            for c in covs:
                if not np.allclose(c, c.T) or np.linalg.eigvalsh(c).min() < -1e-10:
                    raise ParameterError("covariance matrix is not symmetric positive semidefinite")

    @property
    def effective_test_outliers(self) -> int:
        if self.test_outliers is not None:
            return self.test_outliers
        return int(round(self.test_size * self.train_outliers / self.train_size))

    @classmethod
    def from_dict(cls, values: dict) -> "SyntheticBVSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ParameterError(f"unknown spec keys: {sorted(unknown)}")
        kw = dict(values)
        for key in ("means", "covariances", "weights"):
            if kw.get(key) is not None:
                kw[key] = _freeze(kw[key])
        return cls(**kw)

    @classmethod
    def from_json(cls, path) -> "SyntheticBVSpec":
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"spec file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"spec file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(values)


def _freeze(value):
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    return value


@dataclass(frozen=True)
class _Mixture:
    means: np.ndarray
    chols: np.ndarray
    weights: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray


def _mixture(spec: SyntheticBVSpec, rng: np.random.Generator) -> _Mixture:
    if spec.means is None:
        means = rng.uniform(-spec.mean_range, spec.mean_range, size=(spec.n_components, spec.dim))
    else:
        means = np.asarray(spec.means, dtype=float)
    if spec.covariances is None:
        chols = np.broadcast_to(np.eye(spec.dim), (spec.n_components, spec.dim, spec.dim))
    else:
        # eigen-decomposition tolerates singular (PSD) covariances where Cholesky would not
        chols = []
        for c in np.asarray(spec.covariances, dtype=float):
            vals, vecs = np.linalg.eigh(c)
            chols.append(vecs * np.sqrt(np.clip(vals, 0.0, None)))
        chols = np.array(chols)
    if spec.weights is None:
        weights = np.full(spec.n_components, 1.0 / spec.n_components)
    else:
        weights = np.asarray(spec.weights, dtype=float)
    center = 0.5 * (means.min(axis=0) + means.max(axis=0))
    half = 0.5 * (means.max(axis=0) - means.min(axis=0))
    # keep the box non-degenerate when all means share a coordinate
    half = np.where(half > 0, half, 1.0)
    return _Mixture(means, chols, weights, center - spec.box_inflation * half, center + spec.box_inflation * half)


def _draw_set(spec, mix, n_total, n_out, rng) -> Dataset:
    n_in = n_total - n_out
    comp = rng.choice(len(mix.weights), size=n_in, p=mix.weights)
    z = rng.standard_normal((n_in, spec.dim))
    inliers = mix.means[comp] + np.einsum("nij,nj->ni", mix.chols[comp], z)
    if spec.outlier_model == "uniform":
        outliers = rng.uniform(mix.box_lo, mix.box_hi, size=(n_out, spec.dim))
    else:
        anchor = mix.means[rng.integers(len(mix.means), size=n_out)]
        tail = 1.0 + rng.pareto(spec.pareto_shape, size=(n_out, spec.dim))
        sign = rng.choice((-1.0, 1.0), size=(n_out, spec.dim))
        outliers = anchor + sign * tail
    points = np.vstack([inliers, outliers])
    labels = np.concatenate([np.zeros(n_in, dtype=np.int8), np.ones(n_out, dtype=np.int8)])
    order = rng.permutation(n_total)
    return Dataset(points[order], labels[order])


def generate_bv_synthetic(spec: SyntheticBVSpec):
    """Draw ``num_train_sets`` training sets and ``num_test_sets`` test sets.

    Returns:
        ``(train_sets, test_sets)``, two lists of labeled :class:`Dataset`.
    """
    seqs = np.random.SeedSequence(spec.seed).spawn(1 + spec.num_train_sets + spec.num_test_sets)
    mix = _mixture(spec, np.random.default_rng(seqs[0]))
    train = [
        _draw_set(spec, mix, spec.train_size, spec.train_outliers, np.random.default_rng(s))
        for s in seqs[1 : 1 + spec.num_train_sets]
    ]
    test = [
        _draw_set(spec, mix, spec.test_size, spec.effective_test_outliers, np.random.default_rng(s))
        for s in seqs[1 + spec.num_train_sets :]
    ]
    return train, test


# --------------------------------------------------------------------------
# Synthetic binary detector outputs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticDetectorSpec:
    n: int = 1000
    outlier_fraction: float = 0.1
    true_errors: tuple = field(default_factory=lambda: (0.2, 0.4, 0.6, 0.8))
    trials: int = 100
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "true_errors", tuple(float(e) for e in self.true_errors))
        if self.n < 2 or self.trials < 1:
            raise ParameterError("n must be >= 2 and trials >= 1")
        if not 0 < self.outlier_fraction < 1:
            raise ParameterError("outlier_fraction must lie in (0, 1)")
        if len(self.true_errors) < 2:
            raise ParameterError("need at least two detectors")
        if any(not 0 <= e <= 1 for e in self.true_errors):
            raise ParameterError("true errors must lie in [0, 1]")


def generate_detector_outputs(spec: SyntheticDetectorSpec):
    """Simulate binary detectors that flip the true label independently.

    Detector ``i`` reports the truth with each entry flipped with probability
    ``true_errors[i]``, so two detectors err together with probability
    ``e_i * e_j``.

    Returns:
        list of ``(truth, outputs)`` per trial; ``truth`` has length n and
        ``outputs`` shape ``(len(true_errors), n)``, both int8.
    """
    e = np.asarray(spec.true_errors)[:, None]
    n_out = int(round(spec.n * spec.outlier_fraction))
    trials = []
    for seq in np.random.SeedSequence(spec.seed).spawn(spec.trials):
        rng = np.random.default_rng(seq)
        truth = np.zeros(spec.n, dtype=np.int8)
        truth[rng.permutation(spec.n)[:n_out]] = 1
        flips = rng.random((len(e), spec.n)) < e
        trials.append((truth, (truth[None, :] ^ flips).astype(np.int8)))
    return trials
