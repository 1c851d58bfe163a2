"""Ranking metrics and the synthetic experiment harnesses."""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.stats import binomtest

from .agreement import agreement_matrix, pairwise_agreement
from .dataset import (
    SyntheticBVSpec,
    SyntheticDetectorSpec,
    generate_bv_synthetic,
    generate_detector_outputs,
)
from .detectors import SCORERS, DetectorKind
from .ensemble import DetectorWeights, compute_weights, fvps_sample, weighted_aggregate
from .error_estimation import estimate_errors
from .errors import ParameterError
from .scaling import gaussian_scale

DEFAULT_K = (3, 5, 7, 9, 11, 13, 15)


# --------------------------------------------------------------------------
# Ranking metrics
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    ap: float


def _check_labels(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ParameterError("scores and labels must be 1-D and of equal length")
    if not np.all((y == 0) | (y == 1)):
        raise ParameterError("labels must be 0 or 1")
    if y.all() or not y.any():
        raise ParameterError("labels need at least one positive and one negative")
    return s, y.astype(np.int64)


def precision_recall_curve(scores, labels) -> PRCurve:
    """Precision and recall after each position of the descending ranking.

    Equal scores are ranked by ascending index.
    """
    s, y = _check_labels(scores, labels)
    order = np.argsort(-s, kind="stable")
    hits = np.cumsum(y[order])
    ranks = np.arange(1, len(s) + 1)
    precision = hits / ranks
    recall = hits / hits[-1]
    ap = float(precision[y[order] == 1].mean())
    return PRCurve(s[order], precision, recall, ap)


def average_precision(scores, labels) -> float:
    """Mean of the precision values at the ranks of the positives."""
    return precision_recall_curve(scores, labels).ap


# --------------------------------------------------------------------------
# Bias / variance of sampling procedures
# --------------------------------------------------------------------------


class Procedure(str, enum.Enum):
    NO_SAMPLING = "NoSampling"
    BOOTSTRAPPING = "Bootstrapping"
    SINGLE_PROB = "SingleProbSampling"
    MULTI_PROB = "MultiProbSampling"
    FILTERED_MULTI_PROB = "FilteredMultiProbSampling"


_PROCEDURE_ORDER = list(Procedure)


@dataclass(frozen=True)
class BVResult:
    procedure: Procedure
    k_values: tuple
    bias: np.ndarray
    variance: np.ndarray
    mse: np.ndarray

    def rows(self):
        for k, b, v, m in zip(self.k_values, self.bias, self.variance, self.mse):
            yield {"procedure": self.procedure.value, "k": int(k), "bias": float(b),
                   "variance": float(v), "mse": float(m)}


def sample_training_set(
    train: np.ndarray,
    procedure: Procedure,
    kind: DetectorKind,
    k: int,
    rng: np.random.Generator,
    rounds: int = 10,
    confidence: float = 0.2,
    bounds: tuple = (50, 1000),
) -> np.ndarray:
    """Build the reference set D' from training matrix D for one procedure."""
    procedure = Procedure(procedure)
    m = train.shape[0]
    if procedure is Procedure.NO_SAMPLING:
        return train
    if procedure is Procedure.BOOTSTRAPPING:
        return train[rng.integers(m, size=m)]

    scorer = SCORERS[DetectorKind(kind)]
    n_rounds = 1 if procedure is Procedure.SINGLE_PROB else rounds
    filtered = procedure is Procedure.FILTERED_MULTI_PROB
    S = np.arange(m)
    for _ in range(n_rounds):
        f = gaussian_scale(scorer(train, S, k))
        S = fvps_sample(f, confidence, bounds, k, rng, filtered=filtered).indices
    return train[S]


def _procedure_rng(seed: int, procedure: Procedure, i: int, k: int) -> np.random.Generator:
    key = (_PROCEDURE_ORDER.index(procedure), i, int(k))
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def bias_variance_experiment(
    spec: SyntheticBVSpec,
    procedure: Procedure,
    detector_kind: DetectorKind = DetectorKind.LOF,
    k_values: Sequence[int] = DEFAULT_K,
    iterations_for_multi: int = 10,
    confidence: float = 0.2,
    bounds: tuple = (50, 1000),
    data: Optional[tuple] = None,
) -> BVResult:
    """Bias and variance of normalized test scores for one sampling procedure.

    For every k and training set D_i a reference D_i' is built by the
    procedure; each test point x gets ``f(x, D_i', k)``, its Gaussian-scaled
    outlierness against D_i'. With ``fbar`` the mean over training sets and
    ``y`` the 0/1 label, ``bias = sqrt(mean_x (y - fbar)^2)`` and
    ``variance = mean_{x,i} (f - fbar)^2``. Both are averaged over test sets.

    ``data`` may pass pre-generated ``(train_sets, test_sets)`` so several
    procedures share the same draws.
    """
    procedure = Procedure(procedure)
    kind = DetectorKind(detector_kind)
    train_sets, test_sets = data if data is not None else generate_bv_synthetic(spec)
    scorer = SCORERS[kind]
    k_values = tuple(int(k) for k in k_values)
    bias = np.empty(len(k_values))
    variance = np.empty(len(k_values))
    mse = np.empty(len(k_values))
    for a, k in enumerate(k_values):
        refs = [
            sample_training_set(
                tr.points, procedure, kind, k, _procedure_rng(spec.seed, procedure, i, k),
                iterations_for_multi, confidence, bounds,
            )
            for i, tr in enumerate(train_sets)
        ]
        b_j, v_j, m_j = [], [], []
        for test in test_sets:
            F = np.vstack([gaussian_scale(scorer(test.points, ref, k)) for ref in refs])
            fbar = F.mean(axis=0)
            y = test.labels.astype(np.float64)
            b_j.append(np.sqrt(np.mean((y - fbar) ** 2)))
            v_j.append(np.mean((F - fbar) ** 2))
            m_j.append(np.mean((F - y) ** 2))
        bias[a], variance[a], mse[a] = np.mean(b_j), np.mean(v_j), np.mean(m_j)
    return BVResult(procedure, k_values, bias, variance, mse)


def write_bv_results(results: Sequence[BVResult], csv_path=None, json_path=None) -> None:
    rows = [row for r in results for row in r.rows()]
    if csv_path is not None:
        with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=["procedure", "k", "bias", "variance", "mse"],
                                    lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({key: repr(v) if isinstance(v, float) else v for key, v in row.items()})
    if json_path is not None:
        summary = {
            r.procedure.value: {
                "k": list(r.k_values),
                "bias": r.bias.tolist(),
                "variance": r.variance.tolist(),
                "mean_bias": float(r.bias.mean()),
                "mean_variance": float(r.variance.mean()),
            }
            for r in results
        }
        Path(json_path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# Synthetic detector studies: error estimation and aggregation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ErrorStudy:
    true_errors: np.ndarray
    estimates: np.ndarray  # (trials, b)

    @property
    def gaps(self) -> np.ndarray:
        return np.abs(self.estimates - self.true_errors)

    @property
    def mean_gap(self) -> np.ndarray:
        return self.gaps.mean(axis=0)

    @property
    def max_gap(self) -> np.ndarray:
        return self.gaps.max(axis=0)

    def summary(self) -> dict:
        return {
            "true_errors": self.true_errors.tolist(),
            "mean_estimate": self.estimates.mean(axis=0).tolist(),
            "mean_gap": self.mean_gap.tolist(),
            "max_gap": self.max_gap.tolist(),
            "overall_mean_gap": float(self.gaps.mean()),
            "overall_max_gap": float(self.gaps.max()),
        }


def error_estimation_study(spec: SyntheticDetectorSpec, over: str = "union") -> ErrorStudy:
    """Estimate detector errors on simulated outputs and compare with the truth.

    ``over`` selects the points agreement is measured on: ``"union"`` (points
    flagged by some detector, as in the ensemble) or ``"all"``.
    """
    if over not in ("union", "all"):
        raise ParameterError("over must be 'union' or 'all'")
    estimates = []
    for _, outputs in generate_detector_outputs(spec):
        rates = pairwise_agreement(outputs).rates if over == "union" else agreement_matrix(outputs)
        estimates.append(estimate_errors(rates).individual)
    return ErrorStudy(np.asarray(spec.true_errors), np.array(estimates))


AGGREGATIONS = ("average", "weighted", "pruned_weighted")


def aggregation_study(spec: SyntheticDetectorSpec, prune_threshold: float = 0.5) -> dict:
    """Accuracy of average, weighted and pruned-weighted consensus per trial.

    Binary outputs act as probabilities; a point is labeled an outlier when
    its combined score exceeds 0.5. Weights come from errors estimated on the
    same outputs.

    Returns:
        mapping from aggregation name to an array of per-trial accuracies.
    """
    acc = {name: [] for name in AGGREGATIONS}
    for truth, outputs in generate_detector_outputs(spec):
        P = outputs.astype(np.float64)
        weights = compute_weights(estimate_errors(pairwise_agreement(outputs)), prune_threshold)
        unpruned = DetectorWeights(weights.values, np.zeros_like(weights.pruned))
        combos = {
            "average": P.mean(axis=0),
            "weighted": weighted_aggregate(P, unpruned),
            "pruned_weighted": weighted_aggregate(P, weights),
        }
        for name, ws in combos.items():
            acc[name].append(np.mean((ws > 0.5) == truth))
    return {name: np.array(v) for name, v in acc.items()}


def sign_test(better, worse) -> float:
    """One-sided sign test p-value that ``better`` exceeds ``worse`` pairwise.

    Ties are dropped; with no untied pair there is no evidence and p = 1.
    """
    d = np.asarray(better, dtype=float) - np.asarray(worse, dtype=float)
    wins, losses = int(np.sum(d > 0)), int(np.sum(d < 0))
    if wins + losses == 0:
        return 1.0
    return float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)
