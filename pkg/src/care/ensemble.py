"""The CARE sequential ensemble and its non-sequential baselines."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np

from .agreement import pairwise_agreement
from .dataset import Dataset
from .detectors import DetectorKind, FeatureBag, make_feature_bags, score_bags
from .error_estimation import ErrorEstimate, estimate_errors
from .errors import EmptyUnionError, NumericalError, ParameterError
from .scaling import cantelli_threshold, gaussian_scale

log = logging.getLogger(__name__)

MODES = ("care", "fb0-avg", "fb0-max", "fb0-weighted", "plain")
MAX_REDRAWS = 10


@dataclass(frozen=True)
class EnsembleConfig:
    k: int = 5
    b: int = 100
    max_iter: int = 15
    confidence: float = 0.2
    detector_kind: DetectorKind = DetectorKind.LOF
    prune_threshold: float = 0.5
    seed: int = 0
    fvps_min_abs: int = 50
    fvps_max_abs: int = 1000
    mode: str = "care"
    threads: int = 1
    verbose: bool = False

    def __post_init__(self):
        object.__setattr__(self, "detector_kind", DetectorKind(self.detector_kind))
        if self.k < 1 or self.b < 1 or self.max_iter < 0:
            raise ParameterError("k and b must be positive and max_iter nonnegative")
        if self.fvps_min_abs < 1 or self.fvps_max_abs < 1:
            raise ParameterError("FVPS bounds must be positive")
        if not 0 < self.confidence < 1:
            raise ParameterError(f"confidence must lie in (0, 1), got {self.confidence}")
        if not 0 < self.prune_threshold <= 1:
            raise ParameterError(f"prune_threshold must lie in (0, 1], got {self.prune_threshold}")
        if self.mode not in MODES:
            raise ParameterError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["detector_kind"] = self.detector_kind.value
        return out


@dataclass(frozen=True)
class DetectorWeights:
    values: np.ndarray
    pruned: np.ndarray

    @property
    def n_pruned(self) -> int:
        return int(self.pruned.sum())


def compute_weights(errors, prune_threshold: float = 0.5) -> DetectorWeights:
    """Weights ``0.5 * ln(2 / e - 1)`` with detectors at ``e >= prune_threshold`` pruned.

    ``errors`` is an :class:`ErrorEstimate` (its clamped errors are used) or an
    array already in [1e-6, 1]. If every detector would be pruned, the one with
    the lowest error is kept.
    """
    e = errors.clamped() if isinstance(errors, ErrorEstimate) else np.asarray(errors, dtype=float)
    w = 0.5 * np.log(2.0 / e - 1.0)
    pruned = e >= prune_threshold
    if pruned.all():
        pruned[int(np.argmin(e))] = False
    return DetectorWeights(w, pruned)


def weighted_aggregate(probs, weights: DetectorWeights) -> np.ndarray:
    """Weighted mean over unpruned detectors of a (b, n) probability matrix.

    Falls back to the plain mean of the unpruned rows when their weights sum
    to zero.
    """
    P = np.asarray(probs, dtype=np.float64)
    keep = ~weights.pruned
    if P.shape[0] != len(keep):
        raise ParameterError(f"{P.shape[0]} probability rows for {len(keep)} detector weights")
    if not keep.any():
        raise ParameterError("no unpruned detector to aggregate")
    w = weights.values[keep]
    total = w.sum()
    if not total > 0:
        return P[keep].mean(axis=0)
    return np.clip(w @ P[keep] / total, 0.0, 1.0)


def weights_degenerate(weights: DetectorWeights) -> bool:
    return not weights.values[~weights.pruned].sum() > 0


# --------------------------------------------------------------------------
# Sampling
# --------------------------------------------------------------------------


def weighted_sample(weights, size: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``size`` distinct indices with probability proportional to weight.

    Distributionally identical to successive draws with renormalization of the
    remaining weights: each index gets the key ``log(u) / w`` and the ``size``
    largest keys win. Zero-weight indices are never chosen. Returns sorted
    indices.
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("sampling weights must be finite and nonnegative")
    positive = np.flatnonzero(w > 0)
    if size > positive.size:
        raise ParameterError(f"cannot draw {size} items from {positive.size} with positive weight")
    u = 1.0 - rng.random(positive.size)
    keys = np.log(u) / w[positive]
    top = np.argsort(-keys, kind="stable")[:size]
    return np.sort(positive[top])


@dataclass(frozen=True)
class FvpsSample:
    indices: np.ndarray
    filtered: int
    fraction: float
    threshold: float


def fvps_sample(
    fs,
    confidence: float = 0.2,
    bounds: tuple = (50, 1000),
    k: int = 5,
    rng: Optional[np.random.Generator] = None,
    filtered: bool = True,
) -> FvpsSample:
    """Filtered variable probability sampling of a new reference set.

    1. Drop the T points whose score reaches the Cantelli threshold of ``fs``.
    2. Draw the fraction ``l`` uniformly between ``min(1 - T/n, lo/n)`` and
       ``max(1 - T/n, hi/n)``, both clipped into (0, 1].
    3. Draw ``round(l * (n - T))`` of the remaining points without replacement,
       weighted by ``1 - fs``.

    A sample smaller than ``k + 1`` re-draws ``l`` (up to 10 times). The sample
    never contains every point. ``filtered=False`` skips step 1.
    """
    fs = np.asarray(fs, dtype=np.float64)
    n = fs.size
    if n < 3:
        raise ParameterError(f"FVPS needs at least 3 points, got {n}")
    if np.any(fs < 0) or np.any(fs > 1):
        raise ParameterError("scores must lie in [0, 1]")
    rng = rng if rng is not None else np.random.default_rng()
    if filtered:
        flags = cantelli_threshold(fs, confidence)
        kept = np.flatnonzero(flags.values == 0)
        threshold = flags.threshold
    else:
        kept = np.arange(n)
        threshold = math.inf
    T = n - kept.size
    if kept.size < k + 1:
        raise NumericalError(f"filtering left {kept.size} points, fewer than k + 1 = {k + 1}")

    weights = 1.0 - fs[kept]
    cap = min(kept.size, n - 1, int(np.count_nonzero(weights > 0)))
    if cap < k + 1:
        raise NumericalError(f"only {cap} points can be sampled, fewer than k + 1 = {k + 1}")
    lo_abs, hi_abs = bounds
    base = 1.0 - T / n
    lo = min(max(min(base, lo_abs / n), 1.0 / n), 1.0)
    hi = min(max(base, hi_abs / n), 1.0)
    for _ in range(MAX_REDRAWS + 1):
        frac = float(rng.uniform(lo, hi))
        size = min(int(round(frac * kept.size)), cap)
        if size >= k + 1:
            break
    else:
        raise NumericalError(f"FVPS sample stayed below k + 1 = {k + 1} after {MAX_REDRAWS} re-draws")
    picked = weighted_sample(weights, size, rng)
    return FvpsSample(kept[picked], T, frac, threshold)


def stopping_check(auc_history) -> bool:
    """True when the newest value is below ``mean - std`` of the whole history."""
    h = np.asarray(auc_history, dtype=np.float64)
    if h.size < 2:
        return False
    return bool(h[-1] < h.mean() - h.std())


# --------------------------------------------------------------------------
# Orchestration
# --------------------------------------------------------------------------


@dataclass
class EnsembleState:
    E: list = field(default_factory=list)
    fs: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    auc_history: list = field(default_factory=list)
    iteration: int = 0
    rank: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CareResult:
    fs: np.ndarray
    rank: np.ndarray
    diagnostics: list
    state: Optional[EnsembleState] = None


def rank_scores(fs) -> np.ndarray:
    """Indices by descending score; equal scores keep ascending index order."""
    return np.argsort(-np.asarray(fs, dtype=np.float64), kind="stable")


def _as_dataset(D) -> Dataset:
    return D if isinstance(D, Dataset) else Dataset(np.asarray(D, dtype=np.float64))


def _round_seeds(seed: int, iteration: int):
    """(bag seed, sampling generator) for one round, independent of other rounds."""
    bag_seq, sample_seq = np.random.SeedSequence(entropy=seed, spawn_key=(iteration,)).spawn(2)
    return int(bag_seq.generate_state(1, dtype=np.uint64)[0]), np.random.default_rng(sample_seq)


@dataclass(frozen=True)
class _Combined:
    ws: np.ndarray
    record: dict
    auc: Optional[float]


def _combine(raw_scores, config: EnsembleConfig) -> _Combined:
    """One parallel round: scale, binarize, estimate errors, weight and aggregate."""
    probs = np.vstack([gaussian_scale(r) for r in raw_scores])
    labels = np.vstack([cantelli_threshold(r.values, config.confidence).values for r in raw_scores])
    record = {}
    try:
        summary = pairwise_agreement(labels)
    except EmptyUnionError:
        log.warning("no detector flagged any point; using the unweighted mean")
        record.update(union=0, auc=None, pruned=0, degenerate=True)
        return _Combined(probs.mean(axis=0), record, None)

    estimate = estimate_errors(summary)
    weights = compute_weights(estimate, config.prune_threshold)
    record.update(
        union=int(summary.union.size),
        auc=summary.ccdf_auc,
        pruned=weights.n_pruned,
        solver_converged=estimate.converged,
        kkt_residual=estimate.kkt_residual,
    )
    if config.verbose:
        record["estimate"] = estimate.to_dict(summary.rates)
    if weights_degenerate(weights):
        log.warning("unpruned weights sum to zero; using the unweighted mean")
        record["degenerate"] = True
        return _Combined(probs.mean(axis=0), record, summary.ccdf_auc)
    record["degenerate"] = False
    return _Combined(weighted_aggregate(probs, weights), record, summary.ccdf_auc)


def run_care(D, config: EnsembleConfig = EnsembleConfig(), timings: bool = False) -> CareResult:
    """Run the sequential ensemble on ``D``.

    Each round scores ``b`` fresh feature bags against the current reference
    sample, combines them with error-based weights into ``ws``, folds ``ws`` into
    the running mean ``fs`` and resamples the reference with FVPS. The loop
    runs at most ``max_iter + 1`` rounds and stops early when the agreement
    CCDF-AUC drops below its running mean minus one standard deviation, in
    which case the last round is discarded.
    """
    D = _as_dataset(D)
    n, d = D.n, D.d
    if n <= config.k + 1:
        raise ParameterError(f"need more than k + 1 = {config.k + 1} points, got {n}")
    if d < 2:
        raise ParameterError("feature bagging needs at least 2 features")

    state = EnsembleState(S=np.arange(n))
    diagnostics = []
    stopped = False
    while state.iteration <= config.max_iter:
        started = time.perf_counter()
        bag_seed, sample_rng = _round_seeds(config.seed, state.iteration)
        bags = make_feature_bags(d, config.b, bag_seed)
        raw = score_bags(D, state.S, config.k, bags, config.detector_kind, config.threads)
        combined = _combine(raw, config)

        state.E.append(combined.ws)
        state.fs = np.mean(state.E, axis=0)
        sample = fvps_sample(
            state.fs,
            config.confidence,
            (config.fvps_min_abs, config.fvps_max_abs),
            config.k,
            sample_rng,
        )
        record = {"iteration": state.iteration, "reference_size": int(state.S.size)}
        record.update(combined.record)
        record.update(filtered=sample.filtered, fraction=sample.fraction, sample_size=int(sample.indices.size))
        state.S = sample.indices

        if combined.auc is not None:
            state.auc_history.append(combined.auc)
            stopped = stopping_check(state.auc_history)
        record["stop"] = stopped
        if timings:
            record["seconds"] = time.perf_counter() - started
        diagnostics.append(record)
        if stopped:
            state.E.pop()
            state.fs = np.mean(state.E, axis=0)
            break
        state.iteration += 1

    state.rank = rank_scores(state.fs)
    return CareResult(state.fs, state.rank, diagnostics, state)


def run_baseline(D, config: EnsembleConfig) -> CareResult:
    """Non-sequential baselines: feature bagging with avg/max/weighted combination, or a single detector."""
    D = _as_dataset(D)
    if D.n <= config.k + 1:
        raise ParameterError(f"need more than k + 1 = {config.k + 1} points, got {D.n}")
    S = np.arange(D.n)
    if config.mode == "plain":
        (raw,) = score_bags(D, S, config.k, [FeatureBag.full(D.d)], config.detector_kind)
        # scaling clips the lower half to 0, so rank on the raw scores
        return CareResult(gaussian_scale(raw), rank_scores(raw.values), [{"mode": "plain"}])

    bags = make_feature_bags(D.d, config.b, _round_seeds(config.seed, 0)[0])
    raw = score_bags(D, S, config.k, bags, config.detector_kind, config.threads)
    if config.mode == "fb0-weighted":
        combined = _combine(raw, config)
        record = {"mode": config.mode}
        record.update(combined.record)
        return CareResult(combined.ws, rank_scores(combined.ws), [record])
    probs = np.vstack([gaussian_scale(r) for r in raw])
    fs = probs.mean(axis=0) if config.mode == "fb0-avg" else probs.max(axis=0)
    return CareResult(fs, rank_scores(fs), [{"mode": config.mode}])


def run(D, config: EnsembleConfig, timings: bool = False) -> CareResult:
    if config.mode == "care":
        return run_care(D, config, timings=timings)
    return run_baseline(D, config)
