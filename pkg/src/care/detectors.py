"""Feature-bagged avgKNN and LOF base detectors."""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import ParameterError
from .neighbors import knn_query

# reachability distance floor for co-located points
LRD_EPS = 1e-12


class DetectorKind(str, enum.Enum):
    AVGKNN = "avgknn"
    LOF = "lof"


@dataclass(frozen=True)
class FeatureBag:
    selected: tuple

    def __post_init__(self):
        sel = tuple(int(i) for i in self.selected)
        if not sel or any(b <= a for a, b in zip(sel, sel[1:])) or sel[0] < 0:
            raise ParameterError(f"feature bag must be strictly increasing and nonnegative: {sel}")
        object.__setattr__(self, "selected", sel)

    @property
    def q(self) -> int:
        return len(self.selected)

    @classmethod
    def full(cls, d: int) -> "FeatureBag":
        return cls(tuple(range(d)))


@dataclass(frozen=True)
class RawScores:
    values: np.ndarray
    kind: DetectorKind
    bag: FeatureBag


def make_feature_bags(d: int, b: int, seed: int) -> list:
    """Draw ``b`` random feature subsets of size q in [ceil(d/2), d-1].

    Bag ``i`` uses its own child of ``SeedSequence(seed)``, so a bag never
    depends on how many bags were drawn before it.
    """
    if d < 2:
        raise ParameterError(f"feature bagging needs d >= 2, got d={d}")
    if b < 1:
        raise ParameterError(f"b must be >= 1, got {b}")
    lo = math.ceil(d / 2)
    bags = []
    for seq in np.random.SeedSequence(seed).spawn(b):
        rng = np.random.default_rng(seq)
        q = int(rng.integers(lo, d))
        bags.append(FeatureBag(tuple(np.sort(rng.choice(d, size=q, replace=False)))))
    return bags


def _points(D) -> np.ndarray:
    return D.points if isinstance(D, Dataset) else np.asarray(D, dtype=np.float64)


def _resolve(D, S, bag: Optional[FeatureBag]):
    """Project data and reference onto the bag; work out self-exclusion."""
    X = _points(D)
    if bag is None:
        bag = FeatureBag.full(X.shape[1])
    if bag.selected[-1] >= X.shape[1]:
        raise ParameterError(f"feature bag {bag.selected} exceeds d={X.shape[1]}")
    cols = list(bag.selected)
    Xq = X[:, cols]
    if S is None:
        S = np.arange(X.shape[0])
    S = np.asarray(S)
    if S.ndim == 1:
        S = S.astype(np.int64)
        if len(np.unique(S)) != len(S):
            raise ParameterError("reference index set contains duplicates")
        pos = np.full(X.shape[0], -1, dtype=np.int64)
        pos[S] = np.arange(len(S))
        return Xq, Xq[S], pos, bag
    if S.ndim != 2 or S.shape[1] != X.shape[1]:
        raise ParameterError(f"explicit reference must be (s, {X.shape[1]}), got {S.shape}")
    return Xq, np.asarray(S, dtype=np.float64)[:, cols], None, bag


def _check_size(ref: np.ndarray, k: int):
    if ref.shape[0] <= k:
        raise ParameterError(f"reference set of {ref.shape[0]} points is too small for k={k}")


def avgknn_score(D, S=None, k: int = 5, bag: Optional[FeatureBag] = None) -> RawScores:
    """Mean distance from each point of ``D`` to its k nearest points of ``S``.

    ``S`` is either an index array into ``D`` (a point is then never its own
    neighbor) or an explicit (s, d) reference matrix. ``None`` means all of D.
    """
    Xq, ref, pos, bag = _resolve(D, S, bag)
    _check_size(ref, k)
    nl = knn_query(Xq, ref, k, exclude=pos)
    return RawScores(nl.distances.mean(axis=1), DetectorKind.AVGKNN, bag)


def _lrd(mean_reach: np.ndarray) -> np.ndarray:
    return 1.0 / np.maximum(mean_reach, LRD_EPS)


def lof_score(D, S=None, k: int = 5, bag: Optional[FeatureBag] = None) -> RawScores:
    """Local outlier factor of each point of ``D`` relative to reference ``S``.

    k-distances and local reachability densities of the reference points are
    computed inside ``S`` with self-exclusion; the points of ``D`` are then
    scored against those densities. A point whose mean reachability distance
    is 0 gets density ``1 / 1e-12``.
    """
    Xq, ref, pos, bag = _resolve(D, S, bag)
    _check_size(ref, k)
    inner = knn_query(ref, ref, k, exclude=np.arange(ref.shape[0]))
    kdist = inner.distances[:, -1]
    ref_lrd = _lrd(np.maximum(kdist[inner.indices], inner.distances).mean(axis=1))

    outer = knn_query(Xq, ref, k, exclude=pos)
    reach = np.maximum(kdist[outer.indices], outer.distances)
    lrd = _lrd(reach.mean(axis=1))
    lof = ref_lrd[outer.indices].mean(axis=1) / lrd
    return RawScores(lof, DetectorKind.LOF, bag)


SCORERS = {DetectorKind.AVGKNN: avgknn_score, DetectorKind.LOF: lof_score}


def score_bags(
    D,
    S,
    k: int,
    bags: Sequence[FeatureBag],
    kind: DetectorKind,
    threads: int = 1,
) -> list:
    """Score every bag against ``S``; the result order always follows ``bags``."""
    scorer = SCORERS[DetectorKind(kind)]
    if threads <= 1 or len(bags) < 2:
        return [scorer(D, S, k, bag) for bag in bags]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda bag: scorer(D, S, k, bag), bags))
