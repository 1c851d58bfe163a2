"""Turn raw outlierness scores into probabilities and binary labels."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import ParameterError


@dataclass(frozen=True)
class BinaryLabels:
    values: np.ndarray
    threshold: float

    @property
    def count(self) -> int:
        return int(self.values.sum())


def _moments(x: np.ndarray):
    """Mean and population std; std is exactly 0 for a constant vector."""
    if x.size < 2:
        raise ParameterError("need at least two scores")
    if np.ptp(x) == 0:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std())


def gaussian_scale(raw) -> np.ndarray:
    """Map scores to [0, 1] via ``max(0, erf((s - mean) / (std * sqrt(2))))``."""
    x = np.asarray(getattr(raw, "values", raw), dtype=np.float64)
    mu, sigma = _moments(x)
    if sigma == 0:
        return np.zeros_like(x)
    return np.maximum(0.0, erf((x - mu) / (sigma * math.sqrt(2.0))))


def cantelli_lambda(confidence: float) -> float:
    if not 0 < confidence < 1:
        raise ParameterError(f"confidence must lie in (0, 1), got {confidence}")
    return math.sqrt(1.0 / confidence - 1.0)


def cantelli_threshold(scores, confidence: float = 0.2) -> BinaryLabels:
    """Flag scores at or above ``mean + lam * std``, ``lam = sqrt(1/confidence - 1)``.

    Cantelli's inequality bounds the flagged fraction by ``confidence`` for any
    distribution. Constant scores flag nothing (threshold +inf).
    """
    lam = cantelli_lambda(confidence)
    x = np.asarray(getattr(scores, "values", scores), dtype=np.float64)
    mu, sigma = _moments(x)
    if sigma == 0:
        return BinaryLabels(np.zeros(x.size, dtype=np.int8), math.inf)
    threshold = mu + lam * sigma
    return BinaryLabels((x >= threshold).astype(np.int8), threshold)
