"""Pairwise agreement rates between binary detector outputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyUnionError, ParameterError


@dataclass(frozen=True)
class AgreementSummary:
    rates: np.ndarray
    union: np.ndarray
    ccdf_auc: float

    @property
    def b(self) -> int:
        return self.rates.shape[0]

    def upper(self) -> np.ndarray:
        """Strict upper triangle of the rate matrix, row-major."""
        i, j = np.triu_indices(self.b, k=1)
        return self.rates[i, j]


def agreement_matrix(outputs: np.ndarray) -> np.ndarray:
    """Fraction of columns on which each pair of rows holds the same 0/1 value."""
    X = np.asarray(outputs, dtype=np.float64)
    if X.shape[1] == 0:
        raise ParameterError("no columns to compare")
    same = X @ X.T + (1.0 - X) @ (1.0 - X).T
    rates = same / X.shape[1]
    np.fill_diagonal(rates, 1.0)
    return rates


def ccdf_auc(values) -> float:
    """Area under the empirical complementary CDF of values in [0, 1].

    Integrates ``P(A > t)`` over ``t`` in [0, 1] as a step function. For
    values inside [0, 1] the result equals their mean.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ParameterError("ccdf_auc needs at least one value")
    if v[0] < 0 or v[-1] > 1:
        raise ParameterError("values must lie in [0, 1]")
    edges = np.concatenate([[0.0], v])
    # on (edges[i], edges[i+1]) exactly n - i values exceed t
    survivors = v.size - np.arange(v.size)
    return float(np.sum(np.diff(edges) * survivors) / v.size)


def pairwise_agreement(outputs) -> AgreementSummary:
    """Agreement rates of b binary detectors over the points any of them flags.

    Raises:
        EmptyUnionError: no detector flagged any point.
    """
    X = np.asarray(outputs)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ParameterError(f"need a (b >= 2, n) output matrix, got shape {X.shape}")
    if not np.all((X == 0) | (X == 1)):
        raise ParameterError("detector outputs must be 0/1")
    union = np.flatnonzero(X.any(axis=0))
    if union.size == 0:
        raise EmptyUnionError("no detector flagged any point")
    rates = agreement_matrix(X[:, union])
    i, j = np.triu_indices(X.shape[0], k=1)
    return AgreementSummary(rates, union, ccdf_auc(rates[i, j]))
