"""Unsupervised detector error rates from pairwise agreement rates.

For detectors i < j with agreement a_ij, the joint error of the pair is tied
to the individual errors by ``a_ij = 1 - e_i - e_j + 2 e_ij``. Individual and
pairwise errors are chosen to minimize

    sum over sets A (singletons and pairs) of  e_A**2 + eps_A
    s.t.  0 <= e_A <= 0.5 + eps_A,  eps_A >= 0,  e_A <= 1.

Substituting ``e_ij = (a_ij - 1 + e_i + e_j) / 2`` leaves b free variables.
The hinge ``eps_A = max(0, e_A - 0.5)`` is kept as an explicit slack so the
problem is a smooth convex QP, solved here by a Mehrotra predictor-corrector
interior-point method. Every set A owns a 2x2 block (e_A, eps_A); eliminating
the slack blocks reduces each Newton step to one dense b x b Cholesky solve.

The interior-point iterate is then polished: with the active bounds and the
hinge pieces read off the iterate, the remaining equality-constrained QP is
solved exactly, and the polished point is kept only if it is feasible and no
worse. The returned point is certified by a bounded least-squares search for
KKT multipliers, independent of how the point was found.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import lsq_linear

from .agreement import AgreementSummary
from .errors import NumericalError, ParameterError

WEIGHT_FLOOR = 1e-6
KKT_TOL = 1e-6


@dataclass(frozen=True)
class ErrorEstimate:
    individual: np.ndarray
    pairwise: np.ndarray
    objective: float
    converged: bool
    iterations: int
    kkt_residual: float
    message: str = ""

    def clamped(self, floor: float = WEIGHT_FLOOR) -> np.ndarray:
        """Individual errors clipped to [floor, 1] so weights stay finite."""
        return np.clip(self.individual, floor, 1.0)

    def to_dict(self, rates=None) -> dict:
        out = {
            "errors": self.individual.tolist(),
            "objective": self.objective,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
            "converged": self.converged,
        }
        if rates is not None:
            i, j = np.triu_indices(len(self.individual), k=1)
            out["agreement"] = np.asarray(rates)[i, j].tolist()
        if self.message:
            out["message"] = self.message
        return out


def _design(b: int):
    """Sparse map z -> e over all sets: identity rows, then (z_i + z_j)/2 per pair."""
    i, j = np.triu_indices(b, k=1)
    p = len(i)
    rows = np.concatenate([np.arange(b), b + np.arange(p), b + np.arange(p)])
    cols = np.concatenate([np.arange(b), i, j])
    vals = np.concatenate([np.ones(b), np.full(2 * p, 0.5)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(b + p, b)), i, j


def set_errors(individual: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """All singleton and pair errors implied by the agreement equalities."""
    b = len(individual)
    i, j = np.triu_indices(b, k=1)
    pair = (rates[i, j] - 1.0 + individual[i] + individual[j]) / 2.0
    return np.concatenate([individual, pair])


def objective_value(individual, rates) -> float:
    e = set_errors(np.asarray(individual, dtype=float), np.asarray(rates, dtype=float))
    return float(np.sum(e * e) + np.sum(np.maximum(0.0, e - 0.5)))


def _solve_qp(C, g, tol=1e-10, max_iter=100):
    """Interior-point solve of min sum(e^2 + t) over z, t with e = C z + g.

    Constraint rows per set m, written as ``G x + s = h`` with ``s >= 0``:
    ``t >= 0``, ``e - t <= 0.5``, ``e >= 0``, ``e <= 1``.

    Returns the iterate with the smallest ``max(residual, gap)``; close to the
    boundary the Newton directions lose accuracy, so the loop also ends after
    a few iterations without improvement.
    """
    M, b = C.shape
    CT = C.T.tocsr()
    z = np.full(b, 0.5)
    e = C @ z + g
    t = np.maximum(e - 0.5, 0.0) + 1.0
    s = [np.maximum(v, 1.0) for v in (t, 0.5 - e + t, e, 1.0 - e)]
    lam = [np.ones(M) for _ in range(4)]
    N = 4 * M
    best_z, best_merit, since_best = z, np.inf, 0

    for it in range(1, max_iter + 1):
        e = C @ z + g
        rz = CT @ (2.0 * e + lam[1] - lam[2] + lam[3])
        rt = 1.0 - lam[0] - lam[1]
        rp = [s[0] - t, e - t + s[1] - 0.5, s[2] - e, e + s[3] - 1.0]
        mu = sum(float(np.dot(a, c)) for a, c in zip(s, lam)) / N
        merit = max(np.abs(rz).max(), np.abs(rt).max(), max(np.abs(r).max() for r in rp), mu)
        if merit < best_merit:
            best_z, best_merit, since_best = z, merit, 0
        else:
            since_best += 1
        if merit <= tol or since_best >= 3:
            return best_z, it - 1, best_merit

        D = [l / v for l, v in zip(lam, s)]
        a_et = -D[1]
        a_tt = D[0] + D[1]
        # equals a_ee - a_et**2 / a_tt with a_ee = 2 + D1 + D2 + D3, free of cancellation
        h = 2.0 + D[2] + D[3] + D[0] * D[1] / a_tt
        H = (CT @ sp.diags(h) @ C).toarray()
        try:
            factor = scipy.linalg.cho_factor(H)
        except (np.linalg.LinAlgError, ValueError):
            return best_z, it - 1, best_merit

        def direction(rc):
            v = [(-c + l * r) / sv for c, l, r, sv in zip(rc, lam, rp, s)]
            rho_e = -(2.0 * e + lam[1] - lam[2] + lam[3]) - (v[1] - v[2] + v[3])
            rho_t = -rt + v[0] + v[1]
            dz = scipy.linalg.cho_solve(factor, CT @ (rho_e - a_et * rho_t / a_tt))
            de = C @ dz
            dt = (rho_t - a_et * de) / a_tt
            gdx = [-dt, de - dt, -de, de]
            ds = [-r - gd for r, gd in zip(rp, gdx)]
            dl = [(-c - l * d) / sv for c, l, d, sv in zip(rc, lam, ds, s)]
            return dz, dt, ds, dl

        def max_step(v, dv):
            neg = dv < 0
            return min(1.0, float(np.min(-v[neg] / dv[neg]))) if neg.any() else 1.0

        def step_length(ds, dl):
            return min(min(max_step(v, dv) for v, dv in zip(s, ds)),
                       min(max_step(v, dv) for v, dv in zip(lam, dl)))

        # predictor
        rc_aff = [v * l for v, l in zip(s, lam)]
        _, _, ds_a, dl_a = direction(rc_aff)
        alpha = step_length(ds_a, dl_a)
        mu_aff = sum(float(np.dot(v + alpha * dv, l + alpha * dl))
                     for v, dv, l, dl in zip(s, ds_a, lam, dl_a)) / N
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        rc = [v * l + dv * dl - sigma * mu for v, l, dv, dl in zip(s, lam, ds_a, dl_a)]
        dz, dt, ds, dl = direction(rc)
        alpha = min(1.0, 0.99 * step_length(ds, dl))
        z = z + alpha * dz
        t = t + alpha * dt
        s = [v + alpha * dv for v, dv in zip(s, ds)]
        lam = [v + alpha * dv for v, dv in zip(lam, dl)]

    return best_z, max_iter, best_merit


def _objective(C, g, z) -> float:
    e = C @ z + g
    return float(np.sum(e * e) + np.sum(np.maximum(0.0, e - 0.5)))


def _violation(C, g, z) -> float:
    e = C @ z + g
    return float(max(np.maximum(-e, 0.0).max(), np.maximum(e - 1.0, 0.0).max()))


def _polish(C, g, z0, feas_tol=1e-12):
    """Exact solve on the active set guessed from ``z0``; None if no guess improves ``z0``."""
    Cd = C.toarray()
    e0 = Cd @ z0 + g
    best, best_obj = None, _objective(C, g, z0) + 1e-13
    for tau in (1e-4, 1e-6, 1e-8):
        lo = e0 <= tau
        hi = e0 >= 1.0 - tau
        kink = (np.abs(e0 - 0.5) <= tau) & ~lo & ~hi
        active = lo | hi | kink
        target = np.where(lo, 0.0, np.where(hi, 1.0, 0.5))[active] - g[active]
        free = ~active
        beta = (e0[free] > 0.5).astype(float)

        b = Cd.shape[1]
        if active.any():
            CA = Cd[active]
            zp, *_ = np.linalg.lstsq(CA, target, rcond=None)
            if np.abs(CA @ zp - target).max() > 1e-10:
                continue
            # only V is needed; a full U would be (active x active)
            _, sv, vt = np.linalg.svd(CA, full_matrices=CA.shape[0] < b)
            rank = int(np.sum(sv > sv[0] * 1e-12)) if sv.size else 0
            null = vt[rank:].T
        else:
            zp, null = np.zeros(b), np.eye(b)
        if null.shape[1]:
            CF = Cd[free] @ null
            rhs = -(Cd[free] @ zp + g[free]) - 0.5 * beta
            y, *_ = np.linalg.lstsq(CF, rhs, rcond=None)
            z = zp + null @ y
        else:
            z = zp
        if _violation(C, g, z) > feas_tol:
            continue
        obj = _objective(C, g, z)
        if obj <= best_obj:
            best, best_obj = z, obj
    return best


def kkt_residual(C, g, z, active_tol=1e-9) -> float:
    """Smallest achievable KKT violation at ``z`` over valid multipliers.

    Stationarity requires ``sum_m c_m (2 e_m + d_m - lo_m + hi_m) = 0`` where
    ``d_m`` is 1 above the kink, any value in [0, 1] at the kink and 0 below,
    and ``lo_m, hi_m >= 0`` may be nonzero only on active bounds. The best
    multipliers come from a bounded least-squares fit.
    """
    e = C @ z + g
    CT = C.T.tocsc()
    above = e > 0.5 + active_tol
    base = CT @ (2.0 * e + above)
    kink = np.abs(e - 0.5) <= active_tol
    lo = e <= active_tol
    hi = e >= 1.0 - active_tol
    cols = [CT[:, kink], -CT[:, lo], CT[:, hi]]
    upper = np.concatenate([np.ones(kink.sum()), np.full(lo.sum() + hi.sum(), np.inf)])
    if upper.size:
        A = sp.hstack(cols).toarray()
        fit = lsq_linear(A, -base, bounds=(np.zeros(upper.size), upper), tol=1e-14, method="bvls")
        stationarity = np.abs(A @ fit.x + base).max()
    else:
        stationarity = np.abs(base).max()
    return float(max(stationarity, _violation(C, g, z)))


def estimate_errors(summary, tol: float = 1e-10, max_iter: int = 100) -> ErrorEstimate:
    """Estimate per-detector error rates from an agreement summary or rate matrix.

    Agreement rates outside [0, 1] make the constraints inconsistent; they are
    projected onto [0, 1] (the least-squares projection onto rates for which a
    feasible error assignment exists) and the estimate is marked not converged.
    """
    rates = np.array(getattr(summary, "rates", summary), dtype=np.float64)
    if rates.ndim != 2 or rates.shape[0] != rates.shape[1] or rates.shape[0] < 2:
        raise ParameterError(f"need a square b x b rate matrix with b >= 2, got {rates.shape}")
    if not np.all(np.isfinite(rates)):
        raise ParameterError("agreement rates must be finite")
    b = rates.shape[0]
    rates = 0.5 * (rates + rates.T)
    notes = []
    if rates.min() < 0 or rates.max() > 1:
        notes.append(
            f"agreement rates outside [0, 1] (min {rates.min():.3g}, max {rates.max():.3g}) projected"
        )
        rates = np.clip(rates, 0.0, 1.0)
    np.fill_diagonal(rates, 1.0)

    C, i, j = _design(b)
    g = np.concatenate([np.zeros(b), (rates[i, j] - 1.0) / 2.0])
    z, iters, _ = _solve_qp(C, g, tol=tol, max_iter=max_iter)
    polished = _polish(C, g, z)
    if polished is not None:
        z = polished
    z = np.clip(z, 0.0, 1.0)
    kkt = kkt_residual(C, g, z)
    if kkt > KKT_TOL:
        notes.append(f"KKT residual {kkt:.3g} above {KKT_TOL:g}")

    pair_vals = set_errors(z, rates)[b:]
    pairwise = np.diag(z)
    pairwise[i, j] = pair_vals
    pairwise[j, i] = pair_vals
    return ErrorEstimate(
        individual=z,
        pairwise=pairwise,
        objective=objective_value(z, rates),
        converged=not notes,
        iterations=iters,
        kkt_residual=kkt,
        message="; ".join(notes),
    )
