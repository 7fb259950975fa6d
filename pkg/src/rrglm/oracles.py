"""Brute-force and analytic checks used to validate the fitting code.

Nothing in the fitting path imports this module.  The penalties below are
restated from their definitions rather than taken from
:mod:`rrglm.thresholding`, so the checks stay independent of the code under
test.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InputError
from .families import DataSet, get_family, neg_log_likelihood, nll_gradient
from .thresholding import ThresholdRule, apply_matrix

ORACLE_MAX_DIM = 5


@dataclass
class OracleVerdict:
    """Outcome of a check.  ``gap`` is the worst violation (0 if none)."""

    passed: bool
    gap: float
    witness: Any = None
    tolerance: float = 0.0

    @classmethod
    def from_gap(cls, gap: float, tolerance: float, witness=None) -> "OracleVerdict":
        gap = max(0.0, float(gap))
        return cls(gap <= tolerance, gap, witness, tolerance)


@dataclass
class ApproxOptimum:
    B: np.ndarray
    value: float
    thetas: np.ndarray


def reference_penalty(rule: ThresholdRule, theta) -> np.ndarray:
    """Scalar penalty of ``rule`` at ``theta >= 0``, written out from scratch."""
    t = np.abs(np.asarray(theta, dtype=float))
    lam, eta, M = rule.lam, rule.eta, rule.M
    if rule.kind == "soft":
        return lam * t
    if rule.kind == "ridge":
        return 0.5 * lam * t**2
    if rule.kind == "berhu":
        return np.where(t <= M, lam * t, lam * (t**2 + M**2) / (2.0 * M))
    if rule.kind == "hard":
        return np.where(t < lam, lam * t - 0.5 * t**2, 0.5 * lam**2)
    if rule.kind == "hard_ridge":
        return 0.5 * eta * t**2 + np.where(t != 0, lam**2 / (2.0 * (1.0 + eta)), 0.0)
    raise InputError(f"no scalar penalty for rule {rule.kind!r}")


def _grid(top: float, h: float) -> np.ndarray:
    n = int(np.ceil(top / h)) if top > 0 else 0
    return np.linspace(0.0, top, n + 1) if n else np.zeros(1)


def matrix_approx_oracle(Y, rule: ThresholdRule, grid_resolution: float = 1e-4) -> ApproxOptimum:
    """Grid-search minimiser of ``||Y - B||_F^2 / 2 + sum_i P(sigma_i(B))``.

    The problem reduces to one scalar search per singular value of ``Y``
    over ``[0, sigma_i]``.  For the quantile rule the penalty is a rank
    constraint plus ridge, and every support of size ``<= r`` is enumerated.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or max(Y.shape) > ORACLE_MAX_DIM:
        raise InputError(f"oracle inputs are capped at {ORACLE_MAX_DIM}x{ORACLE_MAX_DIM}")
    if not grid_resolution > 0:
        raise InputError("grid_resolution must be positive")
    U, s, Vt = np.linalg.svd(Y, full_matrices=False)
    thetas = np.zeros_like(s)
    if rule.kind == "quantile":
        kept = []
        for i, sig in enumerate(s):
            g = _grid(sig, grid_resolution)
            vals = 0.5 * (sig - g) ** 2 + 0.5 * rule.eta * g**2
            k = int(np.argmin(vals))
            kept.append((vals[k], g[k]))
        best, best_set = np.inf, ()
        for size in range(0, min(rule.r, len(s)) + 1):
            for S in itertools.combinations(range(len(s)), size):
                v = sum(kept[i][0] if i in S else 0.5 * s[i] ** 2 for i in range(len(s)))
                if v < best:
                    best, best_set = v, S
        for i in best_set:
            thetas[i] = kept[i][1]
        value = float(best)
    else:
        value = 0.0
        for i, sig in enumerate(s):
            g = _grid(sig, grid_resolution)
            vals = 0.5 * (sig - g) ** 2 + reference_penalty(rule, g)
            k = int(np.argmin(vals))
            thetas[i] = g[k]
            value += float(vals[k])
    return ApproxOptimum((U * thetas) @ Vt, value, thetas)


def approx_objective(Y, B, rule: ThresholdRule) -> float:
    """``||Y - B||_F^2 / 2 + sum_i P(sigma_i(B))`` with the reference penalty."""
    Y, B = np.asarray(Y, dtype=float), np.asarray(B, dtype=float)
    s = np.linalg.svd(B, compute_uv=False)
    s = np.where(s > 1e-12 * max(1.0, s.max(initial=0.0)), s, 0.0)
    return 0.5 * float(np.sum((Y - B) ** 2)) + float(np.sum(reference_penalty(rule, s)))


def von_neumann_check(A, B, tol: float = 1e-10) -> OracleVerdict:
    """Check ``|Tr(A B)| <= sum_i sigma_i(A) sigma_i(B)``.

    Rectangular inputs are zero-padded to a common square size.
    """
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    N = max(A.shape + B.shape)
    Ap, Bp = np.zeros((N, N)), np.zeros((N, N))
    Ap[: A.shape[0], : A.shape[1]] = A
    Bp[: B.shape[0], : B.shape[1]] = B
    lhs = abs(np.trace(Ap @ Bp))
    rhs = float(np.sum(np.linalg.svd(Ap, compute_uv=False) * np.linalg.svd(Bp, compute_uv=False)))
    return OracleVerdict.from_gap(lhs - rhs, tol, (A, B))


def von_neumann_trials(trials: int, seed=0, shape=(4, 4), tol: float = 1e-10) -> OracleVerdict:
    """Worst case of :func:`von_neumann_check` over random Gaussian pairs."""
    rng = np.random.default_rng(seed)
    worst = OracleVerdict(True, 0.0, None, tol)
    for _ in range(trials):
        A = rng.standard_normal(shape)
        B = rng.standard_normal(shape[::-1])
        v = von_neumann_check(A, B, tol)
        if v.gap > worst.gap or not v.passed:
            worst = v
    return worst


def perturbation_check(Y, rule: ThresholdRule, trials: int = 200, seed=0, scale: float = 1.0,
                       tol: float = 1e-10) -> OracleVerdict:
    """Quadratic growth of ``Q(B) = ||Y - B||^2/2 + sum P(sigma_i(B))`` around its minimiser.

    With ``B_hat = apply_matrix(rule, Y)`` and ``C1 = 1 - L``, checks
    ``Q(B_hat + D) - Q(B_hat) >= C1/2 ||D||_F^2`` for random ``D``.
    """
    if not rule.is_convex:
        raise InputError("perturbation_check needs a rule with zero curvature constant")
    Y = np.asarray(Y, dtype=float)
    c1 = 1.0 - rule.curvature
    Bh = apply_matrix(rule, Y)
    q0 = approx_objective(Y, Bh, rule)
    rng = np.random.default_rng(seed)
    gap, witness = 0.0, None
    for _ in range(trials):
        D = scale * rng.standard_normal(Y.shape)
        short = 0.5 * c1 * float(np.sum(D**2)) - (approx_objective(Y, Bh + D, rule) - q0)
        if short > gap:
            gap, witness = short, D
    return OracleVerdict.from_gap(gap, tol, witness)


def finite_diff_gradcheck(family, data: DataSet, B, step: float = 1e-5, tol: float = 1e-5) -> OracleVerdict:
    """Central differences of the NLL against ``X^T (mu(B) - Y)``.

    The witness is the ``(row, column)`` of the worst entry.
    """
    if not 1e-7 <= step <= 1e-3:
        raise InputError("step must lie in [1e-7, 1e-3]")
    fam = get_family(family)
    B = np.array(B, dtype=float)
    G = nll_gradient(fam, data.X, data.Y, B)
    num = np.zeros_like(B)
    for idx in np.ndindex(*B.shape):
        Bp, Bm = B.copy(), B.copy()
        Bp[idx] += step
        Bm[idx] -= step
        num[idx] = (neg_log_likelihood(fam, data.X, data.Y, Bp) - neg_log_likelihood(fam, data.X, data.Y, Bm)) / (
            2 * step
        )
    err = np.abs(num - G)
    where = np.unravel_index(int(np.argmax(err)), err.shape) if err.size else None
    return OracleVerdict.from_gap(float(err.max(initial=0.0)), tol, where)
