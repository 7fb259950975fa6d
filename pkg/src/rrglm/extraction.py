"""Supervised feature extraction from low-rank estimates, and progressive
feature-space reduction driven by rank-constrained fits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyExtractionError, InputError
from .families import DataSet
from .linalg import ordered_basis, thin_svd
from .solvers import CoefficientEstimate, FitOptions, constrained_fit


@dataclass
class ExtractionResult:
    """New features built from an estimate.

    ``features`` is the n x r block of new predictors, ``transform`` maps the
    slope design onto it (``features = X_slope @ transform``) and ``design``
    prepends the intercept column when the source data had one.
    """

    features: np.ndarray
    transform: np.ndarray
    kind: str
    intercept_column: np.ndarray | None = None

    @property
    def design(self) -> np.ndarray:
        if self.intercept_column is None:
            return self.features
        return np.column_stack([self.intercept_column, self.features])

    @property
    def r(self) -> int:
        return self.features.shape[1]


def _slope_design(X, intercept: bool):
    if isinstance(X, DataSet):
        return X.X_slope, X.x0
    X = np.asarray(X, dtype=float)
    return (X[:, 1:], X[:, 0]) if intercept else (X, None)


def extract_type1(estimate: CoefficientEstimate, X, scaled: bool = False) -> ExtractionResult:
    """Features ``X_slope @ U`` (or ``X_slope @ U @ D`` when ``scaled``).

    ``U D V^T`` is the SVD of the estimate's slope block truncated to its
    numerical rank.  ``X`` is a :class:`DataSet` or a design laid out like
    ``DataSet.X``.
    """
    if estimate.rank < 1:
        raise EmptyExtractionError("estimate has rank 0; nothing to extract")
    Xs, x0 = _slope_design(X, estimate.intercept)
    svd = estimate.svd.truncate(estimate.rank)
    T = svd.U * svd.s if scaled else svd.U
    return ExtractionResult(Xs @ T, T, "type1_scaled" if scaled else "type1", x0)


def extract_type2(estimate: CoefficientEstimate, X) -> ExtractionResult:
    """Decorrelated features ``X_slope @ B_slope @ V``.

    ``V`` holds the top eigenvectors of ``B^T X^T X B`` (computed as right
    singular vectors of ``X_slope @ B_slope``), so the features have a
    diagonal Gram matrix and ``X_slope @ B_slope == features @ V^T``.
    """
    if estimate.rank < 1:
        raise EmptyExtractionError("estimate has rank 0; nothing to extract")
    Xs, x0 = _slope_design(X, estimate.intercept)
    V = thin_svd(Xs @ estimate.B_slope).V[:, : estimate.rank]
    T = estimate.B_slope @ V
    return ExtractionResult(Xs @ T, T, "type2", x0)


@dataclass(frozen=True)
class CoolingSchedule:
    """Geometric rank schedule ``r(t+1) = max(target, min(r(t) - 1, ceil(decay * r(t))))``.

    ``inner_iter`` caps the constrained updates run at each rank.
    """

    start: int
    target: int
    decay: float = 0.7
    inner_iter: int = 10

    def __post_init__(self):
        if self.target < 1:
            raise InputError("target rank must be >= 1")
        if self.start < self.target:
            raise InputError("start rank below target")
        if not 0 < self.decay < 1:
            raise InputError("decay must lie in (0, 1)")
        if self.inner_iter < 1:
            raise InputError("inner_iter must be >= 1")

    def ranks(self) -> list[int]:
        """``[r(0), r(1), ..., r(T)]`` with ``r(0) = start`` and ``r(T) = target``."""
        out = [self.start]
        while out[-1] > self.target:
            r = out[-1]
            out.append(max(self.target, min(r - 1, math.ceil(self.decay * r))))
        return out


def default_target(data: DataSet, alpha: float = 0.5) -> int:
    """Prototype reduction rank ``floor(alpha * n) ^ p ^ m`` (at least 1)."""
    return max(1, min(int(alpha * data.n), data.p, data.m))


def _newton_direction(data: DataSet, B: np.ndarray) -> np.ndarray:
    """Slope block of the minimum-norm IRLS step from ``B``, one response at a time."""
    fam = data.family
    theta = data.X @ B
    R = data.Y - fam.mean(theta)
    if fam.tag == "gaussian":
        D = np.linalg.lstsq(data.X, R, rcond=None)[0]
    else:
        D = np.empty_like(B)
        for k in range(data.m):
            w = np.sqrt(np.maximum(fam.variance(theta[:, k]), 1e-12))
            D[:, k] = np.linalg.lstsq(data.X * w[:, None], R[:, k] / w, rcond=None)[0]
    return D[1:] if data.intercept else D


@dataclass
class ReductionResult:
    """Reduced data and the accumulated orthonormal transform.

    ``data.X_slope == original X_slope @ U`` and ``B`` is the last
    coefficient matrix in reduced coordinates.
    """

    data: DataSet
    U: np.ndarray
    B: np.ndarray
    ranks: list[int] = field(default_factory=list)


def _truncate_slope(B: np.ndarray, r: int, intercept: bool) -> np.ndarray:
    slope = B[1:] if intercept else B
    svd = thin_svd(slope)
    if np.count_nonzero(svd.s) <= r:
        return B
    slope = svd.truncate(r).reconstruct()
    return np.vstack([B[:1], slope]) if intercept else slope


def progressive_reduce(
    data: DataSet,
    target_r: int,
    schedule: CoolingSchedule | None = None,
    eta: float = 0.0,
    tol: float = 1e-9,
) -> ReductionResult:
    """Anneal the feature space down to ``target_r`` directions.

    At each rank ``r(t)`` of the schedule, run at most ``inner_iter``
    rank-``r(t)`` constrained updates on the current reduced design, then
    rotate the design onto the first ``r(t)`` left singular vectors of the
    slope estimate.  Each stage starts from the previous estimate expressed in
    the new coordinates.

    When the estimate has fewer than ``r(t)`` nonzero singular values, the
    missing directions come first from the slope block of a full Newton
    (least-squares) step at the current estimate, so the subspace the
    iteration is converging to survives the projection; any remaining
    columns complete the basis orthogonally.
    """
    if int(target_r) != target_r or target_r < 1:
        raise InputError(f"target rank must be a positive integer, got {target_r}")
    target_r = int(target_r)
    if target_r > data.p:
        raise InputError(f"target rank {target_r} exceeds p={data.p}")
    if schedule is None:
        schedule = CoolingSchedule(data.p, target_r)
    elif schedule.start != data.p or schedule.target != target_r:
        raise InputError("schedule must run from p to the target rank")

    Z = data.X_slope.copy()
    U = np.eye(data.p)
    B = np.zeros((data.X.shape[1], data.m))
    ranks = schedule.ranks()
    for r_t in ranks[1:]:
        work = data.with_design(Z)
        r_fit = min(r_t, work.p, work.m)
        # the previous stage may have left a higher rank; start from a feasible point
        B = _truncate_slope(B, r_fit, data.intercept)
        opts = FitOptions(max_iter=schedule.inner_iter, tol=tol, B0=B)
        B = constrained_fit(work, r_fit, eta, opts).B
        slope = B[1:] if data.intercept else B
        U1 = ordered_basis([slope, _newton_direction(work, B)], r_t)
        Z, U = Z @ U1, U @ U1
        slope = U1.T @ slope
        B = np.vstack([B[:1], slope]) if data.intercept else slope
    return ReductionResult(data.with_design(Z), U, B, ranks)
