"""Tuning grids and projective cross-validation (PCV).

PCV fits the expensive low-rank path once on the whole data.  It then
cross-validates each candidate's *feature space*: every fold refits a small
ridge/ML GLM on the Type-I features ``[x0, X_slope @ U]`` and scores the
held-out deviance.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError
from .families import DataSet, scale_factor
from .linalg import spectral_norm
from .solvers import SolutionPath, ridge_glm_fit
from .thresholding import ThresholdRule, hard

DEFAULT_ETA_GRID = (0.0, 0.01, 0.1, 1.0)


def lambda_max(data: DataSet, rule: ThresholdRule) -> float:
    """Smallest threshold level at which the slope block stays at zero.

    The larger of the top singular value of ``X~_slope^T (Y - mu)`` at the
    zero start and at the intercept-only fit, on the design scaled by ``k0``.
    """
    k0 = scale_factor(data.family, data.X, rule)
    Xs = data.X_slope / k0
    mu0 = data.family.mean(np.zeros_like(data.Y))
    out = spectral_norm(Xs.T @ (data.Y - mu0))
    if data.intercept:
        ybar = np.broadcast_to(data.Y.mean(axis=0), data.Y.shape)
        out = max(out, spectral_norm(Xs.T @ (data.Y - ybar)))
    return float(out)


def lambda_grid(data: DataSet, L: int, ratio: float, rule: ThresholdRule | None = None) -> np.ndarray:
    """``L`` log-spaced lambdas from :func:`lambda_max` down to ``ratio`` times it."""
    if int(L) != L or L < 1:
        raise InputError("L must be a positive integer")
    if not 0 < ratio < 1:
        raise InputError("ratio must lie in (0, 1)")
    top = lambda_max(data, rule or hard(0.0))
    if L == 1:
        return np.array([top])
    return np.geomspace(top, top * ratio, int(L))


def bic_correction(cv_deviance: float, n: int, r: int, p: int, m: int) -> float:
    """``cv_deviance + log(n) * (r (p + m - r) + m)``."""
    if min(n, r, p, m) < 0:
        raise InputError("arguments must be nonnegative")
    return float(cv_deviance + math.log(n) * (r * (p + m - r) + m))


def make_folds(n: int, K: int, seed) -> list[np.ndarray]:
    """Seeded shuffle cut into ``K`` contiguous blocks of near-equal size."""
    if int(K) != K or not 2 <= K <= n:
        raise InputError(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, int(K))]


@dataclass
class PcvCandidate:
    index: int
    value: float
    eta: float
    rank: int
    cv_deviance: float
    score: float
    failed: bool = False
    message: str = ""


@dataclass
class PcvReport:
    """Per-candidate CV deviances, corrected scores and the selection.

    ``selected`` is ``None`` only when every candidate failed.
    """

    candidates: list[PcvCandidate]
    selected: int | None
    folds: int
    seed: int
    use_bic: bool
    fold_sizes: list[int] = field(default_factory=list)

    @property
    def selected_rank(self) -> int | None:
        return None if self.selected is None else self.candidates[self.selected].rank

    def to_dict(self) -> dict:
        d = asdict(self)
        for c in d["candidates"]:
            for key in ("cv_deviance", "score"):
                if not math.isfinite(c[key]):
                    c[key] = None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _candidate_design(data: DataSet, U: np.ndarray) -> np.ndarray:
    Z = data.X_slope @ U
    return np.column_stack([data.x0, Z]) if data.intercept else Z


def _cv_deviance(data: DataSet, Z: np.ndarray, folds, eta: float) -> float:
    total = 0.0
    all_rows = np.arange(data.n)
    for test in folds:
        train = np.setdiff1d(all_rows, test, assume_unique=True)
        fit = ridge_glm_fit(Z[train], data.Y[train], data.family, eta, intercept=data.intercept)
        if not fit.converged:
            raise ArithmeticError(f"fold fit did not converge (KKT residual {fit.kkt_residual:.2e})")
        total += data.family.deviance(Z[test] @ fit.coef, data.Y[test])
    if not math.isfinite(total):
        raise ArithmeticError("non-finite held-out deviance")
    return total


def pcv(
    data: DataSet,
    path: SolutionPath,
    K: int = 5,
    eta: float | None = None,
    use_bic: bool = True,
    seed: int = 0,
    jobs: int = 1,
) -> PcvReport:
    """Projective K-fold cross-validation over the candidates of ``path``.

    ``eta`` is the ridge weight of the fold refits on the scaled design; by
    default each candidate reuses its own path eta.  The weight is converted
    to the original design by ``k0 ** 2``.  A candidate whose fold fit fails
    gets an infinite score.  Ties in score go to the smaller rank.
    """
    if len(path) == 0:
        raise InputError("empty solution path")
    folds = make_folds(data.n, K, seed)

    def evaluate(item):
        idx, entry = item
        est = entry.estimate
        if entry.failed or est is None:
            return PcvCandidate(idx, entry.value, entry.eta, -1, math.inf, math.inf, True, entry.message)
        e = entry.eta if eta is None else float(eta)
        Z = _candidate_design(data, est.svd.U[:, : est.rank])
        try:
            dev = _cv_deviance(data, Z, folds, e * est.scale**2)
        except (ArithmeticError, InputError, np.linalg.LinAlgError) as exc:
            return PcvCandidate(idx, entry.value, e, est.rank, math.inf, math.inf, True, str(exc))
        score = bic_correction(dev, data.n, est.rank, data.p, data.m) if use_bic else dev
        return PcvCandidate(idx, entry.value, e, est.rank, dev, score)

    items = list(enumerate(path.entries))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cands = list(pool.map(evaluate, items))
    else:
        cands = [evaluate(it) for it in items]
    ok = [c for c in cands if math.isfinite(c.score)]
    selected = min(ok, key=lambda c: (c.score, c.rank, c.index)).index if ok else None
    return PcvReport(cands, selected, int(K), seed, use_bic, [len(f) for f in folds])
