"""Thresholding iterations for penalised and rank-constrained vector GLMs.

Each step takes a unit gradient step on the negative log-likelihood using the
design ``X / k0``, applies the matrix threshold to the slope block and leaves
the intercept row unthresholded.  ``k0`` comes from
:func:`rrglm.families.scale_factor`, which keeps the objective monotone.

Threshold levels (``lam``, ``eta``) refer to the scaled design.  Returned
coefficients are on the original design, so ``X @ B`` is the fitted linear
predictor.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DescentError, InputError, RuleUsageError
from .families import DataSet, get_family, scale_factor
from .linalg import RANK_RTOL, ThinSvd, numerical_rank, sym_eig, thin_svd
from .thresholding import ThresholdRule, penalty_matrix, penalty_scalar, quantile, threshold_values

DESCENT_SLACK = 1e-12
# |linear predictor| beyond which an unpenalised logistic fit is treated as separated
SEPARATION_LIMIT = 30.0


@dataclass
class FitOptions:
    """Iteration controls.

    ``callback(j, B)`` is invoked after every update with the iterate on the
    original design scale.
    """

    max_iter: int = 5000
    tol: float = 1e-9
    B0: np.ndarray | None = None
    rel_rank_tol: float = RANK_RTOL
    check_descent: bool = True
    callback: Callable[[int, np.ndarray], None] | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")
        if not self.tol > 0:
            raise InputError("tol must be positive")


@dataclass
class CoefficientEstimate:
    """A fitted coefficient matrix and its diagnostics.

    ``B`` is (p+1) x m with the intercept in row 0 (p x m without an
    intercept).  ``svd`` and ``rank`` describe the slope block only.
    """

    B: np.ndarray
    intercept: bool
    svd: ThinSvd
    rank: int
    objective: float
    converged: bool
    iterations: int
    fixed_point_residual: float
    rule: ThresholdRule
    scale: float = 1.0
    objective_trace: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    decrease_trace: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def intercept_row(self) -> np.ndarray | None:
        return self.B[0] if self.intercept else None

    @property
    def B_slope(self) -> np.ndarray:
        return self.B[1:] if self.intercept else self.B


def _slope(B: np.ndarray, intercept: bool) -> np.ndarray:
    return B[1:] if intercept else B


def _check_B(data: DataSet, B) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    if B.shape != (data.X.shape[1], data.m):
        raise InputError(f"B has shape {B.shape}, expected {(data.X.shape[1], data.m)}")
    return B


def _ridge_weight(rule: ThresholdRule, eta_extra: float | None) -> float:
    if eta_extra is not None:
        return float(eta_extra)
    return rule.eta if rule.kind == "quantile" else 0.0


def objective(
    data: DataSet,
    B,
    rule: ThresholdRule,
    eta_extra: float | None = None,
    scale: float = 1.0,
) -> float:
    """Penalised negative log-likelihood.

    ``NLL(B) + sum_i P(sigma_i(scale * B_slope)) + eta/2 ||scale * B_slope||^2``.
    The penalty term is absent for the quantile rule, whose ridge weight
    defaults to ``rule.eta``; for other rules ``eta_extra`` defaults to 0.
    ``scale`` is the design divisor ``k0`` used in fitting.
    """
    B = _check_B(data, B)
    Bs = scale * _slope(B, data.intercept)
    val = data.family.nll(data.X @ B, data.Y)
    if rule.kind != "quantile":
        val += penalty_matrix(rule, Bs)
    eta = _ridge_weight(rule, eta_extra)
    if eta:
        val += 0.5 * eta * float(np.sum(Bs**2))
    return val


def _nudged(rule: ThresholdRule, s: np.ndarray) -> ThresholdRule:
    # keep hard-type rules off their discontinuity
    if rule.kind in ("hard", "hard_ridge") and rule.lam > 0:
        if np.any(np.abs(s - rule.lam) <= 1e-12 * rule.lam):
            return rule.with_lambda(rule.lam * (1.0 + 1e-12))
    return rule


def _threshold(rule: ThresholdRule, A: np.ndarray):
    svd = thin_svd(A)
    rule_n = _nudged(rule, svd.s)
    s_new = threshold_values(rule_n, svd.s)
    return (svd.U * s_new) @ svd.V.T, s_new, svd, rule_n


_LD = np.longdouble


def _refined_values(A: np.ndarray, svd: ThinSvd) -> np.ndarray:
    # Rayleigh quotients in extended precision; their error is quadratic in
    # the singular vector error, so far below eps * ||A||
    U = svd.U.astype(_LD)
    V = svd.V.astype(_LD)
    U /= np.sqrt(np.sum(U * U, axis=0))
    V /= np.sqrt(np.sum(V * V, axis=0))
    return np.abs(np.sum((U.T @ A.astype(_LD)) * V.T, axis=1))


def _penalty_ld(rule: ThresholdRule, th: np.ndarray, eta: float) -> np.ndarray:
    lam = _LD(rule.lam)
    if rule.kind == "soft":
        val = lam * th
    elif rule.kind == "ridge":
        val = 0.5 * lam * th * th
    elif rule.kind == "hard":
        val = np.where(th < lam, -0.5 * th * th + lam * th, 0.5 * lam * lam)
    elif rule.kind == "hard_ridge":
        e = _LD(rule.eta)
        val = np.where(th != 0, 0.5 * e * th * th + lam * lam / (2 * (1 + e)), _LD(0))
    elif rule.kind == "berhu":
        M = _LD(rule.M)
        val = np.where(th <= M, lam * th, lam * (th * th + M * M) / (2 * M))
    else:
        val = np.zeros_like(th)
    if eta:
        val = val + _LD(0.5) * _LD(eta) * th * th
    return val


def _run(data: DataSet, rule: ThresholdRule, k0: float, opts: FitOptions, eta: float) -> CoefficientEstimate:
    fam, Y, icpt = data.family, data.Y, data.intercept
    X = data.X / k0
    if opts.B0 is None:
        Bt = np.zeros((X.shape[1], data.m))
    else:
        Bt = k0 * _check_B(data, opts.B0)
    F = objective(data, Bt / k0, rule, eta, scale=k0)
    theta = X @ Bt
    S0 = _slope(Bt, icpt)
    svd0 = thin_svd(S0)
    s_cur = _refined_values(S0, svd0)
    s_cur[numerical_rank(svd0.s, opts.rel_rank_tol):] = 0
    pen = _penalty_ld(rule, s_cur, eta)
    trace, drops = [F], []
    converged = False
    j = 0
    for j in range(1, opts.max_iter + 1):
        G = X.T @ (Y - fam.mean(theta))
        new = Bt + G
        arg = _slope(new, icpt)
        slope, s_new, svd_a, rule_n = _threshold(rule, arg)
        if icpt:
            new[1:] = slope
        else:
            new = slope
        theta_new = X @ new
        # penalty of the stored slope, measured along the argument's singular
        # vectors in extended precision
        th_ld = np.where(s_new > 0, _refined_values(slope, svd_a), 0)
        pen_new = _penalty_ld(rule, th_ld, eta)
        F_new = fam.nll(theta_new, Y) + float(np.sum(pen_new))
        # differencing term by term resolves drops far below ulp(F)
        drop = fam.nll_drop(theta, theta_new, Y) + float(np.sum(pen - pen_new))
        if opts.check_descent and drop < -DESCENT_SLACK:
            raise DescentError(
                f"objective increased by {-drop:.3e} at iteration {j} (k0={k0:.6g}, rule={rule.spec()})"
            )
        theta, pen = theta_new, pen_new
        drops.append(drop)
        change = np.linalg.norm(new - Bt) / k0
        size = np.linalg.norm(Bt) / k0
        Bt, F = new, F_new
        trace.append(F)
        if opts.callback is not None:
            opts.callback(j, Bt / k0)
        if change <= opts.tol * max(1.0, size):
            converged = True
            break
    B = Bt / k0
    svd = thin_svd(_slope(B, icpt))
    return CoefficientEstimate(
        B=B,
        intercept=icpt,
        svd=svd,
        rank=numerical_rank(svd.s, opts.rel_rank_tol),
        objective=objective(data, B, rule, eta, scale=k0),
        converged=converged,
        iterations=j,
        fixed_point_residual=fixed_point_residual(data, B, rule, scale=k0),
        rule=rule,
        scale=k0,
        objective_trace=np.asarray(trace),
        decrease_trace=np.asarray(drops),
    )


def penalized_fit(data: DataSet, rule: ThresholdRule, opts: FitOptions | None = None) -> CoefficientEstimate:
    """Minimise ``NLL(B) + sum P(sigma_i(B_slope))`` by matrix thresholding.

    Returns a non-converged estimate (``converged=False``) when ``max_iter``
    is exhausted.

    Raises
    ------
    RuleUsageError
        For the quantile rule; use :func:`constrained_fit`.
    DescentError
        If the objective increases by more than roundoff.
    """
    if rule.kind == "quantile":
        raise RuleUsageError("use constrained_fit for the quantile rule")
    opts = opts or FitOptions()
    k0 = scale_factor(data.family, data.X, rule)
    return _run(data, rule, k0, opts, 0.0)


def constrained_fit(data: DataSet, r: int, eta: float = 0.0, opts: FitOptions | None = None) -> CoefficientEstimate:
    """Minimise ``NLL(B) + eta/2 ||B_slope||^2`` subject to ``rank(B_slope) <= r``.

    Every iterate after the starting point has slope rank at most ``r``.
    """
    if int(r) != r or not 1 <= r <= min(data.p, data.m):
        raise InputError(f"rank r={r} outside [1, {min(data.p, data.m)}]")
    if eta < 0:
        raise InputError("eta must be >= 0")
    opts = opts or FitOptions()
    rule = quantile(int(r), eta)
    k0 = scale_factor(data.family, data.X, rule, constrained=True)
    return _run(data, rule, k0, opts, float(eta))


def fixed_point_residual(data: DataSet, B, rule: ThresholdRule, scale: float | None = None) -> float:
    """Distance of ``B`` from the thresholding fixed-point equations.

    Computed on the design ``X / scale`` and reported in the units of ``B``:
    ``(||B~_slope - Theta(B~_slope + X~_slope^T (Y - mu))||_F
    + ||(Y - mu)^T x~_0||_2) / scale`` with ``B~ = scale * B``.
    """
    B = _check_B(data, B)
    if scale is None:
        scale = scale_factor(data.family, data.X, rule, constrained=rule.kind == "quantile")
    X = data.X / scale
    Bt = scale * B
    G = X.T @ (data.Y - data.family.mean(X @ Bt))
    Bs = _slope(Bt, data.intercept)
    moved = _threshold(rule, Bs + _slope(G, data.intercept))[0]
    res = np.linalg.norm(Bs - moved)
    if data.intercept:
        res += np.linalg.norm(G[0])
    return float(res / scale)


def rrr_closed_form(X, Y, lam: float | None = None, rank: int | None = None) -> np.ndarray:
    """Classical reduced-rank regression.

    ``B = B_ols V_r V_r^T`` where ``V_r`` holds the top ``r`` eigenvectors of
    ``Y^T H Y = V D^2 V^T``.  Give either ``rank`` or ``lam``; with ``lam``,
    ``r = #{i : d_i >= lam}`` (the global minimiser of
    ``||Y - XB||^2 / 2 + lam^2 / 2 * rank(B)``).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if (lam is None) == (rank is None):
        raise InputError("give exactly one of lam and rank")
    n, p = X.shape
    if n < p or np.linalg.matrix_rank(X) < p:
        raise InputError("X must have full column rank")
    B_ols = np.linalg.lstsq(X, Y, rcond=None)[0]
    fitted = X @ B_ols
    V, d2 = sym_eig(fitted.T @ fitted)
    d = np.sqrt(np.clip(d2, 0.0, None))
    if rank is None:
        r = int(np.count_nonzero(d >= lam))
    else:
        r = int(rank)
        if not 0 <= r <= Y.shape[1]:
            raise InputError(f"rank {r} outside [0, {Y.shape[1]}]")
    Vr = V[:, :r]
    return B_ols @ Vr @ Vr.T


@dataclass
class RidgeFit:
    coef: np.ndarray
    converged: bool
    iterations: int
    kkt_residual: float


def ridge_kkt_residual(Z, Y, family, eta: float, C, intercept: bool = True) -> float:
    """Max-abs violation of the ridge-GLM stationarity conditions."""
    fam = get_family(family)
    R = np.asarray(Y, dtype=float) - fam.mean(Z @ C)
    G = Z.T @ R
    if intercept:
        return float(max(np.max(np.abs(G[0])), np.max(np.abs(eta * C[1:] - G[1:]), initial=0.0)))
    return float(np.max(np.abs(eta * C - G)))


def ridge_glm_fit(
    Z,
    Y,
    family,
    eta: float = 0.0,
    intercept: bool = True,
    max_iter: int = 100,
    tol: float = 1e-9,
) -> RidgeFit:
    """Per-response GLM fit with an unpenalised intercept and ridge slope.

    Minimises ``NLL(C) + eta/2 ||C_slope||_F^2``.  Gaussian fits are a single
    linear solve; Bernoulli fits use damped Newton steps.  Non-convergence
    is reported through ``converged=False`` rather than raised; this
    includes unpenalised fits whose linear predictor exceeds
    ``SEPARATION_LIMIT`` in magnitude (separated data).

    Raises
    ------
    InputError
        When ``eta = 0`` and ``Z`` is column-rank deficient.
    """
    fam = get_family(family)
    Z = np.asarray(Z, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if eta < 0:
        raise InputError("eta must be >= 0")
    if Z.shape[0] != Y.shape[0]:
        raise InputError(f"Z has {Z.shape[0]} rows but Y has {Y.shape[0]}")
    q = Z.shape[1]
    pen = np.full(q, float(eta))
    if intercept:
        pen[0] = 0.0
    if eta == 0 and np.linalg.matrix_rank(Z) < q:
        raise InputError("singular normal equations: Z is rank deficient and eta = 0")

    if fam.tag == "gaussian":
        C = np.linalg.solve(Z.T @ Z + np.diag(pen), Z.T @ Y)
        return RidgeFit(C, True, 1, ridge_kkt_residual(Z, Y, fam, eta, C, intercept))

    def f(c, y):
        return fam.nll(Z @ c, y) + 0.5 * float(np.sum(pen * c**2))

    C = np.zeros((q, Y.shape[1]))
    all_ok, worst_it = True, 0
    for k in range(Y.shape[1]):
        y, c = Y[:, k], C[:, k]
        ok = False
        gtol = tol * max(1.0, float(np.max(np.abs(Z.T @ y))))
        for it in range(1, max_iter + 1):
            mu = fam.mean(Z @ c)
            g = Z.T @ (mu - y) + pen * c
            if np.max(np.abs(g)) <= gtol:
                ok = True
                break
            H = (Z.T * fam.variance(Z @ c)) @ Z + np.diag(pen)
            try:
                step = np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            f0, t, dec = f(c, y), 1.0, float(g @ step)
            # a decrement at roundoff level means the full step is already safe
            if dec > 1e-12 * max(1.0, abs(f0)):
                while f(c - t * step, y) > f0 - 1e-4 * t * dec and t > 1e-12:
                    t *= 0.5
            c = c - t * step
        # a vanishing gradient with saturated fitted probabilities signals separation
        if ok and eta == 0 and np.max(np.abs(Z @ c)) > SEPARATION_LIMIT:
            ok = False
        C[:, k] = c
        all_ok &= ok
        worst_it = max(worst_it, it)
    return RidgeFit(C, all_ok, worst_it, ridge_kkt_residual(Z, Y, fam, eta, C, intercept))


@dataclass
class PathEntry:
    value: float
    eta: float
    estimate: CoefficientEstimate | None
    failed: bool = False
    message: str = ""

    @property
    def rank(self) -> int:
        return -1 if self.estimate is None else self.estimate.rank


@dataclass
class SolutionPath:
    """Estimates along a tuning grid, in grid order.

    ``mode`` is ``"penalized"`` (values are lambdas) or ``"constrained"``
    (values are ranks).
    """

    mode: str
    rule: ThresholdRule
    entries: list[PathEntry]

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def _entry_rule(template: ThresholdRule, value: float, eta: float) -> ThresholdRule:
    if template.kind == "quantile":
        return replace(template, r=int(value), eta=eta)
    return replace(template, lam=float(value), eta=eta)


def _fit_one(data: DataSet, rule: ThresholdRule, opts: FitOptions) -> CoefficientEstimate:
    if rule.kind == "quantile":
        return constrained_fit(data, rule.r, rule.eta, opts)
    return penalized_fit(data, rule, opts)


def fit_path(
    data: DataSet,
    rule: ThresholdRule,
    grid: Sequence[float],
    opts: FitOptions | None = None,
    eta_grid: Sequence[float] | None = None,
    jobs: int = 1,
) -> SolutionPath:
    """Fit one estimate per grid value.

    For the quantile rule the grid holds ranks; otherwise it holds lambdas.
    Convex rules are fitted sequentially with warm starts; other rules start
    every fit from ``opts.B0`` (zero by default), so they may run on ``jobs``
    threads.  With ``eta_grid`` each eta is crossed with the whole grid.
    A failing fit is recorded on its entry rather than raised.
    """
    grid = list(grid)
    if not grid:
        raise InputError("empty tuning grid")
    grid = [int(v) if rule.kind == "quantile" else float(v) for v in grid]
    opts = opts or FitOptions()
    etas = [rule.eta] if eta_grid is None else [float(e) for e in eta_grid]
    mode = "constrained" if rule.kind == "quantile" else "penalized"
    cells = [(v, e) for e in etas for v in grid]

    def run(cell, B0=None):
        v, e = cell
        o = opts if B0 is None else replace(opts, B0=B0)
        try:
            return PathEntry(v, e, _fit_one(data, _entry_rule(rule, v, e), o))
        except (DescentError, InputError, np.linalg.LinAlgError) as exc:
            return PathEntry(v, e, None, True, f"{type(exc).__name__}: {exc}")

    entries: list[PathEntry] = []
    if rule.is_convex:
        for e in etas:
            warm = opts.B0
            for v in grid:
                ent = run((v, e), warm)
                entries.append(ent)
                if ent.estimate is not None:
                    warm = ent.estimate.B
    elif jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(run, cells))
    else:
        entries = [run(c) for c in cells]
    return SolutionPath(mode, rule, entries)
