"""Exponential families with canonical link, and the data container.

Only the unit-dispersion Gaussian and the Bernoulli-logit families are
provided.  Constants that depend on ``y`` alone are dropped from the
negative log-likelihood.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import InputError
from .linalg import spectral_norm


@dataclass(frozen=True)
class Family:
    """Natural exponential family ``exp(y*theta - b(theta) + c(y))``."""

    tag: str

    def cumulant(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.tag == "gaussian":
            return 0.5 * theta**2
        return np.logaddexp(0.0, theta)

    def mean(self, theta):
        """Inverse canonical link ``b'(theta)``."""
        theta = np.asarray(theta, dtype=float)
        if self.tag == "gaussian":
            return theta
        return expit(theta)

    def variance(self, theta):
        """``b''(theta)``."""
        theta = np.asarray(theta, dtype=float)
        if self.tag == "gaussian":
            return np.ones_like(theta)
        mu = expit(theta)
        return mu * (1.0 - mu)

    @property
    def max_variance(self) -> float:
        """Uniform bound on ``b''``."""
        return 1.0 if self.tag == "gaussian" else 0.25

    def nll_terms(self, theta, Y) -> np.ndarray:
        """Entrywise contributions to :meth:`nll`."""
        theta = np.asarray(theta, dtype=float)
        if self.tag == "gaussian":
            return 0.5 * (Y - theta) ** 2
        return np.logaddexp(0.0, theta) - Y * theta

    def nll_drop(self, theta_old, theta_new, Y) -> float:
        """``nll(theta_old) - nll(theta_new)`` without cancellation.

        Each entry's difference is formed algebraically, so the rounding
        error scales with the size of the change rather than the size of
        the likelihood.
        """
        a = np.asarray(theta_old, dtype=float)
        c = np.asarray(theta_new, dtype=float)
        d = a - c
        if self.tag == "gaussian":
            return float(np.sum(d * (0.5 * (a + c) - Y)))
        # b(a) - b(c) = log1p(expit(c) * expm1(a - c)); direct form when exp would overflow
        with np.errstate(over="ignore"):
            db = np.log1p(expit(c) * np.expm1(d))
        big = ~np.isfinite(db) | (np.abs(d) > 30)
        if np.any(big):
            db[big] = np.logaddexp(0.0, a[big]) - np.logaddexp(0.0, c[big])
        return float(np.sum(db - Y * d))

    def nll(self, theta, Y) -> float:
        """``sum(b(theta) - y * theta)``; for the Gaussian ``||Y - theta||^2 / 2``."""
        return float(np.sum(self.nll_terms(theta, Y)))

    def deviance(self, theta, Y) -> float:
        """Twice the log-likelihood gap to the saturated model."""
        # the saturated Bernoulli fit has zero nll for 0/1 data
        return 2.0 * self.nll(theta, Y)

    def validate_response(self, Y: np.ndarray) -> None:
        if self.tag == "bernoulli_logit" and not np.all((Y == 0) | (Y == 1)):
            bad = np.argwhere((Y != 0) & (Y != 1))[0]
            raise InputError(
                f"bernoulli response must be 0/1; found {float(Y[tuple(bad)])!r} at row {bad[0]}, column {bad[1]}"
            )


GAUSSIAN = Family("gaussian")
BERNOULLI = Family("bernoulli_logit")

_ALIASES = {
    "gaussian": GAUSSIAN,
    "normal": GAUSSIAN,
    "bernoulli": BERNOULLI,
    "bernoulli_logit": BERNOULLI,
    "logistic": BERNOULLI,
    "binomial": BERNOULLI,
}


def get_family(family) -> Family:
    if isinstance(family, Family):
        return family
    try:
        return _ALIASES[str(family).lower()]
    except KeyError:
        raise InputError(f"unknown family {family!r}") from None


@dataclass(frozen=True)
class DataSet:
    """Design, responses and family.

    When ``intercept`` is true the first column of ``X`` is the (unpenalised)
    intercept column and the remaining ``p`` columns are the slope design
    ``X_slope``.  Without an intercept ``X_slope`` is all of ``X``.
    """

    X: np.ndarray
    Y: np.ndarray
    family: Family = GAUSSIAN
    intercept: bool = True
    names: tuple = field(default=(), compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.ndim != 2 or Y.ndim != 2:
            raise InputError("X and Y must be 2-d")
        if X.shape[0] != Y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError("X and Y must be finite")
        fam = get_family(self.family)
        fam.validate_response(Y)
        p = X.shape[1] - (1 if self.intercept else 0)
        if X.shape[0] < 1 or p < 1 or Y.shape[1] < 1:
            raise InputError("need n, p, m >= 1")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "family", fam)

    @classmethod
    def from_predictors(cls, X, Y, family=GAUSSIAN, intercept: bool = True) -> "DataSet":
        """Build from a raw n x p predictor matrix, prepending ones if asked."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return cls(X, Y, get_family(family), intercept)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1] - (1 if self.intercept else 0)

    @property
    def m(self) -> int:
        return self.Y.shape[1]

    @property
    def X_slope(self) -> np.ndarray:
        return self.X[:, 1:] if self.intercept else self.X

    @property
    def x0(self) -> np.ndarray | None:
        return self.X[:, 0] if self.intercept else None

    def with_design(self, X_slope: np.ndarray) -> "DataSet":
        """Same responses, intercept column kept, slope design replaced."""
        if self.intercept:
            X = np.column_stack([self.X[:, :1], X_slope])
        else:
            X = np.asarray(X_slope, dtype=float)
        return DataSet(X, self.Y, self.family, self.intercept)

    def subset(self, rows) -> "DataSet":
        return DataSet(self.X[rows], self.Y[rows], self.family, self.intercept)


def _check_dims(X, B):
    X = np.asarray(X, dtype=float)
    B = np.asarray(B, dtype=float)
    if X.ndim != 2 or B.ndim != 2 or X.shape[1] != B.shape[0]:
        raise InputError(f"cannot multiply X{X.shape} by B{B.shape}")
    return X, B


def mean_matrix(family, X, B) -> np.ndarray:
    """Entry ``(i, k)`` is ``b'(x_i^T b_k)``."""
    X, B = _check_dims(X, B)
    return get_family(family).mean(X @ B)


def neg_log_likelihood(family, X, Y, B) -> float:
    X, B = _check_dims(X, B)
    Y = np.asarray(Y, dtype=float)
    if Y.shape != (X.shape[0], B.shape[1]):
        raise InputError(f"Y has shape {Y.shape}, expected {(X.shape[0], B.shape[1])}")
    return get_family(family).nll(X @ B, Y)


def nll_gradient(family, X, Y, B) -> np.ndarray:
    """Gradient of :func:`neg_log_likelihood` in ``B``: ``X^T (mu - Y)``."""
    X, B = _check_dims(X, B)
    return X.T @ (get_family(family).mean(X @ B) - Y)


def deviance(family, X, Y, B) -> float:
    return 2.0 * neg_log_likelihood(family, X, Y, B)


def rho_upper_bound(family, X) -> float:
    """Bound on the spectral norm of the information matrix ``X^T W X``."""
    return get_family(family).max_variance * spectral_norm(X) ** 2


def scale_factor(family, X, rule=None, constrained: bool = False) -> float:
    """Design divisor ``k0`` that makes the thresholding iteration monotone.

    Penalised fits use ``sqrt(rho / (2 - L_Theta))``, constrained fits
    ``sqrt(rho)``; both are floored at 1 so the design is never enlarged.
    """
    rho = rho_upper_bound(family, X)
    if constrained or rule is None or rule.kind == "quantile":
        k0 = np.sqrt(rho)
    else:
        k0 = np.sqrt(rho / (2.0 - rule.curvature))
    return float(max(1.0, k0))
