"""Scalar threshold rules, their singular-value versions and coupled penalties.

A rule ``Theta(t; lam)`` is odd, nondecreasing and shrinks toward zero.  Its
matrix version acts on the singular values of a matrix and keeps the singular
vectors.  Each rule has a penalty ``P`` for which the matrix rule is the exact
minimiser of ``||Y - B||_F^2 / 2 + sum_i P(sigma_i(B))``.

The quantile rule keeps the ``r`` largest entries (shrunk by ``1 + eta``) and
is the proximal map of a rank constraint plus a ridge term rather than of a
penalty.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError, RuleUsageError
from .linalg import ThinSvd, numerical_rank, thin_svd

KINDS = ("soft", "hard", "ridge", "hard_ridge", "berhu", "quantile")

# upper bound on 1 - d(Theta^{-1})/du; 0 for every convex penalty
_CURVATURE = {
    "soft": 0.0,
    "ridge": 0.0,
    "berhu": 0.0,
    "hard": 1.0,
    "hard_ridge": 1.0,
    "quantile": 1.0,
}

CONVEX_KINDS = frozenset({"soft", "ridge", "berhu"})


@dataclass(frozen=True)
class ThresholdRule:
    """A threshold rule and its parameters.

    Parameters
    ----------
    kind : str
        One of ``soft``, ``hard``, ``ridge``, ``hard_ridge``, ``berhu``,
        ``quantile``.
    lam : float
        Threshold level (unused by ``quantile``).
    eta : float
        Ridge shrinkage for ``hard_ridge`` and ``quantile``.
    M : float
        Berhu transition width.
    r : int
        Number of singular values kept by ``quantile``.
    """

    kind: str
    lam: float = 0.0
    eta: float = 0.0
    M: float = 1.0
    r: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown rule kind {self.kind!r}")
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise InputError(f"lambda must be finite and >= 0, got {self.lam}")
        if not (np.isfinite(self.eta) and self.eta >= 0):
            raise InputError(f"eta must be finite and >= 0, got {self.eta}")
        if self.kind == "berhu" and not self.M > 0:
            raise InputError(f"berhu needs M > 0, got {self.M}")
        if self.kind == "quantile" and (int(self.r) != self.r or self.r < 1):
            raise InputError(f"quantile needs an integer r >= 1, got {self.r}")

    @property
    def curvature(self) -> float:
        """The constant ``L_Theta`` in [0, 1]."""
        return _CURVATURE[self.kind]

    @property
    def is_convex(self) -> bool:
        return self.kind in CONVEX_KINDS

    def with_lambda(self, lam: float) -> "ThresholdRule":
        return replace(self, lam=float(lam))

    def spec(self) -> str:
        """Inverse of :func:`parse_rule`."""
        name = "hardridge" if self.kind == "hard_ridge" else self.kind
        if self.kind == "quantile":
            return f"quantile:r={self.r},eta={self.eta!r}"
        args = [f"lambda={self.lam!r}"]
        if self.kind == "hard_ridge":
            args.append(f"eta={self.eta!r}")
        if self.kind == "berhu":
            args.append(f"M={self.M!r}")
        return f"{name}:" + ",".join(args)


def soft(lam: float) -> ThresholdRule:
    return ThresholdRule("soft", lam=lam)


def hard(lam: float) -> ThresholdRule:
    return ThresholdRule("hard", lam=lam)


def ridge(lam: float) -> ThresholdRule:
    return ThresholdRule("ridge", lam=lam)


def hard_ridge(lam: float, eta: float) -> ThresholdRule:
    return ThresholdRule("hard_ridge", lam=lam, eta=eta)


def berhu(lam: float, M: float) -> ThresholdRule:
    return ThresholdRule("berhu", lam=lam, M=M)


def quantile(r: int, eta: float = 0.0) -> ThresholdRule:
    return ThresholdRule("quantile", r=int(r), eta=eta)


_SPEC_NAMES = {
    "soft": "soft",
    "hard": "hard",
    "ridge": "ridge",
    "hardridge": "hard_ridge",
    "hard_ridge": "hard_ridge",
    "berhu": "berhu",
    "quantile": "quantile",
}
_SPEC_KEYS = {"lambda": "lam", "lam": "lam", "eta": "eta", "M": "M", "m": "M", "r": "r"}


def parse_rule(text: str) -> ThresholdRule:
    """Parse ``kind:key=value,...`` (e.g. ``hardridge:lambda=2,eta=0.1``).

    Parameters may be omitted; omitted values take the dataclass defaults,
    which lets a path command supply ``lambda`` from a grid.
    """
    name, _, rest = text.strip().partition(":")
    kind = _SPEC_NAMES.get(name.strip().lower())
    if kind is None:
        raise InputError(f"unknown rule {name!r} in {text!r}")
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        field = _SPEC_KEYS.get(key.strip())
        if not sep or field is None:
            raise InputError(f"bad rule parameter {item!r} in {text!r}")
        try:
            kwargs[field] = int(value) if field == "r" else float(value)
        except ValueError:
            raise InputError(f"non-numeric value in {item!r}") from None
    return ThresholdRule(kind, **kwargs)


def apply_scalar(rule: ThresholdRule, t):
    """Evaluate the scalar rule elementwise.

    At the discontinuities ``hard`` zeroes ``|t| <= lam`` while ``hard_ridge``
    keeps ``|t| == lam``.
    """
    if rule.kind == "quantile":
        raise RuleUsageError("the quantile rule acts on whole vectors; use apply_quantile")
    t = np.asarray(t, dtype=float)
    a, lam = np.abs(t), rule.lam
    if rule.kind == "soft":
        out = np.where(a > lam, t - np.sign(t) * lam, 0.0)
    elif rule.kind == "hard":
        out = np.where(a > lam, t, 0.0)
    elif rule.kind == "ridge":
        out = t / (1.0 + lam)
    elif rule.kind == "hard_ridge":
        out = np.where(a >= lam, t / (1.0 + rule.eta), 0.0)
    else:  # berhu
        M = rule.M
        out = np.where(
            a <= lam,
            0.0,
            np.where(a < lam + M, t - np.sign(t) * lam, t / (1.0 + lam / M)),
        )
    return out[()] if out.ndim == 0 else out


def apply_quantile(a, r: int, eta: float = 0.0) -> np.ndarray:
    """Keep the ``r`` largest-magnitude entries of ``a``, divided by ``1 + eta``.

    Ties are resolved in favour of the lower index.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise InputError("apply_quantile expects a vector")
    if int(r) != r or not 1 <= r <= a.size:
        raise InputError(f"r={r} outside [1, {a.size}]")
    if eta < 0:
        raise InputError("eta must be >= 0")
    keep = np.argsort(-np.abs(a), kind="stable")[: int(r)]
    out = np.zeros_like(a)
    out[keep] = a[keep] / (1.0 + eta)
    return out


def threshold_values(rule: ThresholdRule, s: np.ndarray) -> np.ndarray:
    """Apply ``rule`` to a nonincreasing vector of singular values."""
    if rule.kind == "quantile":
        if s.size == 0:
            return s.copy()
        return apply_quantile(s, min(rule.r, s.size), rule.eta)
    return np.asarray(apply_scalar(rule, s), dtype=float).reshape(s.shape)


def threshold_svd(rule: ThresholdRule, B) -> tuple[np.ndarray, ThinSvd]:
    """Matrix threshold plus the thin SVD of the result."""
    svd = thin_svd(B)
    s_new = threshold_values(rule, svd.s)
    # thresholding can reorder only through ties; keep factors sorted
    order = np.argsort(-s_new, kind="stable")
    out = ThinSvd(svd.U[:, order], s_new[order], svd.V[:, order])
    return out.reconstruct(), out


def apply_matrix(rule: ThresholdRule, B) -> np.ndarray:
    """``U diag(Theta(sigma_i)) V^T`` for the SVD ``B = U diag(sigma) V^T``.

    For the quantile rule ``r`` is capped at ``min(B.shape)``.
    """
    return threshold_svd(rule, B)[0]


def penalty_scalar(rule: ThresholdRule, theta):
    """Coupled penalty ``P(theta) - P(0)``, elementwise."""
    if rule.kind == "quantile":
        raise RuleUsageError("the quantile rule is a constraint and has no penalty")
    theta = np.asarray(theta, dtype=float)
    a, lam = np.abs(theta), rule.lam
    if rule.kind == "soft":
        out = lam * a
    elif rule.kind == "ridge":
        out = 0.5 * lam * theta**2
    elif rule.kind == "hard":
        out = np.where(a < lam, -0.5 * theta**2 + lam * a, 0.5 * lam**2)
    elif rule.kind == "hard_ridge":
        eta = rule.eta
        out = 0.5 * eta * theta**2 + np.where(a != 0, 0.5 * lam**2 / (1.0 + eta), 0.0)
    else:  # berhu
        M = rule.M
        out = np.where(a <= M, lam * a, lam * (theta**2 + M**2) / (2.0 * M))
    return out[()] if out.ndim == 0 else out


def penalty_matrix(rule: ThresholdRule, B) -> float:
    """Sum of :func:`penalty_scalar` over the singular values of ``B``."""
    if rule.kind == "quantile":
        raise RuleUsageError("the quantile rule is a constraint and has no penalty")
    s = thin_svd(B).s.copy()
    # roundoff-level singular values are zeros of the rank term
    s[numerical_rank(s):] = 0.0
    return float(np.sum(penalty_scalar(rule, s)))
