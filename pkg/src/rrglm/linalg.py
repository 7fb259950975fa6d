"""Dense linear-algebra primitives shared by the solvers.

All routines are thin, deterministic wrappers around LAPACK via numpy.  The
SVD is sign-normalised so that repeated calls on the same matrix return the
same factors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class ThinSvd:
    """Economy SVD ``A = U @ diag(s) @ V.T``.

    ``U`` is n x k, ``s`` has length k = min(n, m) (nonincreasing), ``V`` is
    m x k.
    """

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def reconstruct(self, s: np.ndarray | None = None) -> np.ndarray:
        s = self.s if s is None else s
        return (self.U * s) @ self.V.T

    def truncate(self, r: int) -> "ThinSvd":
        return ThinSvd(self.U[:, :r], self.s[:r], self.V[:, :r])


def _as_finite_matrix(A, name="A") -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InputError(f"{name} must be a 2-d array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} contains non-finite entries")
    return A


def _fix_signs(U: np.ndarray, V: np.ndarray) -> None:
    # first nonzero entry of every left vector made nonnegative (in place)
    if U.size == 0:
        return
    big = np.abs(U) > 1e-14
    first = U[np.argmax(big, axis=0), np.arange(U.shape[1])]
    flip = big.any(axis=0) & (first < 0)
    U[:, flip] *= -1.0
    V[:, flip] *= -1.0


def thin_svd(A) -> ThinSvd:
    """Thin SVD with deterministic signs.

    Raises
    ------
    InputError
        If ``A`` is not a finite 2-d array.
    """
    A = _as_finite_matrix(A)
    n, m = A.shape
    if n == 0 or m == 0:
        k = 0
        return ThinSvd(np.zeros((n, k)), np.zeros(k), np.zeros((m, k)))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    V = Vt.T.copy()
    _fix_signs(U, V)
    return ThinSvd(U, s, V)


def ordered_basis(blocks, r: int, rel_tol: float = 1e-8) -> np.ndarray:
    """Orthonormal ``r``-column basis filled block by block.

    The significant left singular directions of ``blocks[0]`` come first, then
    those of each later block after projecting out the basis so far; any
    remaining columns complete the space orthogonally.  A direction is
    significant when its singular value exceeds ``rel_tol`` times the block's
    spectral norm.
    """
    blocks = [_as_finite_matrix(b) for b in blocks]
    n = blocks[0].shape[0]
    if not 0 <= r <= n:
        raise InputError(f"r={r} outside [0, {n}]")
    Q = np.zeros((n, 0))
    for b in blocks:
        if Q.shape[1] >= r or not np.any(b):
            continue
        rest = b - Q @ (Q.T @ b)
        rest -= Q @ (Q.T @ rest)
        svd = thin_svd(rest)
        k = int(np.count_nonzero(svd.s > rel_tol * np.linalg.norm(b, 2)))
        new = svd.U[:, : min(k, r - Q.shape[1])]
        new -= Q @ (Q.T @ new)
        Q = np.column_stack([Q, np.linalg.qr(new)[0] if new.size else new])
    if Q.shape[1] < r:
        U, _, _ = np.linalg.svd(np.eye(n) - Q @ Q.T)
        Q = np.column_stack([Q, U[:, : r - Q.shape[1]]])
    return Q


def sym_eig(S) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues nonincreasing.

    Returns ``(V, d)`` with ``S @ V == V @ diag(d)``.
    """
    S = _as_finite_matrix(S, "S")
    if S.shape[0] != S.shape[1]:
        raise InputError(f"S must be square, got {S.shape}")
    scale = np.max(np.abs(S)) if S.size else 0.0
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-8 * scale:
        raise InputError("S is not symmetric")
    d, V = np.linalg.eigh((S + S.T) / 2)
    order = np.argsort(d)[::-1]
    d, V = d[order], V[:, order].copy()
    _fix_signs(V, np.zeros((1, V.shape[1])))
    return V, d


def spectral_norm(A, tol: float = 1e-12) -> float:
    """Largest singular value of ``A``.

    Computed from the dense singular values, so the result is accurate to
    working precision; ``tol`` only has to be positive.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    A = _as_finite_matrix(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def numerical_rank(s, rel_tol: float = RANK_RTOL) -> int:
    """Count of singular values above ``rel_tol * s[0]``."""
    s = np.asarray(s, dtype=float)
    if s.size == 0 or s[0] <= 0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))
