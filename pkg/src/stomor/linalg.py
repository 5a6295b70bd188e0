"""Dense linear-algebra kernel used by every other module.

Matrices are plain two-dimensional float64 ``numpy.ndarray`` values stored
row-major. All functions are pure: results are freshly allocated and inputs
are never modified, so they are safe to call from concurrent workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DecompositionError, SingularSystem

__all__ = [
    "SINGULAR_CONDITION_LIMIT",
    "SOLVE_RESIDUAL_RTOL",
    "SpectrumReport",
    "kron",
    "vec",
    "unvec",
    "solve_dense",
    "spectrum",
    "svd",
    "qr",
]

# Condition-number estimate beyond which a solve is refused as singular.
SINGULAR_CONDITION_LIMIT = 1e12

# Guaranteed solve accuracy: ||a @ x - b||_F <= RTOL * (1 + ||b||_F).
SOLVE_RESIDUAL_RTOL = 1e-10


def _as_matrix(a, name="matrix"):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product: entry (i*rows(b)+k, j*cols(b)+l) is a[i,j]*b[k,l]."""
    return np.kron(_as_matrix(a, "a"), _as_matrix(b, "b"))


def vec(a: np.ndarray) -> np.ndarray:
    """Stack the columns of ``a`` into a single column vector."""
    a = _as_matrix(a, "a")
    return a.reshape(-1, 1, order="F").copy()


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vec`: reshape a stacked column back to rows x cols."""
    v = np.asarray(v, dtype=float)
    if v.size != rows * cols:
        raise ValueError(f"cannot unvec {v.size} entries into {rows}x{cols}")
    return v.reshape(rows, cols, order="F").copy()


def solve_dense(a: np.ndarray, b: np.ndarray, return_residual: bool = False):
    """Solve ``a @ x = b`` by LU factorization with iterative refinement.

    Refinement steps are applied until the Frobenius residual satisfies
    ``||a @ x - b|| <= SOLVE_RESIDUAL_RTOL * (1 + ||b||)``.

    Raises
    ------
    SingularSystem
        If the 1-norm condition estimate exceeds ``SINGULAR_CONDITION_LIMIT``
        (the exception carries the estimate).
    DecompositionError
        If refinement cannot reach the residual target on a system that
        passed the condition check.
    """
    a = _as_matrix(a, "a")
    b_arr = _as_matrix(b, "b") if np.ndim(b) == 2 else np.asarray(b, float).reshape(-1, 1)
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got {a.shape}")
    if b_arr.shape[0] != n:
        raise ValueError(f"b has {b_arr.shape[0]} rows, expected {n}")

    anorm = np.linalg.norm(a, 1)
    try:
        with warnings.catch_warnings():
            # exact singularity is caught below through the condition estimate
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    except np.linalg.LinAlgError as exc:  # exactly singular
        raise SingularSystem(f"singular system: {exc}", condition=np.inf) from exc
    rcond, info = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0.0 else 1.0 / rcond
    if info != 0 or not np.isfinite(cond) or cond > SINGULAR_CONDITION_LIMIT:
        raise SingularSystem(
            f"system is singular to tolerance (condition estimate {cond:.3e})",
            condition=cond,
        )

    target = SOLVE_RESIDUAL_RTOL * (1.0 + np.linalg.norm(b_arr))
    x = scipy.linalg.lu_solve((lu, piv), b_arr, check_finite=False)
    residual = np.inf
    for _ in range(6):
        r = b_arr - a @ x
        residual = float(np.linalg.norm(r))
        if residual <= target:
            break
        x = x + scipy.linalg.lu_solve((lu, piv), r, check_finite=False)
    else:
        residual = float(np.linalg.norm(b_arr - a @ x))
    if residual > target:
        raise DecompositionError(
            f"iterative refinement stalled at residual {residual:.3e} "
            f"(target {target:.3e}, condition estimate {cond:.3e})"
        )
    if np.ndim(b) == 1:
        x = x.ravel()
    return (x, residual) if return_residual else x


@dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of a square matrix plus a Hurwitz verdict.

    ``eigenvalues`` is a complex array sorted by decreasing real part (ties
    broken by decreasing imaginary part); ``is_hurwitz`` is equivalent to
    ``max_real_part < 0``.
    """

    eigenvalues: np.ndarray
    max_real_part: float
    is_hurwitz: bool


def spectrum(a: np.ndarray) -> SpectrumReport:
    """Eigenvalues of ``a`` with the maximum real part and Hurwitz flag."""
    a = _as_matrix(a, "a")
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"a must be square, got {a.shape}")
    try:
        w = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"eigenvalue iteration failed: {exc}") from exc
    order = np.lexsort((-w.imag, -w.real))
    w = w[order]
    max_real = float(w.real.max())
    return SpectrumReport(eigenvalues=w, max_real_part=max_real, is_hurwitz=max_real < 0.0)


def svd(a: np.ndarray):
    """Thin singular value decomposition ``a = U @ diag(s) @ V.T``.

    Singular values are non-negative and non-increasing. Sign ambiguity of
    the singular vector pairs is left to callers.
    """
    a = _as_matrix(a, "a")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"SVD did not converge: {exc}") from exc
    return u, s, vh.T


def qr(a: np.ndarray):
    """Thin QR factorization with the diagonal of R normalized positive.

    Raises
    ------
    DecompositionError
        If ``a`` is rank deficient to tolerance (a zero appears on the
        diagonal of R relative to its largest entry).
    """
    a = _as_matrix(a, "a")
    q, r = np.linalg.qr(a)
    d = np.diagonal(r)
    dmax = np.abs(d).max() if d.size else 0.0
    if dmax == 0.0 or np.any(np.abs(d) <= 1e-12 * dmax):
        raise DecompositionError("matrix is rank deficient to tolerance")
    signs = np.sign(d)
    return q * signs, signs[:, None] * r
