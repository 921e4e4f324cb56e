"""
Dense real linear algebra for the small matrices of state-affine systems.

Matrices and column vectors are plain ``float64`` numpy arrays. The helpers in
this module validate them once at the boundary (shape and finiteness) and wrap
the LAPACK routines exposed by scipy with the tolerances used throughout the
package.
"""

from __future__ import annotations

import warnings

import numpy as np
import numpy.typing as npt
import scipy.linalg

from .errors import (
    DimensionMismatchError,
    NoConvergenceError,
    NonFiniteEntryError,
    SingularMatrixError,
)

Mat = npt.NDArray[np.float64]
ColVec = npt.NDArray[np.float64]

MAX_DIMENSION = 16
SINGULAR_PIVOT_TOL = 1e-13
DEFAULT_RANK_TOL = 1e-9
SYMMETRY_TOL = 1e-9
CHOLESKY_PIVOT_TOL = 1e-12


def as_matrix(data: npt.ArrayLike, name: str = "matrix") -> Mat:
    """Return data as finite 2-D float array."""
    mat = np.array(data, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2 or 0 in mat.shape:  # noqa: PLR2004
        raise DimensionMismatchError(f"{name} must be a non-empty 2-D array, got shape {mat.shape}.")
    if not np.all(np.isfinite(mat)):
        raise NonFiniteEntryError(f"{name} contains non-finite entries.")
    return mat


def as_vector(data: npt.ArrayLike, name: str = "vector") -> ColVec:
    """Return data as finite 1-D float array (column vectors are flattened)."""
    vec = np.array(data, dtype=np.float64)
    if vec.ndim == 0:
        vec = vec.reshape(1)
    elif vec.ndim == 2 and 1 in vec.shape:  # noqa: PLR2004
        vec = vec.reshape(-1)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionMismatchError(f"{name} must be a non-empty vector, got shape {vec.shape}.")
    if not np.all(np.isfinite(vec)):
        raise NonFiniteEntryError(f"{name} contains non-finite entries.")
    return vec


def _require_square(A: Mat, name: str = "matrix") -> int:
    rows, cols = A.shape
    if rows != cols:
        raise DimensionMismatchError(f"{name} must be square, got {rows}x{cols}.")
    return rows


def inf_norm(A: Mat) -> float:
    """Return maximum absolute row sum."""
    return float(np.linalg.norm(np.atleast_2d(A), np.inf))


def solve_linear(A: npt.ArrayLike, b: npt.ArrayLike) -> ColVec:
    """
    Solve ``A x = b`` by LU factorization with partial pivoting.

    Raises SingularMatrixError when a pivot is smaller than
    ``1e-13 * ||A||_inf``.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    n = _require_square(A, "A")
    if b.size != n:
        raise DimensionMismatchError(f"Right-hand side has length {b.size}, expected {n}.")
    scale = inf_norm(A)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    smallest_pivot = float(np.min(np.abs(np.diag(lu))))
    if scale == 0.0 or smallest_pivot < SINGULAR_PIVOT_TOL * scale:
        raise SingularMatrixError(
            f"Matrix is singular to working precision (pivot {smallest_pivot:.3e}, norm {scale:.3e}).",
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def eigenvalues(A: npt.ArrayLike) -> npt.NDArray[np.complex128]:
    """
    Return all eigenvalues of a square matrix (with multiplicity).

    LAPACK ``geev`` reduces to Hessenberg form and runs the shifted QR
    iteration; its internal iteration cap (30 sweeps per eigenvalue) is
    below the 100n sweep budget. Failure is reported as NoConvergenceError.
    """
    A = as_matrix(A, "A")
    n = _require_square(A, "A")
    if n > MAX_DIMENSION:
        raise DimensionMismatchError(f"Eigenvalues are supported up to n = {MAX_DIMENSION}, got {n}.")
    try:
        values = scipy.linalg.eigvals(A, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergenceError(f"QR iteration did not converge for {n}x{n} matrix.") from exc
    return np.asarray(values, dtype=np.complex128)


def symmetric_part(S: npt.ArrayLike) -> Mat:
    """Return (S + S') / 2."""
    S = as_matrix(S, "S")
    _require_square(S, "S")
    return 0.5 * (S + S.T)


def _require_symmetric(S: Mat) -> None:
    asymmetry = inf_norm(S - S.T)
    if asymmetry > SYMMETRY_TOL * max(inf_norm(S), np.finfo(float).tiny):
        raise ValueError(f"Matrix is not symmetric (||S - S'|| = {asymmetry:.3e}).")


def max_eig_symmetric(S: npt.ArrayLike) -> float:
    """Return largest eigenvalue of the symmetrized matrix."""
    S = as_matrix(S, "S")
    _require_square(S, "S")
    _require_symmetric(S)
    return float(np.linalg.eigvalsh(symmetric_part(S))[-1])


def is_positive_definite(S: npt.ArrayLike) -> bool:
    """Check positive definiteness with a Cholesky factorization and relative pivot threshold."""
    S = as_matrix(S, "S")
    n = _require_square(S, "S")
    _require_symmetric(S)
    sym = symmetric_part(S)
    trace = float(np.trace(sym))
    if trace <= 0.0:
        return False
    try:
        factor = np.linalg.cholesky(sym)
    except np.linalg.LinAlgError:
        return False
    pivots = np.diag(factor) ** 2
    return bool(np.all(pivots > CHOLESKY_PIVOT_TOL * trace / n))


def rank(A: npt.ArrayLike, tol: float = DEFAULT_RANK_TOL) -> int:
    """Return numerical rank from column-pivoted QR with relative tolerance."""
    if tol <= 0:
        raise ValueError("Rank tolerance must be positive.")
    A = as_matrix(A, "A")
    if not np.any(A):
        return 0
    r_factor = scipy.linalg.qr(A, mode="r", pivoting=True, check_finite=False)[0]
    diagonal = np.abs(np.diag(r_factor))
    return int(np.count_nonzero(diagonal > tol * diagonal[0]))


def spectral_norm(A: npt.ArrayLike) -> float:
    """Return the operator 2-norm (largest singular value)."""
    A = as_matrix(A, "A")
    return float(np.linalg.norm(A, 2))


def balance(A: npt.ArrayLike) -> tuple[Mat, ColVec]:
    """
    Balance a square matrix by a diagonal similarity.

    Returns ``(T^-1 A T, diag(T))``. Rank and spectral properties are kept
    while entries of very different magnitude are brought closer together.
    """
    A = as_matrix(A, "A")
    _require_square(A, "A")
    balanced, transform = scipy.linalg.matrix_balance(A, permute=False)
    return balanced, np.diag(transform).copy()
