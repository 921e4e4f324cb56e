"""Module to test dense linear algebra helpers."""

import numpy as np
import pytest

from dissiped import linalg
from dissiped.errors import DimensionMismatchError, NonFiniteEntryError, SingularMatrixError


def test_solve_linear_identity_and_diagonal() -> None:
    """Solve trivial systems exactly."""
    np.testing.assert_array_equal(linalg.solve_linear(np.eye(2), [3.0, -1.0]), [3.0, -1.0])
    np.testing.assert_allclose(linalg.solve_linear([[2.0, 0.0], [0.0, 4.0]], [2.0, 8.0]), [1.0, 2.0])


def test_solve_linear_residual() -> None:
    """Residual of a well conditioned solve stays at rounding level."""
    rng = np.random.default_rng(3)
    A = rng.standard_normal((6, 6)) + 6 * np.eye(6)
    b = rng.standard_normal(6)
    x = linalg.solve_linear(A, b)
    assert np.max(np.abs(A @ x - b)) <= 1e-10 * (1 + linalg.inf_norm(A) * np.max(np.abs(x)))


def test_solve_linear_singular() -> None:
    """Rank deficient matrix is rejected."""
    with pytest.raises(SingularMatrixError):
        linalg.solve_linear([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])


def test_non_finite_entries_rejected() -> None:
    """NaN and Inf are rejected at the boundary."""
    with pytest.raises(NonFiniteEntryError):
        linalg.as_matrix([[1.0, np.nan]])
    with pytest.raises(NonFiniteEntryError):
        linalg.as_vector([np.inf])


def test_solve_linear_dimension_mismatch() -> None:
    """Right-hand side must match the matrix."""
    with pytest.raises(DimensionMismatchError):
        linalg.solve_linear(np.eye(2), [1.0, 2.0, 3.0])


def test_eigenvalues() -> None:
    """Rotation generator has eigenvalues +i and -i; identity has a triple one."""
    values = sorted(linalg.eigenvalues([[0.0, -1.0], [1.0, 0.0]]), key=lambda value: value.imag)
    np.testing.assert_allclose(values, [-1j, 1j], atol=1e-14)
    np.testing.assert_allclose(linalg.eigenvalues(np.eye(3)), [1.0, 1.0, 1.0])


def test_eigenvalues_too_large() -> None:
    """Dimensions above 16 are not supported."""
    with pytest.raises(DimensionMismatchError):
        linalg.eigenvalues(np.eye(17))


def test_max_eig_symmetric() -> None:
    """Largest eigenvalue of symmetric matrices."""
    assert linalg.max_eig_symmetric(np.diag([-1.0, -2.0])) == pytest.approx(-1.0)
    assert linalg.max_eig_symmetric(np.zeros((3, 3))) == 0.0
    with pytest.raises(ValueError, match="not symmetric"):
        linalg.max_eig_symmetric([[0.0, 1.0], [0.0, 0.0]])


def test_is_positive_definite() -> None:
    """Cholesky test with relative pivot threshold."""
    assert linalg.is_positive_definite(np.eye(4))
    assert not linalg.is_positive_definite(np.diag([1.0, 0.0]))
    assert not linalg.is_positive_definite(np.diag([1.0, -1.0]))
    assert linalg.is_positive_definite(np.diag([1 / 10.9e-3, 1 / 22.0e-6, 1 / 10.9e-3, 1 / 22.9e-6]))


def test_rank() -> None:
    """Numerical rank from pivoted QR."""
    assert linalg.rank([[1.0, 2.0], [2.0, 4.0]]) == 1
    assert linalg.rank(np.zeros((2, 3))) == 0
    assert linalg.rank(np.eye(3)) == 3  # noqa: PLR2004
    with pytest.raises(ValueError, match="positive"):
        linalg.rank(np.eye(2), tol=0.0)


def test_spectral_norm_and_balance() -> None:
    """Spectral norm and eigenvalue preserving balancing."""
    assert linalg.spectral_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    A = np.array([[1.0, 1e6], [1e-6, 2.0]])
    balanced, scaling = linalg.balance(A)
    np.testing.assert_allclose(np.linalg.inv(np.diag(scaling)) @ A @ np.diag(scaling), balanced, rtol=1e-12)
    np.testing.assert_allclose(
        np.sort(linalg.eigenvalues(balanced).real),
        np.sort(linalg.eigenvalues(A).real),
        rtol=1e-10,
    )


def test_rank_of_transpose_with_injected_deficiency() -> None:
    """rank(A) = rank(A') for random products of thin factors."""
    rng = np.random.default_rng(4)
    for inner in range(1, 5):
        for _ in range(25):
            A = rng.standard_normal((5, inner)) @ rng.standard_normal((inner, 6))
            assert linalg.rank(A) == inner
            assert linalg.rank(A.T) == inner


def test_max_eig_symmetric_rayleigh_bound() -> None:
    """No Rayleigh quotient exceeds the largest eigenvalue."""
    rng = np.random.default_rng(8)
    G = rng.standard_normal((6, 6))
    S = G + G.T
    top = linalg.max_eig_symmetric(S)
    for _ in range(100):
        v = rng.standard_normal(6)
        assert v @ S @ v / (v @ v) <= top + 1e-12 * np.linalg.norm(S)
    eigenvector = np.linalg.eigh(S)[1][:, -1]
    assert eigenvector @ S @ eigenvector == pytest.approx(top, rel=1e-12)


def test_gram_spectrum_nonnegative() -> None:
    """Eigenvalues of A'A are real and nonnegative up to rounding."""
    rng = np.random.default_rng(9)
    for size in (2, 5, 16):
        A = rng.standard_normal((size, size))
        A[:, 0] = A[:, 1]
        assert np.all(linalg.eigenvalues(A.T @ A).real >= -1e-12 * np.linalg.norm(A) ** 2)
