import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from hydroelastic.errors import SingularMatrixError, SolverError, ValidationError
from hydroelastic.solver import factorize, relative_residual, solve


# ----------------------------------------------------------------------------- small systems

class TestDirectSolve:
    """Factor-and-solve on hand-checkable systems."""

    def test_identity(self):
        b = np.arange(5.0)
        np.testing.assert_array_equal(factorize(sp.eye(5)).solve(b), b)

    def test_two_by_two(self):
        F = factorize(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]))
        np.testing.assert_allclose(F.solve([3.0, 4.0]), [1.0, 1.0], rtol=1e-14)

    def test_complex_diagonal(self):
        F = factorize(sp.diags([1j, 2j]))
        np.testing.assert_allclose(F.solve(np.array([1j, 2j])), [1.0, 1.0], rtol=1e-14)

    def test_complex_rhs_on_real_matrix(self):
        F = factorize(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]))
        np.testing.assert_allclose(F.solve(np.array([3.0 + 3j, 4.0 + 4j])), [1 + 1j, 1 + 1j], rtol=1e-14)

    def test_zero_rhs(self):
        F = factorize(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]))
        np.testing.assert_array_equal(F.solve(np.zeros(2)), 0.0)

    def test_random_spd_against_dense(self):
        rng = np.random.default_rng(42)
        B = rng.standard_normal((50, 50))
        A = B @ B.T + 50 * np.eye(50)
        b = rng.standard_normal(50)
        x = factorize(sp.csr_matrix(A)).solve(b)
        assert np.abs(x - scipy.linalg.solve(A, b, assume_a="pos")).max() < 1e-9

    def test_reuse_is_pure(self):
        rng = np.random.default_rng(3)
        A = sp.random(40, 40, density=0.2, random_state=3) + 10 * sp.eye(40)
        F = factorize(A)
        b1, b2 = rng.standard_normal(40), rng.standard_normal(40)
        x1 = F.solve(b1)
        F.solve(b2)
        np.testing.assert_array_equal(F.solve(b1), x1)
        np.testing.assert_array_equal(factorize(A).solve(b1), x1)


# ----------------------------------------------------------------------------- failures and scaling

class TestSolverErrors:
    """Singular matrices, shape errors and residual control."""

    def test_singular_carries_pivot(self):
        A = sp.csr_matrix([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 2.0]])
        with pytest.raises(SingularMatrixError) as info:
            factorize(A)
        assert info.value.pivot == 1

    def test_non_square(self):
        with pytest.raises(ValidationError):
            factorize(sp.csr_matrix(np.ones((2, 3))))

    def test_rhs_length(self):
        with pytest.raises(ValidationError):
            factorize(sp.eye(3)).solve(np.ones(4))

    def test_residual_recorded(self):
        F = factorize(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]))
        F.solve([3.0, 4.0])
        assert F.last_residual < 1e-15 and F.max_residual >= F.last_residual

    def test_rtol_violation(self):
        F = factorize(sp.csr_matrix([[2.0, 1.0], [1.0, 3.0]]))
        with pytest.raises(SolverError):
            F.solve([3.0, 4.0], rtol=-1.0)

    def test_badly_scaled_rows(self):
        # one row of order 1e10 (a stiff beam) next to rows of order 1
        rng = np.random.default_rng(0)
        A = sp.random(60, 60, density=0.1, random_state=0) + 4 * sp.eye(60)
        D = np.ones(60)
        D[:10] = 1e10
        A = sp.diags(D) @ A
        b = A @ rng.standard_normal(60)
        F = factorize(A)
        F.solve(b)
        assert F.last_residual < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 10_000))
def test_solve_residual_property(n, seed):
    """Diagonally dominant systems are solved to a tiny scaled residual."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    A += np.diag(np.abs(A).sum(axis=1) + 1)
    b = rng.standard_normal(n)
    F = factorize(sp.csr_matrix(A))
    x = solve(F, b)
    assert relative_residual(A, x, b) < 1e-12
