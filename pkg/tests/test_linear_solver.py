import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from helmpoisson.linear_solver import SingularMatrix, factorize, power_iteration, solve


def test_one_by_one():
    F = factorize(sp.csr_matrix([[2.0]]))
    assert solve(F, np.array([4.0]))[0] == pytest.approx(2.0)


def test_identity_and_real_closure():
    F = factorize(sp.identity(7, format="csr"))
    b = np.arange(7.0)
    x = solve(F, b)
    np.testing.assert_array_equal(x, b)
    assert not np.iscomplexobj(x)


def test_real_factor_complex_rhs():
    M = sp.csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]]))
    b = np.array([1 + 2j, -1j])
    np.testing.assert_allclose(M @ solve(factorize(M), b), b, atol=1e-14)


def test_singular():
    with pytest.raises(SingularMatrix):
        factorize(sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]])))


def test_non_square():
    with pytest.raises(ValueError):
        factorize(sp.csr_matrix(np.ones((2, 3))))


def test_nilpotent():
    M = np.array([[0.0, 1.0], [0.0, 0.0]])
    assert power_iteration(lambda x: M @ x, 2).rho == pytest.approx(0.0, abs=1e-12)


# k = 1 is avoided: -k^2 and ik then share the modulus and the iterate rotates
@pytest.mark.parametrize("k", [0.5, 0.8, 1.3, 1.7])
def test_diagonal_spectrum(k):
    d = np.array([-k * k, 0.3 * k * k, 1j * k, 0.1])
    res = power_iteration(lambda x: d * x, 4, tol=1e-12, max_iter=20000)
    assert res.rho == pytest.approx(max(k * k, k), rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 1000))
def test_solve_residual(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n)
    x = solve(factorize(sp.csr_matrix(M)), b)
    np.testing.assert_allclose(M @ x, b, atol=1e-10)
