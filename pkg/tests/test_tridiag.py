import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conespec.errors import InvalidParameterError, NumericalFailure
from conespec.tridiag import SymTridiag, eigenpairs, eigenvalues, eigenvector, sturm_count

T2 = SymTridiag(np.array([2.0, 2.0]), np.array([-1.0]))


def test_two_by_two_closed_form():
    assert sturm_count(T2, 1.0) == 0 or sturm_count(T2, 1.0 + 1e-12) == 1
    assert sturm_count(T2, 1.5) == 1
    assert sturm_count(T2, 3.5) == 2
    np.testing.assert_allclose(eigenvalues(T2, 1, 2), [1.0, 3.0], atol=1e-12)
    v = eigenvector(T2, 1.0)
    np.testing.assert_allclose(np.abs(v), [1 / math.sqrt(2)] * 2, atol=1e-12)


def test_one_by_one():
    T = SymTridiag(np.array([0.0]), np.array([]))
    assert sturm_count(T, 1.0) == 1
    assert eigenvalues(T, 1, 1)[0] == pytest.approx(0.0, abs=1e-12)


def test_toeplitz_closed_form():
    # 4/h^2 (2 - 2 cos(k pi/(M+1)))
    M, h = 50, 1.0 / 51
    T = SymTridiag(np.full(M, 8 / h**2), np.full(M - 1, -4 / h**2))
    k = np.arange(1, M + 1)
    ref = 4 / h**2 * (2 - 2 * np.cos(k * np.pi / (M + 1)))
    np.testing.assert_allclose(eigenvalues(T, 1, M), ref, rtol=1e-12)


def test_defective_tolerance_raises():
    T = SymTridiag(np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.5]))
    with pytest.raises(NumericalFailure):
        eigenvalues(T, 1, 1, abs_tol=0.0, rel_tol=1e-30)
    with pytest.raises(InvalidParameterError):
        eigenvalues(T, 1, 1, abs_tol=0.0, rel_tol=0.0)


def test_bad_inputs():
    with pytest.raises(InvalidParameterError):
        SymTridiag(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    with pytest.raises(InvalidParameterError):
        SymTridiag(np.array([1.0, np.nan]), np.array([1.0]))
    with pytest.raises(InvalidParameterError):
        eigenvalues(T2, 2, 3)


def test_non_eigenvalue_shift_raises():
    with pytest.raises(NumericalFailure):
        eigenvector(T2, 2.0)


tri = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        arrays(float, n, elements=st.floats(-50, 50)),
        arrays(float, n - 1, elements=st.floats(-20, 20)),
    )
)


@given(tri)
def test_eigenvalues_match_lapack(de):
    d, e = de
    T = SymTridiag(d, e)
    ref = sla.eigh_tridiagonal(d, e, eigvals_only=True)
    got = eigenvalues(T, 1, d.size, abs_tol=1e-11)
    np.testing.assert_allclose(got, ref, atol=1e-9 * max(1.0, np.max(np.abs(ref))))


@given(tri, st.floats(-80, 80))
def test_sturm_count_matches_lapack(de, x):
    d, e = de
    ref = sla.eigh_tridiagonal(d, e, eigvals_only=True)
    if np.min(np.abs(ref - x)) < 1e-8 * max(1.0, abs(x)):
        return
    assert sturm_count(SymTridiag(d, e), x) == int(np.sum(ref < x))


@given(tri)
def test_eigenpairs_residual_and_orthogonality(de):
    d, e = de
    # well separated spectrum: shift the diagonal apart
    d = d + 200.0 * np.arange(d.size)
    T = SymTridiag(d, e)
    lams, V = eigenpairs(T, 1, d.size)
    for j, lam in enumerate(lams):
        assert np.linalg.norm(T.matvec(V[:, j]) - lam * V[:, j]) <= 1e-8 * T.norm()
    np.testing.assert_allclose(V.T @ V, np.eye(d.size), atol=1e-8)
