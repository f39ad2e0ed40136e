import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conespec.cross_section import round_sphere
from conespec.errors import InvalidParameterError, NoAdmissibleDeltaError, SubcriticalModeError, UnsupportedOperation
from conespec.geometry import ExactCone, PerturbedCone, Spindle
from conespec.radial_modes import (
    ModeODE,
    RadialGrid,
    assemble_generalized,
    closed_form_solution,
    compute_delta0,
    delta0_min_eigenvalue,
    discretize,
    from_w,
    ground_eigenvalue_refinement,
    hardy_report,
    mode_potential,
    ode_residual,
    to_w,
)
from conespec.special import bessel_j_zero
from conespec.tridiag import SymTridiag, eigenvalues


def test_potential_examples():
    r = np.linspace(0.1, 1.0, 10)
    assert np.all(mode_potential(3, 2.0, ExactCone())(r) == 0.0)
    np.testing.assert_allclose(mode_potential(4, 6.0, ExactCone())(r), 3 / r**2, rtol=1e-15)
    assert mode_potential(3, 2.0, Spindle(1.0, math.pi))(math.pi / 2) == pytest.approx(2.0, rel=1e-14)


@given(st.floats(0.5, 50.0), st.floats(0.05, 1.0))
def test_exact_cone_potential_scaling(mu, r):
    q = mode_potential(3, mu, ExactCone())(r)
    assert q * r * r == pytest.approx(mu - 2, rel=1e-13, abs=1e-13)


def test_toy_grid_toeplitz():
    h = 1 / 3
    idx, d, e, B = assemble_generalized(np.array([0.0, h, 2 * h, 1.0]), np.zeros(4))
    T = SymTridiag(d / B, e / np.sqrt(B[:-1] * B[1:]))
    np.testing.assert_allclose(T.diag, 8 / h**2)
    np.testing.assert_allclose(T.offdiag, -4 / h**2)
    assert eigenvalues(T, 1, 1)[0] == pytest.approx(36.0, rel=1e-13)


def test_operator_structure():
    op = discretize(ModeODE(3, 10.0, PerturbedCone(0.1, 1.5)), RadialGrid.log_uniform(1.0, 400, 1e-5))
    assert np.all(op.a_off < 0)
    assert np.all(op.mass > 0)
    assert op.inner_bc == "robin"


def test_free_schrodinger_convergence_order():
    mode = ModeODE(3, 2.0, ExactCone())
    errs = []
    for M in (100, 200, 400):
        op = discretize(mode, RadialGrid.uniform(1.0, M, 0.0))
        errs.append(abs(op.eigenvalues(1, 1)[0] - 4 * math.pi**2))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(orders, 2.0, atol=0.05)


def test_limit_circle_robin_matches_bessel():
    mode = ModeODE(3, 1.49, ExactCone())
    ref = np.array([(2 * bessel_j_zero(0.35, k)) ** 2 for k in (1, 2, 3)])
    op = discretize(mode, RadialGrid.log_uniform(1.0, 4096, 1e-6))
    np.testing.assert_allclose(op.eigenvalues(1, 3), ref, rtol=1e-4)


def test_subcritical_mode_is_diagnostic():
    op = discretize(ModeODE(3, 0.5, ExactCone()), RadialGrid.log_uniform(1.0, 200, 1e-4))
    assert op.diagnostic and op.inner_bc == "dirichlet"


def test_bad_inner_bc():
    with pytest.raises(InvalidParameterError):
        discretize(ModeODE(3, 2.0, ExactCone()), RadialGrid.log_uniform(1.0, 50, 1e-3), "neumann")


def test_hardy_examples():
    rep = hardy_report(ModeODE(3, 2.0, ExactCone()))
    assert (rep.coefficient, rep.semibounded, rep.strictly_positive) == (1.0, True, True)
    rep = hardy_report(ModeODE(3, 1.0, ExactCone()))
    assert rep.coefficient == 0.0 and rep.semibounded and not rep.strictly_positive
    rep = hardy_report(ModeODE(3, 0.5, ExactCone()))
    assert not rep.semibounded


def test_non_semibounded_refinement():
    # mu = 0.5 < n - 2: ground eigenvalue diverges to -infinity
    vals = [v for _, v in ground_eigenvalue_refinement(ModeODE(3, 0.5, ExactCone()), [1e-3, 1e-6, 1e-9], 256)]
    assert vals[0] > vals[1] > vals[2]
    assert vals[-1] < -1e6


def test_delta0_examples():
    assert compute_delta0(round_sphere(2), 3) == pytest.approx(0.4, rel=1e-15)
    assert compute_delta0(round_sphere(3), 4) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(NoAdmissibleDeltaError):
        compute_delta0(round_sphere(2, math.sqrt(2)), 3)


def test_closed_form_examples():
    r = np.linspace(0.01, 1.0, 50)
    u = closed_form_solution(ModeODE(3, 2.0, ExactCone()), 0.0)
    np.testing.assert_allclose(u(r), 1.0)
    u = closed_form_solution(ModeODE(3, 2.0, ExactCone()), 4 * math.pi**2)
    v = u(r) / u(np.array([0.5]))[0]
    np.testing.assert_allclose(v, np.sin(math.pi * r) / r / 2.0, rtol=1e-12, atol=1e-14)
    assert abs(u(np.array([1.0]))[0]) < 1e-15
    mode = ModeODE(3, 10.0, ExactCone())
    u = closed_form_solution(mode, -1.0)
    assert np.max(ode_residual(mode, -1.0, u, r)) < 1e-8


def test_closed_form_matches_mpmath_kummer():
    # r^{-(n-1)/2} z^a e^{-z/2} M(a, 1+nu, z), n=3, mu=10: nu=3, a=2
    mode = ModeODE(3, 10.0, ExactCone())
    u = closed_form_solution(mode, -4.0)
    for r in (0.1, 0.5, 1.0):
        z = 2.0 * r
        ref = r**-1 * z**2 * math.exp(-z / 2) * float(mp.hyp1f1(2, 4, z))
        assert u(np.array([r]))[0] == pytest.approx(ref, rel=1e-13)


def test_integer_second_branch_matches_mpmath_tricomi():
    # n=4, mu=6: nu=2 (integer), a=3/2, b=3
    mode = ModeODE(4, 6.0, ExactCone())
    u = closed_form_solution(mode, -1.0, "second")
    for r in (0.05, 0.5, 1.0):
        ref = r**-1.5 * r**1.5 * math.exp(-r / 2) * float(mp.hyperu(1.5, 3, r))
        assert u(np.array([r]))[0] == pytest.approx(ref, rel=1e-12)


def test_closed_form_errors():
    with pytest.raises(UnsupportedOperation):
        closed_form_solution(ModeODE(3, 2.0, PerturbedCone()), 1.0)
    with pytest.raises(SubcriticalModeError):
        closed_form_solution(ModeODE(3, 0.5, ExactCone()), 1.0)
    with pytest.raises(InvalidParameterError):
        closed_form_solution(ModeODE(3, 2.0, ExactCone()), 1.0, "third")


@given(
    st.sampled_from([(3, 2.0), (3, 10.0), (3, 26.0), (3, 1.49), (4, 6.0), (4, 18.0), (4, 3.0), (5, 12.0)]),
    st.floats(-30.0, 250.0),
    st.sampled_from(["friedrichs", "second"]),
)
def test_residual_property(nmu, lam, branch):
    n, mu = nmu
    mode = ModeODE(n, mu, ExactCone())
    u = closed_form_solution(mode, lam, branch)
    r = np.linspace(0.02, 0.98, 25)
    assert np.max(ode_residual(mode, lam, u, r)) <= 1e-6


@given(st.integers(3, 5), st.floats(0.3, 3.0), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_liouville_round_trip(n, L, coef):
    prof = PerturbedCone(0.1, 1.5, L)
    r = np.linspace(L / 50, L, 40)
    u = coef[0] + coef[1] * np.sin(r) + coef[2] * r**2
    np.testing.assert_allclose(from_w(to_w(u, r, prof, n), r, prof, n), u, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_quadratic_form_positivity(n):
    cs = round_sphere(n - 1)
    d0 = compute_delta0(cs, n)
    for i in range(4):
        mode = ModeODE(n, cs.mu(i), ExactCone(), i)
        op = discretize(mode, RadialGrid.log_uniform(1.0, 1024, 1e-6))
        lam, _ = delta0_min_eigenvalue(op, d0, cs.laplace_eigenvalue(i))
        assert lam >= -1e-8


@pytest.mark.parametrize("n,c", [(3, 1.0), (3, math.sqrt(1.5)), (4, 1.0), (4, math.sqrt(2.0))])
def test_indicial_slope_of_discrete_ground_state(n, c):
    cs = round_sphere(n - 1, c)
    mode = ModeODE(n, cs.mu(0), ExactCone())
    grid = RadialGrid.log_uniform(1.0, 2048, 1e-6)
    op = discretize(mode, grid)
    lam, w = op.eigenpair(1)
    r = op.r
    u = from_w(w, r, ExactCone(), n)
    sel = (r > 30 * r[0]) & (r < 1e-3)
    slope = np.polyfit(np.log(r[sel]), np.log(np.abs(u[sel])), 1)[0]
    s = -(n - 2) / 2 + mode.nu / 2
    assert slope == pytest.approx(s, abs=1e-2)
