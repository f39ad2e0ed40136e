import functools
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from conespec.cross_section import explicit, round_sphere
from conespec.errors import DomainError, InvalidParameterError, UnsupportedOperation
from conespec.geometry import (
    CustomProfile,
    ExactCone,
    PerturbedCone,
    SingularManifold,
    Spindle,
    TabulatedProfile,
    check_asymptotic_condition,
    ricci_warped,
    scal,
)

R_ = sp.Symbol("r", positive=True)


@functools.lru_cache(maxsize=None)
def warped_oracle(m, c, phi_src):
    """Symbolic (scalar curvature, Ric_rr, Ric_fiber / h0) of dr^2 + phi^2 S^m(c).

    Christoffel symbols of the diagonal metric in polar coordinates on the
    sphere, then Ricci by contraction.
    """
    th = sp.symbols(f"t1:{m + 1}", positive=True)
    x = (R_,) + th
    phi = sp.sympify(phi_src, locals={"r": R_})
    diag = [sp.Integer(1)]
    w = (c * phi) ** 2
    for i in range(m):
        diag.append(w)
        w = w * sp.sin(th[i]) ** 2
    N = m + 1
    g = sp.diag(*diag)
    gi = sp.diag(*[1 / d for d in diag])
    Gam = [[[sp.simplify(sum(gi[a, d] * (sp.diff(g[d, b], x[cc]) + sp.diff(g[d, cc], x[b]) - sp.diff(g[b, cc], x[d])) for d in range(N)) / 2)
             for cc in range(N)] for b in range(N)] for a in range(N)]

    def ric(b, cc):
        t = 0
        for a in range(N):
            t += sp.diff(Gam[a][b][cc], x[a]) - sp.diff(Gam[a][b][a], x[cc])
            for d in range(N):
                t += Gam[a][a][d] * Gam[d][b][cc] - Gam[a][cc][d] * Gam[d][b][a]
        return sp.simplify(t)

    Rrr = ric(0, 0)
    R11 = ric(1, 1)
    Rs = sp.simplify(sum(gi[i, i] * ric(i, i) for i in range(N)))
    point = {t: sp.pi / 3 for t in th}
    fib = sp.simplify(R11.subs(point) / c**2)
    return tuple(sp.lambdify(R_, e.subs(point), "numpy") for e in (Rs, Rrr, fib))


CASES = [
    (2, 1, "r", ExactCone(1.0)),
    (2, sp.Rational(3, 2), "r", ExactCone(1.0)),
    (2, 1, "r*(1 + r**(3/2)/10)", PerturbedCone(0.1, 1.5, 1.0)),
    (3, 1, "r*(1 + r**2/5)", PerturbedCone(0.2, 2.0, 1.0)),
    (2, 1, "sin(r)*9/10", Spindle(0.9, math.pi)),
    (3, 1, "sin(r)", Spindle(1.0, math.pi)),
]


@pytest.mark.parametrize("m,c,src,prof", CASES)
def test_curvature_against_symbolic_oracle(m, c, src, prof):
    mfd = SingularManifold(m + 1, round_sphere(m, float(c)), prof, "dirichlet", diagnostic=True)
    Rs, Rrr, fib = warped_oracle(m, c, src)
    r = np.linspace(0.05, 0.95 * prof.L, 23)
    np.testing.assert_allclose(scal(mfd, r), Rs(r) * np.ones_like(r), rtol=1e-10, atol=1e-10)
    ric_rr, coef = ricci_warped(mfd, r)
    np.testing.assert_allclose(ric_rr, Rrr(r) * np.ones_like(r), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(coef, fib(r) * np.ones_like(r), rtol=1e-10, atol=1e-10)


def test_flat_cone_examples():
    m3 = SingularManifold(3, round_sphere(2), ExactCone())
    assert np.all(scal(m3, np.linspace(0.01, 1, 30)) == 0.0)
    m4 = SingularManifold(4, round_sphere(3), ExactCone())
    assert scal(m4, 0.5) == 0.0
    assert ricci_warped(m3, 0.3) == (0.0, 0.0)


def test_round_four_sphere():
    mfd = SingularManifold(4, round_sphere(3), Spindle(1.0, math.pi), "conical")
    r = np.linspace(0.1, 3.0, 20)
    np.testing.assert_allclose(scal(mfd, r), 12.0, rtol=1e-13)
    ric_rr, fib = ricci_warped(mfd, math.pi / 2)
    assert ric_rr == pytest.approx(3.0, rel=1e-14)
    # Ric = 3 g on the fiber too: coefficient = 3 phi^2
    np.testing.assert_allclose(ricci_warped(mfd, r)[1], 3 * np.sin(r) ** 2, atol=1e-13)


def test_exact_cone_off_unit_sphere():
    c = 1.2
    mfd = SingularManifold(3, round_sphere(2, c), ExactCone())
    rr, fib = ricci_warped(mfd, 0.4)
    assert rr == 0.0
    assert fib == pytest.approx((1 / c**2 - 1) * 1, rel=1e-14)


def test_ricci_needs_einstein():
    cs = explicit(2, [(3.0, 1)], 3.0)
    mfd = SingularManifold(3, cs, ExactCone())
    with pytest.raises(UnsupportedOperation):
        ricci_warped(mfd, 0.5)


@given(st.floats(0.3, 1.3), st.floats(-0.3, 0.5), st.floats(1.0, 3.0), st.floats(0.05, 0.95))
def test_trace_identity(c, eta, alpha, r):
    for prof in (PerturbedCone(eta, alpha, 1.0), ExactCone(1.0)):
        mfd = SingularManifold(3, round_sphere(2, c), prof, diagnostic=True)
        rr, fib = ricci_warped(mfd, r)
        total = rr + fib * mfd.m / prof.phi(r) ** 2
        assert float(total) == pytest.approx(float(scal(mfd, r)), rel=1e-10, abs=1e-10)


def test_asymptotic_condition_examples():
    rep = check_asymptotic_condition(ExactCone(), 3)
    assert rep.passed and all(v == 0.0 for v in rep.bounds.values())
    rep = check_asymptotic_condition(PerturbedCone(0.1, 1.5), 4)
    assert rep.passed and all(math.isfinite(v) for v in rep.bounds.values())
    rep = check_asymptotic_condition(PerturbedCone(0.1, 0.5, diagnostic=True), 3)
    assert not rep.passed and 0 in rep.failing_orders


def test_ratio_derivative_closed_forms():
    r = np.linspace(0.1, 0.9, 9)
    for prof, src in ((PerturbedCone(0.1, 1.5), "(1 + r**(3/2)/10)**2"), (Spindle(0.9, math.pi), "(9*sin(r)/(10*r))**2")):
        e = sp.sympify(src, locals={"r": R_})
        for k in range(4):
            ref = sp.lambdify(R_, sp.diff(e, R_, k), "numpy")(r)
            np.testing.assert_allclose(prof.ratio_derivative(r, k), ref, rtol=1e-9, atol=1e-11)


def test_profile_validation():
    with pytest.raises(InvalidParameterError):
        PerturbedCone(0.1, 0.5)
    with pytest.raises(InvalidParameterError):
        PerturbedCone(-2.0, 1.0)
    with pytest.raises(InvalidParameterError):
        ExactCone(-1.0)
    with pytest.raises(DomainError):
        ExactCone(1.0).phi(np.array([0.0, 0.5]))
    with pytest.raises(DomainError):
        ExactCone(1.0).phi(1.5)


def test_manifold_validation():
    with pytest.raises(InvalidParameterError):
        SingularManifold(3, round_sphere(3), ExactCone())
    with pytest.raises(InvalidParameterError):
        SingularManifold(3, round_sphere(2, 1.5), ExactCone())
    with pytest.raises(InvalidParameterError):
        SingularManifold(3, round_sphere(2), ExactCone(), "conical")
    with pytest.raises(InvalidParameterError):
        SingularManifold(3, round_sphere(2), PerturbedCone(0.1, 0.5, diagnostic=True))
    SingularManifold(3, round_sphere(2, 1.5), ExactCone(), diagnostic=True)


def test_scaled_profile():
    p = Spindle(0.9, math.pi)
    q = p.scaled(2.0)
    assert q.L == pytest.approx(2 * math.pi)
    r = np.linspace(0.1, 6.0, 7)
    np.testing.assert_allclose(q.phi(r), 2 * p.phi(r / 2), rtol=1e-14)
    np.testing.assert_allclose(q.dphi(r), p.dphi(r / 2), rtol=1e-14)
    np.testing.assert_allclose(q.d2phi(r), p.d2phi(r / 2) / 2, rtol=1e-14)


def test_tabulated_and_custom_profiles():
    r = np.linspace(0.0, math.pi, 401)
    tp = TabulatedProfile(r, np.sin(r), 1.0, end_slope=1.0)
    x = np.linspace(0.2, 3.0, 15)
    np.testing.assert_allclose(tp.phi(x), np.sin(x), atol=1e-9)
    np.testing.assert_allclose(tp.dphi(x), np.cos(x), atol=1e-6)
    cp = CustomProfile(np.sin, np.cos, lambda t: -np.sin(t), math.pi, 1.0, 1.0)
    np.testing.assert_allclose(cp.d2phi(x), -np.sin(x))
    with pytest.raises(InvalidParameterError):
        TabulatedProfile(r[1:], np.sin(r[1:]), 1.0)


def test_fiber_volume():
    assert SingularManifold(3, round_sphere(2), ExactCone()).fiber_volume() == pytest.approx(4 * math.pi)
    assert SingularManifold(4, round_sphere(3), ExactCone()).fiber_volume() == pytest.approx(2 * math.pi**2)
