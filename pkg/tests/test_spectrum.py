import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conespec.cross_section import round_sphere
from conespec.errors import InvalidParameterError, NonSemiboundedError
from conespec.geometry import ExactCone, SingularManifold, Spindle
from conespec.radial_modes import RadialGrid
from conespec.spectrum import (
    assemble,
    count_sign_changes,
    courant_radial_check,
    eigenfunction_from_operator,
    ground_state,
    minmax_check,
    rayleigh,
    weyl_constant,
)
from conespec.special import bessel_j_zero

# scipy-independent Bessel zeros (mpmath besseljzero, 20 digits)
J32_1 = 4.4934094579090641753
J1_1 = 3.8317059702075123156
J52_1 = 5.7634591968945497914


def cone3():
    return SingularManifold(3, round_sphere(2), ExactCone(1.0))


@pytest.fixture(scope="module")
def flat_spec():
    return assemble(cone3(), 200.0, M=2048)


def bessel_oracle(mfd, lambda_max):
    """``(2 j_{nu/2,k})^2`` for every mode of an exact unit cone below ``lambda_max``."""
    out = []
    m = mfd.m
    for i in range(60):
        mu, mult = mfd.cross_section.mode(i)
        nu = math.sqrt((m - 1) ** 2 / 4 + mu / 4 - m * (m - 1) / 4)
        k = 1
        while True:
            lam = (2 * bessel_j_zero(nu, k)) ** 2
            if lam > lambda_max:
                break
            out.append((lam, i, k, mult))
            k += 1
    return sorted(out)


def test_flat_cone_leading_entries(flat_spec):
    e = flat_spec.entries
    assert (e[0].mode, e[0].radial_index, e[0].multiplicity) == (0, 1, 1)
    assert e[0].lam == pytest.approx(4 * math.pi**2, rel=1e-4)
    assert (e[1].mode, e[1].radial_index, e[1].multiplicity) == (1, 1, 3)
    assert e[1].lam == pytest.approx(4 * J32_1**2, rel=1e-4)
    # the degree-2 level 4 j_{5/2,1}^2 (mult 5) precedes the second radial state
    assert (e[2].mode, e[2].radial_index, e[2].multiplicity) == (2, 1, 5)
    assert e[2].lam == pytest.approx(4 * J52_1**2, rel=1e-4)
    assert (e[3].mode, e[3].radial_index) == (0, 2)
    assert e[3].lam == pytest.approx(4 * (2 * math.pi) ** 2, rel=1e-4)


def test_flat_cone_matches_bessel_oracle(flat_spec):
    oracle = bessel_oracle(flat_spec.mfd, 200.0)
    got = [(e.lam, e.mode, e.radial_index, e.multiplicity) for e in flat_spec.entries]
    # entries within the discretization error of the threshold may straddle it
    oracle = [o for o in oracle if o[0] < 199.0]
    got = [g for g in got if g[0] < 199.0]
    assert len(got) == len(oracle)
    for (lo, mo, ko, mu_o), (lg, mg, kg, mu_g) in zip(oracle, got):
        assert (mo, ko, mu_o) == (mg, kg, mu_g)
        assert lg == pytest.approx(lo, rel=1e-4)


def test_oracle_error_is_second_order():
    mfd = cone3()
    exact = 4 * math.pi**2
    e1 = abs(assemble(mfd, 50.0, M=512).entries[0].lam - exact)
    e2 = abs(assemble(mfd, 50.0, M=1024).entries[0].lam - exact)
    assert 3.0 < e1 / e2 < 5.0


def test_below_first_eigenvalue_is_empty_and_certified():
    spec = assemble(cone3(), 30.0, M=512)
    assert len(spec) == 0
    assert spec.lambda_max_certified == 30.0
    assert not spec.nonsemibounded


def test_sorted_and_positive_multiplicity(flat_spec):
    lam = flat_spec.values()
    assert np.all(np.diff(lam) >= 0)
    assert all(e.multiplicity >= 1 for e in flat_spec.entries)


def test_n4_lowest_entry():
    mfd = SingularManifold(4, round_sphere(3), ExactCone(1.0))
    spec = assemble(mfd, 70.0, M=2048)
    assert spec.entries[0].lam == pytest.approx(4 * J1_1**2, rel=1e-4)
    assert spec.entries[0].mode == 0


def test_subcritical_spectrum_is_flagged():
    mfd = SingularManifold(3, round_sphere(2, 1.6), ExactCone(1.0), diagnostic=True)
    spec = assemble(mfd, 100.0, M=256)
    assert spec.nonsemibounded


def test_weyl_growth(flat_spec):
    assert weyl_constant(flat_spec) > 0


def test_rayleigh_of_ground_state(flat_spec):
    op = flat_spec.operator(0)
    prof = eigenfunction_from_operator(op, 1, flat_spec.mfd)
    assert rayleigh(flat_spec.mfd, prof.u, op=op) == pytest.approx(prof.lam, rel=1e-8)


def test_rayleigh_perturbation_is_quadratic(flat_spec):
    mfd = flat_spec.mfd
    op = flat_spec.operator(0)
    g = eigenfunction_from_operator(op, 1, mfd)
    v = eigenfunction_from_operator(op, 2, mfd)
    base = rayleigh(mfd, g.u, op=op)
    inc = [rayleigh(mfd, g.u + d * v.u, op=op) - base for d in (1e-2, 1e-3)]
    assert all(x >= 0 for x in inc)
    assert inc[0] / inc[1] == pytest.approx(100.0, rel=1e-3)


def test_rayleigh_closed_form_sample(flat_spec):
    op = flat_spec.operator(0)
    r = op.r
    assert rayleigh(flat_spec.mfd, np.sin(math.pi * r) / r, op=op) == pytest.approx(4 * math.pi**2, rel=1e-4)


def test_rayleigh_zero_function(flat_spec):
    op = flat_spec.operator(0)
    with pytest.raises(InvalidParameterError):
        rayleigh(flat_spec.mfd, np.zeros_like(op.r), op=op)


def test_courant_flat_cone(flat_spec):
    rows = courant_radial_check(flat_spec, 20)
    assert all(row.passed for row in rows)
    assert (rows[0].first_index, rows[0].nodal_domains) == (1, 1)
    second = next(row for row in rows if row.mode == 0 and row.radial_index == 2)
    assert second.radial_domains == 2
    # ordering 39.48, 80.76 x3, 132.87 x5, 157.91
    assert second.first_index == 10


@settings(max_examples=8)
@given(st.floats(0.3, 1.35))
def test_courant_spindles(c):
    mfd = SingularManifold(3, round_sphere(2), Spindle(c, math.pi), "conical")
    spec = assemble(mfd, 40.0, M=512)
    rows = courant_radial_check(spec, 20)
    assert rows and all(row.passed for row in rows)


def test_minmax(flat_spec):
    for i, lam, best in minmax_check(flat_spec, 5):
        assert best == pytest.approx(lam, rel=1e-6), i


def test_ground_state_flat_cone():
    mfd = cone3()
    gs = ground_state(mfd, RadialGrid.for_manifold(mfd, 2048))
    assert gs.lam == pytest.approx(4 * math.pi**2, rel=1e-4)
    assert gs.simple
    u = gs.profile.u
    assert np.all(u > 0)
    r = gs.profile.r
    ratio = u / (np.sin(math.pi * r) / r)
    assert np.ptp(ratio) / np.mean(ratio) < 1e-3


def test_ground_state_spindle():
    mfd = SingularManifold(3, round_sphere(2), Spindle(0.8, math.pi), "conical")
    gs = ground_state(mfd, RadialGrid.for_manifold(mfd, 1024))
    assert gs.simple and gs.gap > 0
    assert np.all(gs.profile.u > 0)


def test_ground_state_refuses_subcritical():
    mfd = SingularManifold(3, round_sphere(2, 1.6), ExactCone(1.0), diagnostic=True)
    with pytest.raises(NonSemiboundedError):
        ground_state(mfd, RadialGrid.for_manifold(mfd, 256))


def test_sign_changes():
    assert count_sign_changes(np.sin(np.linspace(0.01, 3 * math.pi - 0.01, 500))) == 2


def test_eigenvector_accuracy_on_graded_grid(flat_spec):
    # row scales of T span ~12 decades near the tip
    op = flat_spec.operator(0)
    for k in (1, 2, 3):
        lam, w = op.eigenpair(k)
        v = w * np.sqrt(op.mass)
        assert np.linalg.norm(op.T.matvec(v) - lam * v) < 1e-6 * lam
