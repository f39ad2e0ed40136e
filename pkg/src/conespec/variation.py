"""
The lambda functional and its variations along warped metric families.

``lambda(g)`` is the ground eigenvalue of ``-4 Delta + R``; with ``u`` the
positive ground state normalised by ``int u^2 dvol = 1`` and ``f = -2 log u``,

    lambda = 2 Delta f - |grad f|^2 + R.

Families deform the profile, ``phi_t = phi + t dphi`` (fiber block
``h = 2 phi dphi h0``), or scale the metric, ``g_t = (1 + t)^2 g``.  First
derivatives are computed three ways: central differences of the discrete
eigenvalue, the Hellmann-Feynman identity ``v^T (A' - lambda B') v`` on the
generalised tridiagonal problem, and the geometric integral
``int <-Ric - Hess f, h> e^{-f} dvol`` with ``e^{-f} = u^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .asymptotics import radial_derivatives, richardson_profile
from .errors import DegenerateGroundStateError, InvalidParameterError, UnsupportedOperation
from .geometry import CustomProfile, SingularManifold, ricci_warped, scal
from .radial_modes import ModeODE, RadialGrid, discretize
from .spectrum import ground_state
from .tridiag import eigenvalues, eigenvector

# fraction of [0, L] dropped at each end of residual sup norms
EDGE_FRACTION = 0.05


def _interior_mask(r, L) -> np.ndarray:
    return (r >= EDGE_FRACTION * L) & (r <= (1 - EDGE_FRACTION) * L)


def _trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


# ---------------------------------------------------------------------------
# lambda


@dataclass(frozen=True)
class LambdaValue:
    """Ground eigenvalue with the normalised ground state and ``f = -2 log u``.

    ``r``, ``u`` and ``f`` live on the nodes where ``u > 0``.  ``residual`` is
    the sup of ``|2 Delta f - |grad f|^2 + R - lambda|`` over ``mask``.
    """

    lam: float
    r: np.ndarray
    u: np.ndarray
    f: np.ndarray
    residual: float
    normalization: float
    simple: bool
    gap: float
    mask: np.ndarray = field(repr=False)


def normalized_ground(mfd: SingularManifold, M: int = 2048, r_min_factor: float = 1e-6):
    """Richardson ground state ``u`` with ``vol(N) int u^2 phi^m dr = 1``.

    A Dirichlet wall keeps its node with ``u = 0``.
    """
    rp = richardson_profile(mfd, 0, 1, M, r_min_factor)
    r, u = rp.r, np.maximum(rp.u, 0.0)
    vol = mfd.fiber_volume()
    norm = vol * _trapz(u * u * mfd.profile.phi(r) ** mfd.m, r)
    return rp.lam, r, u / math.sqrt(norm)


def lambda_value(
    mfd: SingularManifold, grid: RadialGrid | None = None, M: int = 2048, r_min_factor: float = 1e-6
) -> LambdaValue:
    """``lambda(g)`` with the eigen-equation residual of ``f = -2 log u``.

    The eigenvalue comes from the ``M``-node grid (or ``grid``); the profile
    used for ``f`` is the Richardson combination of the ``M`` and ``2M``
    solutions, so the residual reflects the continuous equation to fourth
    order.  The sup norm covers ``[0.05 L, 0.95 L]``: closer to the tip the
    differences lose digits like ``eps / r^2``, and at a Dirichlet wall ``f``
    is logarithmically singular.
    """
    if mfd.diagnostic and not _admissible(mfd):
        raise InvalidParameterError("lambda is defined for admissible manifolds only")
    if grid is None:
        grid = RadialGrid.for_manifold(mfd, M, r_min_factor)
    gs = ground_state(mfd, grid)
    lam_r, r, u = normalized_ground(mfd, M, r_min_factor)
    p = mfd.profile
    norm = mfd.fiber_volume() * _trapz(u * u * p.phi(r) ** mfd.m, r)
    du, d2u = radial_derivatives(r, u)
    pos = u > 0
    r, u, du, d2u = r[pos], u[pos], du[pos], d2u[pos]
    f = -2.0 * np.log(u)
    # f' and f'' through the chain rule keep the differencing on the smooth u
    df = -2 * du / u
    d2f = -2 * d2u / u + 2 * (du / u) ** 2
    lap = d2f + mfd.m * p.dphi(r) / p.phi(r) * df
    rhs = 2 * lap - df * df + scal(mfd, r)
    mask = _interior_mask(r, mfd.L)
    res = float(np.max(np.abs(rhs[mask] - lam_r)))
    return LambdaValue(gs.lam, r, u, f, res, norm, gs.simple, gs.gap, mask)


def _admissible(mfd: SingularManifold) -> bool:
    from .cross_section import check_cone_condition

    return all(check_cone_condition(cs, mfd.n).admissible for cs in mfd.end_cross_sections())


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class MetricFamily:
    """One-parameter family of warped metrics through ``base`` at ``t = 0``.

    ``kind="fiber"``: ``phi_t = phi + t dphi`` with ``dphi = O(r^{1+beta})`` at the
    tip (and at the far tip of closed profiles), so cone angles are unchanged.
    ``kind="scaling"``: ``g_t = (1 + t)^2 g``.
    """

    base: SingularManifold
    kind: str = "fiber"
    dphi: Callable | None = None
    d1phi: Callable | None = None
    d2phi: Callable | None = None
    beta: float = 1.0
    tau: float = 0.05
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("fiber", "scaling"):
            raise InvalidParameterError(f"family kind must be 'fiber' or 'scaling', got {self.kind!r}")
        if self.kind == "fiber" and (self.dphi is None or self.d1phi is None or self.d2phi is None):
            raise InvalidParameterError("fiber family needs dphi and its first two derivatives")
        if not self.beta > 0:
            raise InvalidParameterError("beta must be positive")
        if self.kind == "fiber":
            self._check_order()

    def _check_order(self):
        L = self.base.L
        r = L * np.logspace(-8, -1, 200)
        ratio = np.abs(self.dphi(r)) / r ** (1 + self.beta)
        if not np.all(np.isfinite(ratio)) or ratio[0] > 10 * max(1.0, float(np.max(ratio[100:]))):
            raise InvalidParameterError("dphi is not O(r^(1+beta)) at the tip")
        if self.base.outer_bc == "conical":
            s = L - r
            ratio = np.abs(self.dphi(s)) / r ** (1 + self.beta)
            if not np.all(np.isfinite(ratio)) or ratio[0] > 10 * max(1.0, float(np.max(ratio[100:]))):
                raise InvalidParameterError("dphi is not O((L - r)^(1+beta)) at the far tip")

    def profile(self, t: float):
        p = self.base.profile
        if t == 0:
            return p
        if self.kind == "scaling":
            return p.scaled(1.0 + t)
        return CustomProfile(
            lambda r: p.phi(r) + t * self.dphi(r),
            lambda r: p.dphi(r) + t * self.d1phi(r),
            lambda r: p.d2phi(r) + t * self.d2phi(r),
            p.L,
            c0=p.c0,
            end_slope=p.end_slope,
            label=f"{self.label}@{t:g}",
        )

    def manifold(self, t: float) -> SingularManifold:
        return self.base.with_profile(self.profile(t))

    def grid(self, t: float, base_grid: RadialGrid) -> RadialGrid:
        if self.kind == "scaling" and t != 0:
            a = 1.0 + t
            return RadialGrid(base_grid.nodes * a, base_grid.grading, base_grid.L * a)
        return base_grid

    def check_positive(self, t: float, grid: RadialGrid) -> bool:
        """``phi_t > 0`` on the interior nodes of the (transported) grid."""
        p = self.profile(t)
        r = self.grid(t, grid).nodes
        r = r[(r > 0) & (r < p.L)]
        return bool(np.all(p.phi(r) > 0))


def bump_family(base: SingularManifold, amplitude: float = 1.0, freq: int = 0, label: str = "bump") -> MetricFamily:
    """``dphi = a (r (L - r) / L)^2``, optionally times ``sin(freq pi r / L)``."""
    L = base.L
    a = float(amplitude)
    if freq == 0:
        g = lambda r: a * (r * (L - r) / L) ** 2
        g1 = lambda r: a * 2 * r * (L - r) * (L - 2 * r) / L**2
        g2 = lambda r: a * (2 * (L - r) ** 2 - 8 * r * (L - r) + 2 * r * r) / L**2
        return MetricFamily(base, "fiber", g, g1, g2, 1.0, label=label)
    k = freq * math.pi / L

    def b(r):
        return a * (r * (L - r) / L) ** 2

    def b1(r):
        return a * 2 * r * (L - r) * (L - 2 * r) / L**2

    def b2(r):
        return a * (2 * (L - r) ** 2 - 8 * r * (L - r) + 2 * r * r) / L**2

    g = lambda r: b(r) * np.sin(k * r)
    g1 = lambda r: b1(r) * np.sin(k * r) + b(r) * k * np.cos(k * r)
    g2 = lambda r: b2(r) * np.sin(k * r) + 2 * b1(r) * k * np.cos(k * r) - b(r) * k * k * np.sin(k * r)
    return MetricFamily(base, "fiber", g, g1, g2, 1.0, label=f"{label}{freq}")


def scaling_family(base: SingularManifold) -> MetricFamily:
    return MetricFamily(base, "scaling", label="scaling")


def zero_family(base: SingularManifold) -> MetricFamily:
    z = lambda r: np.zeros_like(np.asarray(r, float))
    return MetricFamily(base, "fiber", z, z, z, 1.0, label="zero")


# ---------------------------------------------------------------------------
# discrete derivatives of the generalised problem


def _q_derivatives(family: MetricFamily, r, mu):
    p = family.base.profile
    m = family.base.m
    ph, dp = p.phi(r), p.dphi(r)
    e, e1 = family.dphi(r), family.d1phi(r)
    g = dp / ph
    g1 = e1 / ph - dp * e / ph**2
    g2 = -2 * e1 * e / ph**2 + 2 * dp * e * e / ph**3
    q1 = -2 * mu * e / ph**3 - 2 * m * g * g1
    q2 = 6 * mu * e * e / ph**4 - m * (2 * g1 * g1 + 2 * g * g2)
    return q1, q2


def operator_derivatives(family: MetricFamily, op):
    """``(A', B', A'', B'')`` at ``t = 0``; tridiagonal ``A`` as ``(diag, off)``."""
    if family.kind == "scaling":
        d, o = op.a_diag, op.a_off
        return (-d, -o), op.mass.copy(), (2 * d, 2 * o), np.zeros_like(op.mass)
    q1, q2 = _q_derivatives(family, op.r, op.mode.mu)
    zero_off = np.zeros_like(op.a_off)
    zero = np.zeros_like(op.mass)
    return (q1 * op.mass, zero_off), zero, (q2 * op.mass, zero_off.copy()), zero


def _quad(dA, x, y):
    d, o = dA
    return float(np.sum(d * x * y) + np.sum(o * (x[:-1] * y[1:] + x[1:] * y[:-1])))


# ---------------------------------------------------------------------------
# first variation


@dataclass(frozen=True)
class VariationReport:
    lambda0: float
    dlambda_fd: float
    dlambda_hf: float
    dlambda_geom: float | None
    fd_steps: tuple[float, float]
    fd_consistency: float
    hf_residual: float
    geom_residual: float | None
    inner_flux: float | None
    flux_ratio: float | None
    weighted_integral: float | None
    raw_integral: float | None
    d2lambda_fd: float | None = None
    d2lambda_pert: float | None = None
    d2_residual: float | None = None

    def to_record(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def _lam_at(family, t, grid, abs_tol):
    mfd = family.manifold(t)
    return ground_state(mfd, family.grid(t, grid), abs_tol).lam


def first_variation(
    family: MetricFamily,
    M: int = 2048,
    r_min_factor: float = 1e-6,
    steps: tuple[float, float] = (1e-3, 1e-4),
    abs_tol: float = 1e-13,
    geometric: bool = True,
) -> VariationReport:
    """``d lambda / dt`` at ``t = 0`` by differences, Hellmann-Feynman and geometry."""
    base = family.base
    grid = RadialGrid.for_manifold(base, M, r_min_factor)
    gs = ground_state(base, grid, abs_tol)
    if not gs.simple:
        raise DegenerateGroundStateError(f"ground eigenvalue not simple (gap {gs.gap:.3e})")
    lam0 = gs.lam

    h1, h2 = steps
    D = []
    for h in (h1, h2):
        D.append((_lam_at(family, h, grid, abs_tol) - _lam_at(family, -h, grid, abs_tol)) / (2 * h))
    ratio2 = (h1 / h2) ** 2
    fd = (ratio2 * D[1] - D[0]) / (ratio2 - 1)
    consistency = abs(D[1] - fd)

    mu0, mult0 = base.cross_section.mode(0)
    op = discretize(ModeODE(base.n, mu0, base.profile, 0, mult0), grid)
    lam_d, w = op.eigenpair(1, abs_tol)
    dA, dB, _, _ = operator_derivatives(family, op)
    hf = _quad(dA, w, w) - lam_d * float(np.sum(dB * w * w))
    hf_res = _rel(fd, hf) if max(abs(fd), abs(hf)) > 1e-12 * max(1.0, abs(lam0)) else abs(fd - hf)

    geom = geom_res = flux = flux_ratio = weighted = raw = None
    if geometric and base.cross_section.is_einstein:
        geom, flux, raw = geometric_first_variation(family, M, r_min_factor)
        weighted = geom
        geom_res = _rel(geom, hf) if max(abs(geom), abs(hf)) > 1e-12 * max(1.0, abs(lam0)) else abs(geom - hf)
        flux_ratio = 0.0 if geom == 0 else abs(flux) / abs(geom)
    return VariationReport(
        lam0, float(fd), float(hf), geom, (h1, h2), float(consistency), float(hf_res),
        geom_res, flux, flux_ratio, weighted, raw,
    )


def geometric_first_variation(family: MetricFamily, M: int = 2048, r_min_factor: float = 1e-6):
    """``int <-Ric - Hess f, h> u^2 dvol`` for the warped variation ``h``.

    Returns ``(value, inner_flux, raw)`` where ``inner_flux`` is the boundary
    term ``|d_r fdot| u^2 phi^m vol(N)`` at the innermost node and ``raw`` is the
    same integral with ``u^2`` replaced by the unnormalised ``exp(-f)`` of the
    discrete eigenvector (``u`` scaled so that its discrete mass is one).
    """
    mfd = family.base
    if not mfd.cross_section.is_einstein:
        raise UnsupportedOperation("geometric first variation needs an Einstein cross-section")
    lam, r, u = normalized_ground(mfd, M, r_min_factor)
    p = mfd.profile
    m = mfd.m
    ph, dp = p.phi(r), p.dphi(r)
    ric_rr, fib = ricci_warped(mfd, r)
    du, d2u = radial_derivatives(r, u)
    uu = u * u
    u2_df = -2 * u * du                       # u^2 f'
    u2_d2f = -2 * u * d2u + 2 * du * du       # u^2 f''
    vol = mfd.fiber_volume()
    if family.kind == "fiber":
        hfib = 2 * ph * family.dphi(r)
        integrand = -m * (fib * uu + ph * dp * u2_df) * hfib / ph**4
        fdot = _fdot_fiber(family, r, M, r_min_factor)
    else:
        integrand = -2 * (ric_rr * uu + u2_d2f) - 2 * m * (fib * uu + ph * dp * u2_df) / ph**2
        with np.errstate(divide="ignore", invalid="ignore"):
            fdot = mfd.n + 2 * r * du / u
    weight = vol * ph**m
    value = _trapz(integrand * weight, r)
    # only the innermost derivative is needed; fdot is infinite at a Dirichlet wall
    dfdot, _ = radial_derivatives(r[:8], fdot[:8])
    flux = float(abs(dfdot[0]) * uu[0] * weight[0])
    mass = _trapz(uu * ph**m, r)
    raw = _trapz(integrand * ph**m, r) / mass
    return value, flux, raw


def _fdot_fiber(family, r, M, r_min_factor, h=1e-4):
    out = []
    for t in (h, -h):
        _, rt, ut = normalized_ground(family.manifold(t), M, r_min_factor)
        if rt.size != r.size or not np.allclose(rt, r):
            ut = np.interp(r, rt, ut)
        out.append(ut)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -2 * (np.log(out[0]) - np.log(out[1])) / (2 * h)


def inner_flux_tail(mfd: SingularManifold, cutoffs, M: int = 2048, r_min_factor: float = 1e-9):
    """``vol(N) phi^m |d_r(u^2)|`` at the given radii: the flux of ``Delta(e^{-f})``."""
    _, r, u = normalized_ground(mfd, M, r_min_factor)
    du, _ = radial_derivatives(r, u)
    flux = mfd.fiber_volume() * mfd.profile.phi(r) ** mfd.m * np.abs(2 * u * du)
    return np.interp(np.log(np.asarray(cutoffs, float)), np.log(r), flux)


# ---------------------------------------------------------------------------
# second variation


def second_variation_numeric(
    family: MetricFamily,
    M: int = 2048,
    r_min_factor: float = 1e-6,
    h: float = 1e-2,
    pairs: int = 400,
    abs_tol: float = 1e-13,
) -> tuple[float, float]:
    """``(d2 lambda_fd, d2 lambda_pert)`` at ``t = 0``.

    The difference quotient uses the 5-point stencil with step ``h``; the
    perturbative value is the second-order Rayleigh-Schrodinger sum over the
    lowest ``pairs`` discrete eigenpairs of the radial ground mode.
    """
    base = family.base
    grid = RadialGrid.for_manifold(base, M, r_min_factor)
    lam = {t: _lam_at(family, t, grid, abs_tol) for t in (-2 * h, -h, 0.0, h, 2 * h)}
    fd = (-lam[2 * h] + 16 * lam[h] - 30 * lam[0.0] + 16 * lam[-h] - lam[-2 * h]) / (12 * h * h)

    mu0, mult0 = base.cross_section.mode(0)
    op = discretize(ModeODE(base.n, mu0, base.profile, 0, mult0), grid)
    T = op.T
    K = min(pairs, op.size)
    vals = eigenvalues(T, 1, K, abs_tol)
    if K > 1 and vals[1] - vals[0] <= abs_tol:
        raise DegenerateGroundStateError("ground eigenvalue not simple")
    sq = np.sqrt(op.mass)
    vecs = [eigenvector(T, float(v)) / sq for v in vals]
    w = vecs[0]
    lam0 = float(vals[0])
    dA, dB, d2A, d2B = operator_derivatives(family, op)
    d1 = _quad(dA, w, w) - lam0 * float(np.sum(dB * w * w))
    pert = _quad(d2A, w, w) - lam0 * float(np.sum(d2B * w * w)) - 2 * d1 * float(np.sum(dB * w * w))
    for lk, vk in zip(vals[1:], vecs[1:]):
        c = _quad(dA, vk, w) - lam0 * float(np.sum(dB * vk * w))
        pert += 2 * c * c / (lam0 - float(lk))
    return float(fd), float(pert)


def full_variation(family: MetricFamily, **kw) -> VariationReport:
    """First-variation report with the second-derivative fields filled in."""
    rep = first_variation(family, **{k: v for k, v in kw.items() if k in ("M", "r_min_factor", "abs_tol")})
    d2fd, d2p = second_variation_numeric(family, **{k: v for k, v in kw.items() if k in ("M", "r_min_factor", "pairs", "abs_tol")})
    res = _rel(d2fd, d2p) if max(abs(d2fd), abs(d2p)) > 1e-9 else abs(d2fd - d2p)
    return VariationReport(**{**rep.to_record(), "d2lambda_fd": d2fd, "d2lambda_pert": d2p, "d2_residual": res})


# ---------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPointReport:
    lam: float
    sup_rr: float
    sup_fiber: float
    residual: float
    critical: bool
    note: str
    gradient: tuple[float, ...]
    scaling_derivative: float


def critical_point_check(
    mfd: SingularManifold,
    M: int = 2048,
    r_min_factor: float = 1e-6,
    bumps: int = 10,
    tol: float = 1e-6,
) -> CriticalPointReport:
    """Size of ``Ric + Hess f`` for the ground-state ``f`` and the gradient of lambda.

    Components are taken in an orthonormal frame: ``ric_rr + f''`` and
    ``(ric_fib + phi phi' f') / phi^2``.  The gradient lists the Hellmann-Feynman
    derivatives along ``bumps`` modulated bump variations.
    """
    if not mfd.cross_section.is_einstein:
        raise UnsupportedOperation("critical point check needs an Einstein cross-section")
    lam, r, u = normalized_ground(mfd, M, r_min_factor)
    du, d2u = radial_derivatives(r, u)
    pos = u > 0
    r, u, du, d2u = r[pos], u[pos], du[pos], d2u[pos]
    df = -2 * du / u
    d2f = -2 * d2u / u + 2 * (du / u) ** 2
    ric_rr, fib = ricci_warped(mfd, r)
    p = mfd.profile
    ph, dp = p.phi(r), p.dphi(r)
    rr = ric_rr + d2f
    ff = (fib + ph * dp * df) / ph**2
    mask = _interior_mask(r, mfd.L)
    sup_rr = float(np.max(np.abs(rr[mask])))
    sup_ff = float(np.max(np.abs(ff[mask])))
    residual = max(sup_rr, sup_ff)
    critical = residual <= tol
    if critical:
        note = "Ric + Hess f vanishes: critical"
    elif mfd.outer_bc == "dirichlet":
        note = "Dirichlet boundary breaks criticality"
    else:
        note = "not critical: Ric + Hess f is nonzero"
    grad = []
    for j in range(1, bumps + 1):
        fam = bump_family(mfd, 1.0, freq=j) if j > 1 else bump_family(mfd, 1.0)
        grad.append(hellmann_feynman(fam, M, r_min_factor))
    scal_d = hellmann_feynman(scaling_family(mfd), M, r_min_factor)
    return CriticalPointReport(lam, sup_rr, sup_ff, residual, critical, note, tuple(grad), scal_d)


def hellmann_feynman(family: MetricFamily, M: int = 2048, r_min_factor: float = 1e-6, abs_tol: float = 1e-13) -> float:
    """Discrete ``d lambda / dt`` at ``t = 0`` from ``v^T (A' - lambda B') v``."""
    base = family.base
    grid = RadialGrid.for_manifold(base, M, r_min_factor)
    mu0, mult0 = base.cross_section.mode(0)
    op = discretize(ModeODE(base.n, mu0, base.profile, 0, mult0), grid)
    lam, w = op.eigenpair(1, abs_tol)
    dA, dB, _, _ = operator_derivatives(family, op)
    return _quad(dA, w, w) - lam * float(np.sum(dB * w * w))
