"""
Weighted Sobolev and weighted uniform norms of separated functions ``u(r) psi(theta)``.

``psi`` is an L^2-normalised eigenfunction of ``-Delta_h0`` with eigenvalue
``ell``; all fiber integrals are then explicit, so only radial quadrature is
needed.  Integrals use the trapezoid rule in ``log r``.

Weight: ``1/chi = r`` on ``r < eps/4``, ``1/chi = 1`` on ``r >= eps`` and a
quintic smoothstep blend ``(1 - S) r + S`` in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameterError, UnsupportedOperation
from .geometry import SingularManifold


def smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10 - 15 * t + 6 * t * t)


def inv_chi(r, eps: float):
    """``1/chi``: equals ``r`` near the tip and 1 away from it."""
    r = np.asarray(r, float)
    if math.isinf(eps):
        return r
    s = smoothstep((r - eps / 4) / (0.75 * eps))
    return (1 - s) * r + s


@dataclass(frozen=True)
class RadialFunction:
    """Samples of ``u`` (and optionally ``u'``, ``u''``) on an increasing grid.

    Missing derivatives are obtained by second-order differences in ``log r``.
    ``ell`` is the fiber Laplace eigenvalue of the angular factor.
    """

    r: np.ndarray
    u: np.ndarray
    du: np.ndarray | None = None
    d2u: np.ndarray | None = None
    ell: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.r, float)
        u = np.asarray(self.u, float)
        if r.ndim != 1 or r.shape != u.shape or r.size < 3:
            raise InvalidParameterError("r and u must be matching 1-D arrays with >= 3 samples")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise InvalidParameterError("r must be positive and increasing")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "u", u)
        x = np.log(r)
        if self.du is None:
            object.__setattr__(self, "du", np.gradient(u, x, edge_order=2) / r)
        if self.d2u is None:
            d = np.asarray(self.du) * r  # r u'
            # r^2 u'' = d/dx (r u') - r u'
            object.__setattr__(self, "d2u", (np.gradient(d, x, edge_order=2) - d) / r**2)

    @classmethod
    def from_callables(cls, r, f, df=None, d2f=None, ell=0.0) -> "RadialFunction":
        r = np.asarray(r, float)
        return cls(
            r,
            f(r),
            None if df is None else df(r),
            None if d2f is None else d2f(r),
            ell,
        )


def _trap_log(r, g):
    """``int g dr`` by the trapezoid rule in ``x = log r``."""
    return float(np.trapezoid(g * r, np.log(r)))


def _geom(mfd: SingularManifold, r):
    p = mfd.profile
    return p.phi(r), p.dphi(r)


def grad_sq(f: RadialFunction, mfd: SingularManifold):
    """Fiber-integrated ``|grad u|^2``."""
    phi, _ = _geom(mfd, f.r)
    return f.du**2 + f.ell * f.u**2 / phi**2


def hess_sq(f: RadialFunction, mfd: SingularManifold):
    """Fiber-integrated ``|Hess u|^2`` on the warped product (Einstein fiber)."""
    phi, dphi = _geom(mfd, f.r)
    m = mfd.m
    ell = f.ell
    kappa = mfd.cross_section.einstein_const
    if ell != 0.0 and kappa is None:
        raise UnsupportedOperation("second derivatives of non-radial modes need an Einstein fiber")
    kappa = 0.0 if kappa is None else kappa
    u, du, d2u = f.u, f.du, f.d2u
    mixed = 2 * ell * (du - dphi * u / phi) ** 2 / phi**2
    fib = (u**2 * (ell**2 - (m - 1) * kappa * ell) - 2 * ell * phi * dphi * u * du + m * phi**2 * dphi**2 * du**2) / phi**4
    return d2u**2 + mixed + fib


def h_norm_sq_terms(f: RadialFunction, k: int, delta: float, mfd: SingularManifold, eps: float | None = None):
    """List of ``int chi^{2(delta-i)+n} |grad^i u|^2 dvol`` for ``i = 0..k``."""
    if k > 2 or k < 0:
        raise UnsupportedOperation("weighted norms are implemented for k <= 2")
    eps = mfd.L if eps is None else eps
    n = mfd.n
    phi, _ = _geom(mfd, f.r)
    ic = inv_chi(f.r, eps)
    vol = phi**mfd.m
    dens = [f.u**2, grad_sq(f, mfd), None]
    if k == 2:
        dens[2] = hess_sq(f, mfd)
    return [_trap_log(f.r, ic ** (-(2 * (delta - i) + n)) * dens[i] * vol) for i in range(k + 1)]


def h_norm(f: RadialFunction, k: int, delta: float, mfd: SingularManifold, eps: float | None = None) -> float:
    """``||u||_{H^k_delta}`` over the sampled radial range."""
    return math.sqrt(sum(h_norm_sq_terms(f, k, delta, mfd, eps)))


@dataclass(frozen=True)
class NormLimit:
    value: float
    converged: bool
    history: list


def h_norm_limit(
    fn: Callable,
    k: int,
    delta: float,
    mfd: SingularManifold,
    dfn: Callable | None = None,
    d2fn: Callable | None = None,
    ell: float = 0.0,
    per_decade: int = 200,
    depths=(6, 9, 12, 15),
    rtol: float = 1e-6,
) -> NormLimit:
    """Norm of a callable ``u`` on ``(0, L)`` as the inner cut-off shrinks.

    The integral over ``[L 10^-d, L]`` is evaluated for each depth ``d``; the
    norm is reported as ``inf`` (``converged=False``) unless the last two
    increments are below ``rtol`` relative and not growing.
    """
    L = mfd.L
    hist = []
    for d in depths:
        r = np.logspace(math.log10(L) - d, math.log10(L), d * per_decade + 1)
        f = RadialFunction.from_callables(r, fn, dfn, d2fn, ell)
        hist.append(sum(h_norm_sq_terms(f, k, delta, mfd)))
    inc = np.abs(np.diff(hist))
    tiny = 1e-13 * max(hist[-1], 1e-300)
    ok = inc[-1] <= rtol * max(hist[-1], 1e-300) and (inc[-1] <= inc[-2] or inc[-1] <= tiny)
    if not ok:
        return NormLimit(math.inf, False, hist)
    return NormLimit(math.sqrt(hist[-1]), True, hist)


def c_norm(f: RadialFunction, l: int, delta: float, mfd: SingularManifold) -> float:
    """Grid sup of ``sum_{i<=l} r^{i-delta} |grad^i u|`` (cone weight ``1/chi = r``)."""
    if l not in (0, 1):
        raise UnsupportedOperation("c_norm is implemented for l <= 1")
    r = f.r
    val = r ** (-delta) * np.abs(f.u)
    if l == 1:
        val = val + r ** (1 - delta) * np.sqrt(grad_sq(f, mfd))
    return float(np.max(val))


def annulus_h_norm(fn, k, delta, mfd, r1, r2, dfn=None, d2fn=None, ell=0.0, nodes=4001):
    """``||u||_{H^k_delta}`` on ``(r1, r2)`` with the cone weight."""
    r = np.exp(np.linspace(math.log(r1), math.log(r2), nodes))
    f = RadialFunction.from_callables(r, fn, dfn, d2fn, ell)
    return h_norm(f, k, delta, mfd, eps=math.inf)


def annulus_c_norm(fn, l, delta, mfd, r1, r2, dfn=None, ell=0.0, nodes=4001):
    r = np.exp(np.linspace(math.log(r1), math.log(r2), nodes))
    f = RadialFunction.from_callables(r, fn, dfn, None, ell)
    return c_norm(f, l, delta, mfd)


@dataclass(frozen=True)
class ScalingReport:
    h_lhs: float
    h_rhs: float
    c_lhs: float
    c_rhs: float
    h_rel: float
    c_rel: float
    passed: bool


def scaling_check(fn, a, delta, mfd, r1=0.25, r2=1.0, k=1, l=1, dfn=None, d2fn=None, ell=0.0, tol=1e-10) -> ScalingReport:
    """Compare norms of ``u`` on ``(a r1, a r2)`` with ``a^-delta`` times norms of
    ``u_a(r) = u(a r)`` on ``(r1, r2)`` (exact cone)."""
    if not (0 < a <= 1):
        raise InvalidParameterError("a must lie in (0, 1]")
    fa = lambda r: fn(a * r)
    dfa = None if dfn is None else (lambda r: a * dfn(a * r))
    d2fa = None if d2fn is None else (lambda r: a * a * d2fn(a * r))
    hl = annulus_h_norm(fn, k, delta, mfd, a * r1, a * r2, dfn, d2fn, ell)
    hr = a ** (-delta) * annulus_h_norm(fa, k, delta, mfd, r1, r2, dfa, d2fa, ell)
    cl = annulus_c_norm(fn, l, delta, mfd, a * r1, a * r2, dfn, ell)
    cr = a ** (-delta) * annulus_c_norm(fa, l, delta, mfd, r1, r2, dfa, ell)
    he = abs(hl - hr) / max(abs(hl), 1e-300)
    ce = abs(cl - cr) / max(abs(cl), 1e-300)
    return ScalingReport(hl, hr, cl, cr, he, ce, he <= tol and ce <= tol)


@dataclass(frozen=True)
class ConeCylinderReport:
    lhs: float
    rhs: float
    identity: float
    identity_residual: float
    passed: bool


def cone_cylinder_check(modes, epsilon: float, n: int, atol: float = 1e-10) -> ConeCylinderReport:
    """Cone-to-cylinder comparison for a function supported in ``(0, epsilon) x N``.

    ``modes`` is a list of :class:`RadialFunction` on the exact cone (one per
    fiber eigenfunction, ``ell`` its Laplace eigenvalue).

    * lhs: ``int (|grad u|^2 + u^2/r^2) dvol`` (squared weighted H^1 norm);
    * rhs: ``(3/4) min(1, 1/eps^2) int (v'^2 + ell v^2 + v^2) dr``, ``v = r^{(n-1)/2} u``;
    * identity: ``int (1 + (n-1)(n-3)/4 + ell) v^2/r^2 + v'^2 dr``.
    """
    if not epsilon > 0:
        raise InvalidParameterError("epsilon must be positive")
    m = n - 1
    lhs = rhs = ident = 0.0
    scale = 0.75 * min(1.0, 1.0 / epsilon**2)
    for f in modes:
        r = f.r
        inside = r < epsilon
        big = np.max(np.abs(f.u)) if f.u.size else 0.0
        if big > 0 and np.any(np.abs(f.u[~inside]) > 1e-14 * big):
            raise InvalidParameterError("test function must be supported in (0, epsilon)")
        ell = f.ell
        lhs += _trap_log(r, (f.du**2 + (ell + 1) * f.u**2 / r**2) * r**m)
        v = r ** (m / 2) * f.u
        dv = r ** (m / 2) * (f.du + m / 2 * f.u / r)
        rhs += scale * _trap_log(r, dv**2 + (ell + 1) * v**2)
        ident += _trap_log(r, (1 + (n - 1) * (n - 3) / 4 + ell) * v**2 / r**2 + dv**2)
    res = abs(lhs - ident) / max(abs(lhs), 1e-300) if lhs else abs(ident)
    return ConeCylinderReport(lhs, rhs, ident, res, lhs >= rhs - atol)


def l2_isometry_defect(f: RadialFunction, n: int) -> float:
    """Relative difference of ``int u^2 r^{n-1} dr`` and ``int v^2 dr``, ``v = r^{(n-1)/2} u``."""
    a = _trap_log(f.r, f.u**2 * f.r ** (n - 1))
    v = f.r ** ((n - 1) / 2) * f.u
    b = _trap_log(f.r, v * v)
    return abs(a - b) / max(abs(a), 1e-300)


def random_bump(rng: np.random.Generator, support: tuple[float, float], terms: int = 3):
    """Random smooth function compactly supported in ``support``, with derivatives.

    Sum of ``terms`` scaled bumps ``A exp(-1/(1 - t^2))``, ``t = (r - c)/w``.
    Returns callables ``(f, f', f'')``.
    """
    a, b = support
    cs, ws, As = [], [], []
    for _ in range(terms):
        lo = a + (b - a) * rng.uniform(0.02, 0.6)
        hi = lo + (b - lo) * rng.uniform(0.2, 0.98)
        cs.append(0.5 * (lo + hi))
        ws.append(0.5 * (hi - lo))
        As.append(rng.normal())

    def parts(r, c, w):
        t = (np.asarray(r, float) - c) / w
        inside = np.abs(t) < 1
        g = np.zeros_like(t)
        g1 = np.zeros_like(t)
        g2 = np.zeros_like(t)
        ti = t[inside]
        s = 1 - ti * ti
        e = np.exp(-1 / s)
        # d/dt exp(-1/(1-t^2)) = -2t/(1-t^2)^2 e
        p1 = -2 * ti / s**2
        dp1 = (-2 * s**2 - (-2 * ti) * 2 * s * (-2 * ti)) / s**4
        g[inside] = e
        g1[inside] = p1 * e / w
        g2[inside] = (dp1 + p1 * p1) * e / w**2
        return g, g1, g2

    def f(r, order=0):
        tot = 0.0
        for c, w, A in zip(cs, ws, As):
            tot = tot + A * parts(r, c, w)[order]
        return tot

    return (lambda r: f(r, 0)), (lambda r: f(r, 1)), (lambda r: f(r, 2))
