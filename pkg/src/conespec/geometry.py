"""
Warped-product manifolds ``g = dr^2 + phi(r)^2 h0`` over a cross-section.

A profile ``phi`` on ``(0, L]`` with ``phi(r)/r -> c0`` describes a conical tip
at ``r = 0``.  ``Spindle`` profiles close up with a second conical point at
``r = L``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .cross_section import CrossSection, check_cone_condition
from .errors import DomainError, InvalidParameterError, UnsupportedOperation


class Profile:
    """Base class for warping functions.

    Subclasses provide vectorised ``phi``, ``dphi`` and ``d2phi`` on ``(0, L]``,
    the tip slope ``c0`` and, for closed profiles, the slope magnitude
    ``end_slope`` at ``r = L``.
    """

    L: float
    c0: float = 1.0
    end_slope: float | None = None
    kind: str = "profile"
    diagnostic: bool = False

    def phi(self, r):
        raise NotImplementedError

    def dphi(self, r):
        raise NotImplementedError

    def d2phi(self, r):
        raise NotImplementedError

    def ratio_derivative(self, r, order):
        """``d^order/dr^order [(phi/r)^2]``; subclasses override with closed forms."""
        return _cheb_derivative(lambda x: (self.phi(x) / x) ** 2, np.asarray(r, float), order)

    def check_domain(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(~(r > 0)) or np.any(r > self.L * (1 + 1e-14)):
            raise DomainError(f"r must lie in (0, {self.L}]")
        return r

    def scaled(self, a: float) -> "Profile":
        """Profile of the metric ``a^2 g`` expressed in its own arclength."""
        return ScaledProfile(self, a)


@dataclass(frozen=True)
class ExactCone(Profile):
    L: float = 1.0
    kind: str = "exact_cone"

    def __post_init__(self):
        _positive("L", self.L)

    def phi(self, r):
        return np.array(self.check_domain(r), copy=True)

    def dphi(self, r):
        return np.ones_like(self.check_domain(r))

    def d2phi(self, r):
        return np.zeros_like(self.check_domain(r))

    def ratio_derivative(self, r, order):
        r = np.asarray(r, float)
        return np.ones_like(r) if order == 0 else np.zeros_like(r)


@dataclass(frozen=True)
class PerturbedCone(Profile):
    """``phi = r (1 + eta r^alpha)``; ``alpha >= 1`` unless ``diagnostic``."""

    eta: float = 0.1
    alpha: float = 1.5
    L: float = 1.0
    diagnostic: bool = False
    kind: str = "perturbed_cone"

    def __post_init__(self):
        _positive("L", self.L)
        if not self.alpha > 0:
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha}")
        if self.alpha < 1 and not self.diagnostic:
            raise InvalidParameterError(
                f"alpha = {self.alpha} < 1 violates the derivative decay condition; "
                "construct with diagnostic=True to allow it"
            )
        rr = np.linspace(self.L * 1e-6, self.L, 2001)
        if np.any(1 + self.eta * rr**self.alpha <= 0):
            raise InvalidParameterError("phi must stay positive on (0, L]")

    def phi(self, r):
        r = self.check_domain(r)
        return r * (1 + self.eta * r**self.alpha)

    def dphi(self, r):
        r = self.check_domain(r)
        return 1 + self.eta * (self.alpha + 1) * r**self.alpha

    def d2phi(self, r):
        r = self.check_domain(r)
        a = self.alpha
        return self.eta * (a + 1) * a * r ** (a - 1)

    def ratio_derivative(self, r, order):
        # (1 + eta r^a)^2 = 1 + 2 eta r^a + eta^2 r^(2a)
        r = np.asarray(r, float)
        out = _falling(self.alpha, order) * 2 * self.eta * r ** (self.alpha - order)
        out = out + _falling(2 * self.alpha, order) * self.eta**2 * r ** (2 * self.alpha - order)
        if order == 0:
            out = out + 1.0
        return out


@dataclass(frozen=True)
class Spindle(Profile):
    """``phi = c (L/pi) sin(pi r / L)``: conical points with slope ``c`` at both ends."""

    c: float = 1.0
    L: float = math.pi
    kind: str = "spindle"

    def __post_init__(self):
        _positive("c", self.c)
        _positive("L", self.L)

    @property
    def c0(self):
        return self.c

    @property
    def end_slope(self):
        return self.c

    def phi(self, r):
        r = self.check_domain(r)
        k = math.pi / self.L
        return self.c / k * np.sin(k * r)

    def dphi(self, r):
        r = self.check_domain(r)
        k = math.pi / self.L
        return self.c * np.cos(k * r)

    def d2phi(self, r):
        r = self.check_domain(r)
        k = math.pi / self.L
        return -self.c * k * np.sin(k * r)

    def ratio_derivative(self, r, order):
        # c^2 (sin x / x)^2 = c^2 sum_{k>=1} (-1)^(k+1) 2^(2k-1) x^(2k-2) / (2k)!,  x = pi r / L
        r = np.asarray(r, float)
        k0 = math.pi / self.L
        x = k0 * r
        out = np.zeros_like(r)
        for k in range(1, 40):
            p = 2 * k - 2
            if p < order:
                continue
            coef = (-1) ** (k + 1) * 2.0 ** (2 * k - 1) / math.factorial(2 * k)
            out = out + coef * _falling(p, order) * x ** (p - order)
        return self.c**2 * k0**order * out


class CustomProfile(Profile):
    """Profile from user callables (used for metric families)."""

    kind = "custom"

    def __init__(self, phi, dphi, d2phi, L, c0=1.0, end_slope=None, label="custom", ratio=None):
        _positive("L", L)
        self._phi, self._dphi, self._d2phi = phi, dphi, d2phi
        self.L = float(L)
        self.c0 = float(c0)
        self.end_slope = end_slope
        self.label = label
        self._ratio = ratio

    def phi(self, r):
        return np.asarray(self._phi(self.check_domain(r)), float)

    def dphi(self, r):
        return np.asarray(self._dphi(self.check_domain(r)), float)

    def d2phi(self, r):
        return np.asarray(self._d2phi(self.check_domain(r)), float)

    def ratio_derivative(self, r, order):
        if self._ratio is not None:
            return self._ratio(np.asarray(r, float), order)
        return super().ratio_derivative(r, order)


class TabulatedProfile(Profile):
    """Cubic-spline profile through samples ``(r_j, phi_j)``.

    The spline is clamped to slope ``c0`` at ``r = 0`` and ``-end_slope`` at
    ``r = L`` when ``end_slope`` is given.  Samples must include ``r = 0``
    (with ``phi = 0``).
    """

    kind = "tabulated"

    def __init__(self, r, phi, c0, end_slope=None, label="tabulated"):
        r = np.asarray(r, float)
        phi = np.asarray(phi, float)
        if r.ndim != 1 or r.shape != phi.shape or r.size < 4:
            raise InvalidParameterError("need matching 1-D samples with at least 4 points")
        if r[0] != 0.0 or phi[0] != 0.0:
            raise InvalidParameterError("samples must start at (0, 0)")
        if np.any(np.diff(r) <= 0):
            raise InvalidParameterError("sample abscissae must increase")
        if np.any(phi[1:-1] <= 0):
            raise InvalidParameterError("phi samples must be positive in the interior")
        _positive("c0", c0)
        end = (1, -float(end_slope)) if end_slope is not None else "not-a-knot"
        self._spl = CubicSpline(r, phi, bc_type=((1, float(c0)), end))
        self._d1 = self._spl.derivative(1)
        self._d2 = self._spl.derivative(2)
        self.L = float(r[-1])
        self.c0 = float(c0)
        self.end_slope = None if end_slope is None else float(end_slope)
        self.label = label

    def phi(self, r):
        return self._spl(self.check_domain(r))

    def dphi(self, r):
        return self._d1(self.check_domain(r))

    def d2phi(self, r):
        return self._d2(self.check_domain(r))


class ScaledProfile(Profile):
    """``a^2 g``: ``phi_a(r) = a phi(r/a)`` on ``(0, a L]``."""

    kind = "scaled"

    def __init__(self, base: Profile, a: float):
        _positive("a", a)
        self.base = base
        self.a = float(a)
        self.L = base.L * a
        self.c0 = base.c0
        self.end_slope = base.end_slope
        self.diagnostic = base.diagnostic

    def phi(self, r):
        return self.a * self.base.phi(self.check_domain(r) / self.a)

    def dphi(self, r):
        return self.base.dphi(self.check_domain(r) / self.a)

    def d2phi(self, r):
        return self.base.d2phi(self.check_domain(r) / self.a) / self.a

    def ratio_derivative(self, r, order):
        return self.base.ratio_derivative(np.asarray(r, float) / self.a, order) / self.a**order


def _positive(name, v):
    if not (v > 0 and math.isfinite(v)):
        raise InvalidParameterError(f"{name} must be positive and finite, got {v}")


def _falling(a: float, k: int) -> float:
    p = 1.0
    for j in range(k):
        p *= a - j
    return p


def _cheb_derivative(fn, r, order, deg=24):
    # local Chebyshev fits on dyadic-decade panels, differentiated analytically
    out = np.empty_like(r)
    logs = np.floor(np.log10(r))
    for dec in np.unique(logs):
        lo, hi = 10.0**dec, 10.0 ** (dec + 1)
        sel = logs == dec
        x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(np.pi * (np.arange(deg + 1) + 0.5) / (deg + 1))
        cheb = np.polynomial.Chebyshev.fit(x, fn(x), deg, domain=[lo, hi])
        out[sel] = cheb.deriv(order)(r[sel]) if order else cheb(r[sel])
    return out


@dataclass(frozen=True)
class SingularManifold:
    """Warped product over ``(0, L)`` with a conical tip at ``r = 0``.

    Parameters
    ----------
    n : int
        Total dimension.
    cross_section : CrossSection
        Spectral data of ``(N, h0)``; the tip link is ``c0^2 h0``.
    profile : Profile
    outer_bc : {"dirichlet", "conical"}
        Dirichlet wall at ``r = L`` or a second conical point (spindles).
    diagnostic : bool
        Skip the admissibility check (threshold-failure experiments).
    """

    n: int
    cross_section: CrossSection
    profile: Profile
    outer_bc: str = "dirichlet"
    diagnostic: bool = False
    label: str = field(default="", compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise InvalidParameterError(f"n must be an integer >= 3, got {self.n}")
        if self.n != self.cross_section.fiber_dim + 1:
            raise InvalidParameterError(
                f"n = {self.n} does not match cross-section dimension "
                f"{self.cross_section.fiber_dim} + 1"
            )
        if self.outer_bc not in ("dirichlet", "conical"):
            raise InvalidParameterError(f"outer_bc must be 'dirichlet' or 'conical', got {self.outer_bc!r}")
        if self.outer_bc == "conical" and self.profile.end_slope is None:
            raise InvalidParameterError("conical outer end needs a profile with end_slope")
        if self.profile.diagnostic and not self.diagnostic:
            raise InvalidParameterError("diagnostic profile requires a diagnostic manifold")
        if not self.diagnostic:
            for cs in self.end_cross_sections():
                rep = check_cone_condition(cs, self.n)
                if not rep.admissible:
                    raise InvalidParameterError(
                        f"cone condition fails at a tip (margin {rep.margin:.6g}); "
                        "use diagnostic=True for threshold experiments"
                    )

    @property
    def m(self) -> int:
        return self.n - 1

    @property
    def L(self) -> float:
        return self.profile.L

    def tip_cross_section(self) -> CrossSection:
        return self.cross_section.scaled(self.profile.c0)

    def end_cross_sections(self) -> list[CrossSection]:
        out = [self.tip_cross_section()]
        if self.outer_bc == "conical":
            out.append(self.cross_section.scaled(self.profile.end_slope))
        return out

    def with_profile(self, profile: Profile, diagnostic: bool | None = None) -> "SingularManifold":
        return SingularManifold(
            self.n,
            self.cross_section,
            profile,
            self.outer_bc,
            self.diagnostic if diagnostic is None else diagnostic,
            self.label,
        )

    def fiber_volume(self) -> float:
        """Volume of ``(N, h0)`` when it is a round sphere, else 1."""
        p = self.cross_section.params
        if p and p[0] == "round_sphere":
            m, c = p[1], p[2]
            return 2 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2) * c**m
        return 1.0


def scal(mfd: SingularManifold, r):
    """Scalar curvature ``[R_h0 - m(m-1) phi'^2] / phi^2 - 2 m phi'' / phi``.

    ``R_h0`` is modelled as the constant ``scal_min``.
    """
    r = mfd.profile.check_domain(r)
    m = mfd.m
    p, dp, d2p = mfd.profile.phi(r), mfd.profile.dphi(r), mfd.profile.d2phi(r)
    return (mfd.cross_section.scal_min - m * (m - 1) * dp * dp) / (p * p) - 2 * m * d2p / p


def ricci_warped(mfd: SingularManifold, r):
    """Radial Ricci component and fiber coefficient (``Ric = coeff * h0`` on the fiber)."""
    kappa = mfd.cross_section.einstein_const
    if kappa is None:
        raise UnsupportedOperation("ricci_warped needs an Einstein cross-section")
    r = mfd.profile.check_domain(r)
    m = mfd.m
    p, dp, d2p = mfd.profile.phi(r), mfd.profile.dphi(r), mfd.profile.d2phi(r)
    ric_rr = -m * d2p / p
    fib = (m - 1) * kappa - (p * d2p + (m - 1) * dp * dp)
    return ric_rr, fib


@dataclass(frozen=True)
class AsymptoticReport:
    bounds: dict
    slopes: dict
    passed: bool
    failing_orders: list


def check_asymptotic_condition(p: Profile, n: int, decades: int = 8, per_decade: int = 40):
    """Bound ``r^i |d^{i+1}/dr^{i+1} ((phi/r)^2 - c0^2)|`` for ``0 <= i <= n//2 + 2``.

    The bound ``C_i`` is the sup over a log grid on ``[L 10^-decades, L/4]``.  An
    order fails when the weighted derivative still grows towards the tip, i.e.
    its log-log slope over the innermost two decades is below ``-0.05``.
    """
    r = np.logspace(math.log10(p.L) - decades, math.log10(p.L / 4), decades * per_decade)
    bounds, slopes, failing = {}, {}, []
    inner = r < r[0] * 100
    for i in range(0, n // 2 + 3):
        vals = np.abs(r**i * p.ratio_derivative(r, i + 1))
        bounds[i] = float(vals.max())
        good = inner & (vals > 1e-300)
        if good.sum() >= 2 and vals[inner].max() > 1e-12:
            slope = float(np.polyfit(np.log(r[good]), np.log(vals[good]), 1)[0])
        else:
            slope = 0.0
        slopes[i] = slope
        if slope < -0.05 or not np.isfinite(bounds[i]):
            failing.append(i)
    return AsymptoticReport(bounds, slopes, not failing, failing)
