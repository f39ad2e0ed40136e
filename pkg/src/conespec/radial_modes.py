"""
Radial mode problems.

Separating ``u(r) psi_i(theta)`` in ``(-4 Delta + R) U = lambda U`` on the warped
product gives, after the substitution ``w = phi^{m/2} u`` (``m = n - 1``),

    -4 w'' + Q_i w = lambda w,    Q_i = mu_i / phi^2 - m (phi'/phi)^2,

so near a tip with slope ``c0`` the potential behaves like ``(nu^2 - 1)/r^2`` with
``nu = sqrt(mu_i / c0^2 - (n - 2))``.  The finite-volume discretisation below
works in ``w``: stiffness ``4/h`` per cell, lumped mass, and at a conical end
the Robin condition ``w'/w = (1 + nu) / (2 r)`` whose boundary term equals the
exact energy of the regular branch ``w ~ r^{(1+nu)/2}`` on the cut-off tip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import special
from .cross_section import CrossSection, check_cone_condition
from .errors import (
    InvalidParameterError,
    NoAdmissibleDeltaError,
    SubcriticalModeError,
    UnsupportedOperation,
)
from .geometry import ExactCone, Profile, SingularManifold
from .tridiag import SymTridiag, eigenvalues, eigenvector, sturm_count

_CRIT_TOL = 1e-12


# ---------------------------------------------------------------------------
# mode ODE


def mode_potential(n: int, mu: float, profile: Profile) -> Callable:
    """``Q(r) = mu / phi^2 - (n-1) (phi'/phi)^2`` as a vectorised callable."""
    m = n - 1
    if isinstance(profile, ExactCone):
        return lambda r: (mu - m) / np.asarray(r, float) ** 2

    def Q(r):
        p = profile.phi(r)
        dp = profile.dphi(r)
        return mu / (p * p) - m * (dp / p) ** 2

    return Q


def tip_nu(n: int, mu: float, slope: float) -> float | None:
    """``sqrt(mu/slope^2 - (n-2))`` or None for a subcritical mode."""
    d = mu / (slope * slope) - (n - 2)
    if d <= _CRIT_TOL * max(1.0, abs(mu)):
        return None
    return math.sqrt(d)


@dataclass(frozen=True)
class ModeODE:
    """Radial problem for one cross-section mode."""

    n: int
    mu: float
    profile: Profile
    mode_index: int = 0
    multiplicity: int = 1
    nu: float | None = field(init=False)
    nu_end: float | None = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "nu", tip_nu(self.n, self.mu, self.profile.c0))
        es = self.profile.end_slope
        object.__setattr__(self, "nu_end", None if es is None else tip_nu(self.n, self.mu, es))

    @property
    def m(self) -> int:
        return self.n - 1

    @property
    def subcritical(self) -> bool:
        return self.nu is None

    @property
    def tip_mu(self) -> float:
        return self.mu / self.profile.c0**2

    def Q(self, r):
        return mode_potential(self.n, self.mu, self.profile)(r)

    def require_nu(self) -> float:
        if self.nu is None:
            raise SubcriticalModeError(self.tip_mu - (self.n - 2), self.mode_index)
        return self.nu

    def indicial_exponents(self) -> tuple[float, float]:
        nu = self.require_nu()
        s0 = -(self.n - 2) / 2
        return s0 + nu / 2, s0 - nu / 2


def mode_odes(mfd: SingularManifold, count: int) -> list[ModeODE]:
    out = []
    for i in range(count):
        mu, mult = mfd.cross_section.mode(i)
        out.append(ModeODE(mfd.n, mu, mfd.profile, i, mult))
    return out


# ---------------------------------------------------------------------------
# Liouville transform


def to_w(u, r, profile: Profile, n: int):
    return np.asarray(u, float) * profile.phi(r) ** ((n - 1) / 2)


def from_w(w, r, profile: Profile, n: int):
    return np.asarray(w, float) / profile.phi(r) ** ((n - 1) / 2)


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class RadialGrid:
    """Nodes ``r_0 < ... < r_M`` covering ``[r_min, r_end]``.

    ``grading`` is ``"log"`` (geometric), ``"uniform"`` or ``"logit"`` (geometric
    towards both ends, for closed profiles).
    """

    nodes: np.ndarray
    grading: str = "log"
    L: float = 1.0

    def __post_init__(self):
        x = np.ascontiguousarray(self.nodes, float)
        if x.ndim != 1 or x.size < 3:
            raise InvalidParameterError("a grid needs at least 3 nodes")
        if np.any(np.diff(x) <= 0):
            raise InvalidParameterError("grid nodes must increase strictly")
        if x[0] < 0:
            raise InvalidParameterError("grid must lie in r >= 0")
        object.__setattr__(self, "nodes", x)

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @classmethod
    def log_uniform(cls, L: float, M: int, r_min: float) -> "RadialGrid":
        if not (0 < r_min < L):
            raise InvalidParameterError("need 0 < r_min < L")
        return cls(r_min * (L / r_min) ** (np.arange(M + 1) / M), "log", L)

    @classmethod
    def uniform(cls, L: float, M: int, r_min: float = 0.0) -> "RadialGrid":
        return cls(np.linspace(r_min, L, M + 1), "uniform", L)

    @classmethod
    def logit(cls, L: float, M: int, r_min: float) -> "RadialGrid":
        """Symmetric grid on ``[r_min, L - r_min]`` via ``r = L / (1 + exp(-s))``."""
        if not (0 < r_min < L / 2):
            raise InvalidParameterError("need 0 < r_min < L/2")
        s_max = math.log((L - r_min) / r_min)
        s = np.linspace(-s_max, s_max, M + 1)
        r = L / (1 + np.exp(-s))
        r[0], r[-1] = r_min, L - r_min
        return cls(r, "logit", L)

    @classmethod
    def for_manifold(
        cls, mfd: SingularManifold, M: int = 2048, r_min_factor: float = 1e-6, grading: str = "auto"
    ) -> "RadialGrid":
        L = mfd.L
        if grading == "auto":
            grading = "logit" if mfd.outer_bc == "conical" else "log"
        if grading == "log":
            return cls.log_uniform(L, M, L * r_min_factor)
        if grading == "logit":
            return cls.logit(L, M, L * r_min_factor)
        if grading == "uniform":
            return cls.uniform(L, M, L * r_min_factor)
        raise InvalidParameterError(f"unknown grading {grading!r}")


# ---------------------------------------------------------------------------
# discretisation


@dataclass(frozen=True)
class ModeOperator:
    """Generalised tridiagonal problem ``A w = lambda B w`` for one mode.

    ``A`` (diagonal ``a_diag``, off-diagonal ``a_off``) holds stiffness, potential
    and Robin terms on the unknown nodes ``grid.nodes[idx]``; ``B`` is the
    lumped mass.  ``T = B^{-1/2} A B^{-1/2}`` is the symmetric tridiagonal form.
    """

    grid: RadialGrid
    idx: np.ndarray
    a_diag: np.ndarray
    a_off: np.ndarray
    mass: np.ndarray
    q: np.ndarray
    inner_bc: str
    outer_bc: str
    mode: ModeODE | None = None
    diagnostic: bool = False

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes[self.idx]

    @property
    def size(self) -> int:
        return self.idx.size

    @property
    def T(self) -> SymTridiag:
        s = 1.0 / np.sqrt(self.mass)
        return SymTridiag(self.a_diag * s * s, self.a_off * s[:-1] * s[1:])

    @property
    def diag(self):
        return self.T.diag

    @property
    def offdiag(self):
        return self.T.offdiag

    def matvec_A(self, w):
        y = self.a_diag * w
        y[:-1] += self.a_off * w[1:]
        y[1:] += self.a_off * w[:-1]
        return y

    def count_below(self, lam: float) -> int:
        return sturm_count(self.T, lam)

    def eigenvalues(self, k_lo: int, k_hi: int, abs_tol: float = 1e-12) -> np.ndarray:
        return eigenvalues(self.T, k_lo, k_hi, abs_tol)

    def eigenpair(self, k: int, abs_tol: float = 1e-12) -> tuple[float, np.ndarray]:
        """``k``-th eigenvalue and its eigenvector ``w`` with ``sum(B w^2) = 1``."""
        T = self.T
        lam = float(eigenvalues(T, k, k, abs_tol)[0])
        v = eigenvector(T, lam)
        return lam, v / np.sqrt(self.mass)

    def full_w(self, w) -> np.ndarray:
        """Unknown values scattered onto all grid nodes (zero at Dirichlet ends)."""
        out = np.zeros(self.grid.nodes.size)
        out[self.idx] = w
        return out


def assemble_generalized(
    nodes,
    q,
    inner: str = "dirichlet",
    outer: str = "dirichlet",
    sigma_inner: float = 0.0,
    sigma_outer: float = 0.0,
    coef: float = 4.0,
):
    """Flux-form assembly of ``-coef w'' + q w`` on ``nodes``.

    Returns ``(idx, a_diag, a_off, mass)``.  ``"robin"`` ends keep their node and
    add ``coef * sigma`` to the diagonal; ``"dirichlet"`` ends drop it.
    """
    x = np.asarray(nodes, float)
    q = np.asarray(q, float)
    h = np.diff(x)
    Mn = x.size
    d = np.zeros(Mn)
    d[:-1] += coef / h
    d[1:] += coef / h
    off = -coef / h
    B = np.zeros(Mn)
    B[:-1] += 0.5 * h
    B[1:] += 0.5 * h
    keep = np.ones(Mn, bool)
    if inner == "robin":
        d[0] += coef * sigma_inner
    elif inner == "dirichlet":
        keep[0] = False
    else:
        raise InvalidParameterError(f"unknown inner condition {inner!r}")
    if outer == "robin":
        d[-1] += coef * sigma_outer
    elif outer == "dirichlet":
        keep[-1] = False
    else:
        raise InvalidParameterError(f"unknown outer condition {outer!r}")
    idx = np.flatnonzero(keep)
    qk = q[idx]
    a_diag = d[idx] + qk * B[idx]
    a_off = off[idx[:-1]]
    return idx, a_diag, a_off, B[idx]


def discretize(mode: ModeODE, grid: RadialGrid, inner_bc: str = "friedrichs") -> ModeOperator:
    """Tridiagonal operator for ``-4 w'' + Q w`` on ``grid``.

    ``inner_bc``:
        ``"friedrichs"`` Robin condition for every supercritical mode (default);
        ``"auto"`` Robin only in the limit-circle range ``nu < 1``, Dirichlet otherwise;
        ``"robin"`` same as ``"friedrichs"``;
        ``"dirichlet"`` truncation at ``r_min``.
    Subcritical modes get Dirichlet at ``r_min`` and are tagged ``diagnostic``.
    The outer end is Dirichlet, or a Robin tip condition for closed profiles.
    """
    x = grid.nodes
    profile = mode.profile
    if x[-1] > profile.L * (1 + 1e-12):
        raise InvalidParameterError("grid extends beyond the profile domain")
    diagnostic = mode.subcritical
    r0 = x[0]
    if r0 == 0.0:
        inner = "dirichlet"
    elif diagnostic:
        inner = "dirichlet"
    elif inner_bc in ("friedrichs", "robin"):
        inner = "robin"
    elif inner_bc == "auto":
        inner = "robin" if mode.nu < 1 else "dirichlet"
    elif inner_bc == "dirichlet":
        inner = "dirichlet"
    else:
        raise InvalidParameterError(f"unknown inner_bc {inner_bc!r}")
    closed = profile.end_slope is not None and x[-1] < profile.L
    outer = "dirichlet"
    sig_out = 0.0
    if closed:
        if mode.nu_end is None:
            diagnostic = True
        else:
            outer = "robin"
            sig_out = (1 + mode.nu_end) / (2 * (profile.L - x[-1]))
    sig_in = 0.0 if inner != "robin" else (1 + mode.nu) / (2 * r0)
    q = np.zeros_like(x)
    inside = x > 0
    inside[-1] = inside[-1] and x[-1] < profile.L
    q[inside] = mode.Q(x[inside])
    idx, a_diag, a_off, mass = assemble_generalized(x, q, inner, outer, sig_in, sig_out)
    return ModeOperator(
        grid, idx, a_diag, a_off, mass, q[idx], inner, outer, mode, diagnostic
    )


# ---------------------------------------------------------------------------
# closed-form solutions on the exact cone


_ZERO_LAMBDA = 1e-20


def _is_integer(x: float) -> bool:
    return abs(x - round(x)) <= 1e-12 * max(1.0, abs(x))


def closed_form_solution(mode: ModeODE, lam: float, branch: str = "friedrichs") -> Callable:
    """Exact solution of the mode ODE on an exact cone.

    ``lam > 0``: ``r^{-(n-2)/2} J_{nu/2}(sqrt(lam) r / 2)`` (``Y`` for the second branch).
    ``lam = 0``: ``r^{-(n-2)/2 +- nu/2}``, also used for ``|lam| < 1e-20`` where
    the scaled Bessel and Kummer forms under- or overflow (the power law then
    solves the equation up to a relative ``|lam| r^2 / 4``).
    ``lam < 0``: ``r^{-(n-1)/2} (k r)^{(1+-nu)/2} e^{-k r/2} M((1+-nu)/2, 1+-nu, k r)``
    with ``k = sqrt(-lam)``; when ``nu`` is an integer the second branch uses
    Tricomi's ``U((1+nu)/2, 1+nu, k r)`` (logarithmic for even ``nu``).
    """
    if not isinstance(mode.profile, ExactCone):
        raise UnsupportedOperation("closed forms are available on exact cones only")
    nu = mode.require_nu()
    n = mode.n
    if branch not in ("friedrichs", "second"):
        raise InvalidParameterError(f"branch must be 'friedrichs' or 'second', got {branch!r}")
    second = branch == "second"
    s0 = -(n - 2) / 2
    if abs(lam) < _ZERO_LAMBDA:
        lam = 0.0

    if lam > 0:
        k = math.sqrt(lam) / 2
        fn = special.bessel_y if second else special.bessel_j

        def scalar(r):
            return r**s0 * fn(nu / 2, k * r)

    elif lam == 0:
        e = s0 - nu / 2 if second else s0 + nu / 2

        def scalar(r):
            return r**e

    else:
        kap = math.sqrt(-lam)
        t0 = -(n - 1) / 2
        if not second:
            a = (1 + nu) / 2

            def scalar(r):
                z = kap * r
                return r**t0 * z**a * math.exp(-z / 2) * special.kummer_m(a, 1 + nu, z)

        elif _is_integer(nu):
            a = (1 + nu) / 2
            b = int(round(1 + nu))

            def scalar(r):
                z = kap * r
                return r**t0 * z**a * math.exp(-z / 2) * special.kummer_u(a, b, z)

        else:
            a = (1 - nu) / 2

            def scalar(r):
                z = kap * r
                return r**t0 * z**a * math.exp(-z / 2) * special.kummer_m(a, 1 - nu, z)

    def u(r):
        r = np.asarray(r, float)
        if np.any(r <= 0):
            raise InvalidParameterError("closed forms are evaluated at r > 0")
        return np.vectorize(scalar, otypes=[float])(r)

    return u


def ode_residual(mode: ModeODE, lam: float, u: Callable, r, rel_step: float = 2e-2):
    """Relative residual of ``u'' + (n-1)/r u' + (lam - (mu - (n-1)(n-2))/r^2) u / 4``.

    Derivatives by 5-point central differences at steps ``h`` and ``h/2``
    (``h = rel_step * r``), Richardson-combined.  The residual is scaled by the
    sum of the magnitudes of the individual terms, floored at ``|u|/r^2`` (the
    size of the Euler part of the operator on ``u``) so that nearly constant
    solutions are not judged against rounding noise.
    """
    r = np.asarray(r, float)
    n, mu = mode.n, mode.mu
    c = (mu - (n - 1) * (n - 2))

    def parts(h):
        f = [u(r + j * h) for j in (-2, -1, 0, 1, 2)]
        d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
        d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
        return d1, d2, f[2]

    h = rel_step * r
    d1a, d2a, u0 = parts(h)
    d1b, d2b, _ = parts(h / 2)
    d1 = (16 * d1b - d1a) / 15
    d2 = (16 * d2b - d2a) / 15
    t1, t2, t3 = d2, (n - 1) / r * d1, 0.25 * (lam - c / r**2) * u0
    scale = np.abs(t1) + np.abs(t2) + 0.25 * abs(lam) * np.abs(u0) + 0.25 * abs(c) / r**2 * np.abs(u0)
    scale = np.maximum(scale, np.abs(u0) / r**2)
    return np.abs(t1 + t2 + t3) / np.where(scale > 0, scale, 1.0)


# ---------------------------------------------------------------------------
# Hardy and semi-boundedness diagnostics


@dataclass(frozen=True)
class HardyReport:
    coefficient: float
    semibounded: bool
    strictly_positive: bool


def hardy_report(mode: ModeODE) -> HardyReport:
    """Compare ``mu - (n-2)`` at the tip with zero (w-form coefficient against -1/4)."""
    coef = mode.tip_mu - (mode.n - 2)
    if abs(coef) <= _CRIT_TOL * max(1.0, abs(mode.tip_mu)):
        coef = 0.0
    return HardyReport(coef, coef >= 0, coef > 0)


def ground_eigenvalue_refinement(
    mode: ModeODE, r_min_factors, M_per_decade: int = 64, inner_bc: str = "friedrichs"
) -> list[tuple[float, float]]:
    """Lowest eigenvalue of the mode operator as the cut-off ``r_min`` shrinks."""
    out = []
    L = mode.profile.L
    for fac in r_min_factors:
        dec = -math.log10(fac)
        M = max(64, int(M_per_decade * (dec + 1)))
        grid = RadialGrid.log_uniform(L, M, L * fac)
        op = discretize(mode, grid, inner_bc)
        out.append((fac, float(op.eigenvalues(1, 1, abs_tol=1e-9)[0])))
    return out


def compute_delta0(cs: CrossSection, n: int) -> float:
    """Half the supremum of admissible ``delta0`` in the linear curvature inequality.

    ``scal_min > (n-1)(n-2) - (4 - d)/4 [(n-1)(n-3) + 1] + d`` gives
    ``d < (scal_min - a) / b`` with ``a = (n-1)(n-2) - K``, ``b = K/4 + 1``,
    ``K = (n-1)(n-3) + 1``; the supremum is also capped at 4 so that the
    gradient weight ``(4 - d)/4`` stays nonnegative.
    """
    rep = check_cone_condition(cs, n)
    if not rep.admissible:
        raise NoAdmissibleDeltaError(f"cone condition fails (margin {rep.margin:.6g})")
    K = (n - 1) * (n - 3) + 1
    a = (n - 1) * (n - 2) - K
    b = K / 4 + 1
    sup = (cs.scal_min - a) / b
    if not sup > 0:
        raise NoAdmissibleDeltaError(f"no positive delta0 (supremum {sup:.6g})")
    return 0.5 * min(sup, 4.0)


def h1_gram(op: ModeOperator, laplace_eig: float) -> tuple[np.ndarray, np.ndarray]:
    """Discrete weighted ``H^1`` Gram matrix in the layout of ``op`` (exact cone).

    For ``u = w r^{-m/2}`` on mode ``i``,
    ``int (|grad u|^2 + u^2/r^2) dvol = int w'^2 + c_G w^2 / r^2 dr`` with
    ``c_G = (m^2 - 2m)/4 + 1 + ell_i``; at a Robin end the regular branch on the
    cut-off tip contributes ``(p^2 + c_G) / (nu r_0) w_0^2``, ``p = (1+nu)/2``.
    Returns ``(diag, offdiag)``.
    """
    mode = op.mode
    if mode is None or not isinstance(mode.profile, ExactCone):
        raise UnsupportedOperation("h1_gram is implemented for exact cones")
    m = mode.m
    cG = (m * m - 2 * m) / 4 + 1 + laplace_eig
    x = op.grid.nodes
    qg = np.zeros_like(x)
    qg[x > 0] = cG / x[x > 0] ** 2
    nu = mode.nu
    sig = 0.0
    if op.inner_bc == "robin":
        p = (1 + nu) / 2
        # assemble_generalized multiplies sigma by coef (=1 here)
        sig = (p * p + cG) / (nu * x[0])
    idx, gd, go, _ = assemble_generalized(x, qg, op.inner_bc, op.outer_bc, sig, 0.0, coef=1.0)
    return gd, go


def delta0_min_eigenvalue(op: ModeOperator, delta0: float, laplace_eig: float) -> tuple[float, int]:
    """Smallest eigenvalue of ``B^{-1/2} (A - delta0 G) B^{-1/2}`` and its Sturm count below -1e-8."""
    gd, go = h1_gram(op, laplace_eig)
    s = 1.0 / np.sqrt(op.mass)
    T = SymTridiag((op.a_diag - delta0 * gd) * s * s, (op.a_off - delta0 * go) * s[:-1] * s[1:])
    lam = float(eigenvalues(T, 1, 1, abs_tol=1e-10)[0])
    return lam, sturm_count(T, -1e-8)
