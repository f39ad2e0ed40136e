"""
Near-tip behaviour of eigenfunctions.

Friedrichs eigenfunctions of a mode with tip parameter ``nu`` behave like
``r^s`` with ``s = -(n - 2)/2 + nu/2``.  The fits below work on a log window
``[30 r_min, 1e-3 L]`` of the discrete profile; the finer checks use a
Richardson combination of the ``M`` and ``2M`` profiles on shared nodes, which
removes the ``O(h^2)`` drift of the discrete exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import special
from .errors import InsufficientResolutionError, InvalidParameterError, UnsupportedOperation
from .geometry import ExactCone, SingularManifold
from .radial_modes import ModeODE, RadialGrid, discretize
from .spectrum import EigenfunctionProfile

MIN_WINDOW_NODES = 20


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    target: float
    window: tuple[float, float]
    nodes: int
    residual: float

    @property
    def error(self) -> float:
        return abs(self.slope - self.target)


def tip_exponent(mfd: SingularManifold, mode: int = 0) -> float:
    """Friedrichs exponent ``s = -(n - 2)/2 + nu/2`` of ``mode`` at the tip."""
    mu, mult = mfd.cross_section.mode(mode)
    nu = ModeODE(mfd.n, mu, mfd.profile, mode, mult).require_nu()
    return -(mfd.n - 2) / 2 + nu / 2


def fit_window(r, L, lo_factor: float = 30.0, hi_frac: float = 1e-3, min_nodes: int = MIN_WINDOW_NODES):
    """Boolean mask of nodes in ``[lo_factor r_min, hi_frac L]``."""
    r = np.asarray(r, float)
    lo, hi = lo_factor * r[0], hi_frac * L
    sel = (r >= lo) & (r <= hi)
    if hi <= lo or sel.sum() < min_nodes:
        raise InsufficientResolutionError(
            f"fit window [{lo:.3g}, {hi:.3g}] holds {int(sel.sum())} nodes; need {min_nodes}"
        )
    return sel


def _loglog_fit(r, y, target):
    x, z = np.log(r), np.log(np.abs(y))
    coef, res, *_ = np.polyfit(x, z, 1, full=True)
    rms = math.sqrt(float(res[0]) / x.size) if len(res) else 0.0
    return SlopeFit(float(coef[0]), float(target), (float(r[0]), float(r[-1])), int(r.size), rms)


def leading_exponent(prof: EigenfunctionProfile, mfd: SingularManifold, window=None) -> SlopeFit:
    """Least-squares slope of ``log|u|`` against ``log r`` near the tip."""
    sel = fit_window(prof.r, mfd.L) if window is None else window
    return _loglog_fit(prof.r[sel], prof.u[sel], tip_exponent(mfd, prof.mode_index))


def log_derivative(r, y):
    """``dy/dr`` from fourth-order differences in the grid index."""
    r = np.asarray(r, float)
    y = np.asarray(y, float)
    dy = _d_index(y)
    dr = _d_index(r)
    return dy / dr


def _d_index(y):
    # 5-point first derivative in the node index, one-sided near the ends
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / 12.0
    for i in (0, 1):
        d[i] = (-25 * y[i] + 48 * y[i + 1] - 36 * y[i + 2] + 16 * y[i + 3] - 3 * y[i + 4]) / 12.0
        j = -1 - i
        d[j] = (25 * y[j] - 48 * y[j - 1] + 36 * y[j - 2] - 16 * y[j - 3] + 3 * y[j - 4]) / 12.0
    return d


def _d2_index(y):
    d = np.empty_like(y)
    d[2:-2] = (-y[:-4] + 16 * y[1:-3] - 30 * y[2:-2] + 16 * y[3:-1] - y[4:]) / 12.0
    for i in (0, 1):
        d[i] = (45 * y[i] - 154 * y[i + 1] + 214 * y[i + 2] - 156 * y[i + 3] + 61 * y[i + 4] - 10 * y[i + 5]) / 12.0
        j = -1 - i
        d[j] = (45 * y[j] - 154 * y[j - 1] + 214 * y[j - 2] - 156 * y[j - 3] + 61 * y[j - 4] - 10 * y[j - 5]) / 12.0
    return d


def radial_derivatives(r, y):
    """First and second ``r``-derivatives of nodal data on a smoothly graded grid."""
    r = np.asarray(r, float)
    y = np.asarray(y, float)
    r1, r2 = _d_index(r), _d2_index(r)
    y1, y2 = _d_index(y), _d2_index(y)
    d1 = y1 / r1
    d2 = (y2 - d1 * r2) / (r1 * r1)
    return d1, d2


def gradient_exponent(prof: EigenfunctionProfile, mfd: SingularManifold, window=None) -> SlopeFit:
    """Slope of ``log|du/dr|``; the target ``s - 1`` presumes a nonzero leading term.

    For ``s = 0`` the constant leading term has zero derivative and the fitted
    slope is that of the first correction instead.
    """
    sel = fit_window(prof.r, mfd.L) if window is None else window
    du = log_derivative(prof.r, prof.u)
    return _loglog_fit(prof.r[sel], du[sel], tip_exponent(mfd, prof.mode_index) - 1)


# ---------------------------------------------------------------------------
# Richardson profile


@dataclass(frozen=True)
class RichardsonProfile:
    """Richardson profile ``(4 u_{2M} - u_M) / 3`` on the ``M`` nodes.

    ``error_estimate`` is its distance to the same combination built from the
    ``2M`` and ``4M`` profiles.
    """

    r: np.ndarray
    u: np.ndarray
    lam: float
    error_estimate: np.ndarray
    mode_index: int


def _mode_profile(mfd, ode, M, k, r_min_factor):
    grid = RadialGrid.for_manifold(mfd, M, r_min_factor)
    op = discretize(ode, grid)
    lam, w = op.eigenpair(k)
    full = op.full_w(w)
    r = grid.nodes
    inner = (r > 0) & (full != 0)
    u = np.zeros_like(full)
    u[inner] = full[inner] / mfd.profile.phi(r[inner]) ** (mfd.m / 2)
    return lam, r, u


def richardson_profile(
    mfd: SingularManifold, mode: int = 0, k: int = 1, M: int = 2048, r_min_factor: float = 1e-6
) -> RichardsonProfile:
    """Richardson-extrapolated ``k``-th eigenfunction of ``mode`` on nested grids."""
    mu, mult = mfd.cross_section.mode(mode)
    ode = ModeODE(mfd.n, mu, mfd.profile, mode, mult)
    (l1, r1, u1), (l2, r2, u2), (l4, r4, u4) = (
        _mode_profile(mfd, ode, Mi, k, r_min_factor) for Mi in (M, 2 * M, 4 * M)
    )
    if not (np.allclose(r2[::2], r1, rtol=1e-13, atol=0) and np.allclose(r4[::4], r1, rtol=1e-13, atol=0)):
        raise InvalidParameterError("grids do not nest; Richardson needs shared nodes")
    ra = (4 * u2[::2] - u1) / 3
    rb = (4 * u4[::4] - u2[::2]) / 3
    return RichardsonProfile(r1, ra, (4 * l2 - l1) / 3, np.abs(ra - rb), mode)


# ---------------------------------------------------------------------------
# expansion consistency (exact cones)


def series_coefficients(lam: float, nu: float, terms: int) -> np.ndarray:
    """Coefficients ``c_j`` of ``u = r^s sum_j c_j r^{2j}`` (``c_0 = 1``) on an exact cone."""
    c = np.empty(terms)
    c[0] = 1.0
    for j in range(1, terms):
        c[j] = c[j - 1] * (-lam / 16.0) / (j * (j + nu / 2))
    return c


@dataclass(frozen=True)
class ExpansionReport:
    depth: int
    leading: SlopeFit
    remainder: SlopeFit | None
    steepening: float
    log_coefficient: float
    passed: bool


def expansion_consistency(
    mfd: SingularManifold,
    depth: int,
    mode: int = 0,
    M: int = 2048,
    r_min_factor: float = 1e-6,
    noise_ratio: float = 100.0,
) -> ExpansionReport:
    """Subtract ``depth`` terms of the tip expansion and refit the slope.

    The remainder after ``d`` terms behaves like ``r^{s + 2d}``; the check
    passes when the slope steepens by at least one per term subtracted.  The
    remainder window keeps nodes where the remainder exceeds ``noise_ratio``
    times the Richardson error estimate and where the series is in its
    asymptotic regime (``|lambda| r^2 / 16 <= 1/4``).  The report also carries
    the fitted coefficient of ``r^s log r`` relative to ``r^s``.
    """
    if not isinstance(mfd.profile, ExactCone):
        raise UnsupportedOperation("expansion consistency needs an exact cone")
    if not (0 <= depth <= 3):
        raise InvalidParameterError("depth must lie in 0..3")
    rp = richardson_profile(mfd, mode, 1, M, r_min_factor)
    mu, mult = mfd.cross_section.mode(mode)
    nu = ModeODE(mfd.n, mu, mfd.profile, mode, mult).require_nu()
    s = -(mfd.n - 2) / 2 + nu / 2
    r, u = rp.r, rp.u
    lead_sel = fit_window(r, mfd.L)
    leading = _loglog_fit(r[lead_sel], u[lead_sel], s)

    # log-term coefficient on the leading window
    rs = r[lead_sel]
    X = np.stack([rs**s, rs**s * np.log(rs), rs ** (s + 2)], axis=1)
    coef = np.linalg.lstsq(X, u[lead_sel], rcond=None)[0]
    log_coef = float(abs(coef[1] / coef[0]))

    if depth == 0:
        return ExpansionReport(0, leading, None, 0.0, log_coef, leading.error <= 1e-2)

    r_hi = min(mfd.L / 10, 2.0 / math.sqrt(max(abs(rp.lam), 1e-300)))
    base = (r >= 30 * r[0]) & (r <= r_hi)
    rb = r[base]
    # amplitude against the convergent series; its scatter joins the noise floor
    c = series_coefficients(rp.lam, nu, 40)
    F = sum(c[j] * rb ** (s + 2 * j) for j in range(40))
    ratio = u[base] / F
    A = float(np.mean(ratio))
    noise = rp.error_estimate[base] + float(np.std(ratio)) * np.abs(F)
    rem = u[base] - A * sum(c[j] * rb ** (s + 2 * j) for j in range(depth))
    keep = np.abs(rem) > noise_ratio * noise
    keep &= np.abs(rem) > 1e4 * np.finfo(float).eps * np.abs(u[base])
    # restrict to the contiguous run ending at the window's outer edge
    if keep.any():
        last_bad = np.nonzero(~keep)[0]
        start = last_bad[-1] + 1 if last_bad.size else 0
        keep[:start] = False
    if keep.sum() < MIN_WINDOW_NODES:
        raise InsufficientResolutionError(
            f"remainder after {depth} terms is resolved on only {int(keep.sum())} nodes"
        )
    remfit = _loglog_fit(rb[keep], rem[keep], s + 2 * depth)
    steep = (remfit.slope - leading.slope) / depth
    return ExpansionReport(depth, leading, remfit, float(steep), log_coef, bool(steep >= 1.0))


# ---------------------------------------------------------------------------
# tail majorant for mode sums


def sphere_harmonic_sup(m: int, mult: int, volume: float) -> float:
    """``sup |psi|`` over an ``L^2``-normalised harmonic block on ``S^m``: ``sqrt(mult / vol)``."""
    return math.sqrt(mult / volume)


def mode_decay_ratio(n: int, mu: float, lam: float, r0: float, c0: float = 1.0, ratio: float = 0.5) -> float:
    """``|u_i(ratio r0)| / |u_i(r0)|`` for the Friedrichs solution on an exact cone."""
    nu = math.sqrt(mu / (c0 * c0) - (n - 2))
    s = -(n - 2) / 2 + nu / 2
    r1 = ratio * r0
    if lam == 0:
        return ratio**s
    if lam > 0:
        k = math.sqrt(lam) / 2
        a, b = special.bessel_j(nu / 2, k * r1), special.bessel_j(nu / 2, k * r0)
        if b == 0:
            return math.inf
        return abs(ratio ** (-(n - 2) / 2) * a / b)
    kap = math.sqrt(-lam) / 2
    f = lambda r: r**s * math.exp(-kap * r) * special.kummer_m((1 + nu) / 2, 1 + nu, 2 * kap * r)
    return abs(f(r1) / f(r0))


@dataclass(frozen=True)
class TailBound:
    truncation: int
    bound: float
    terms_summed: int


def tail_majorant(
    mfd: SingularManifold,
    lam: float,
    r0: float,
    truncation: int,
    trace_norm: float = 1.0,
    ratio: float = 0.5,
    max_terms: int = 100000,
) -> TailBound:
    """Bound on ``sum_{i >= truncation} |u_i(ratio r0)| sup|psi_i|``.

    Each block contributes at most ``trace_norm * sup|psi_i| * rho_i`` where
    ``trace_norm`` bounds ``|u_i(r0)|`` (Parseval on the sphere ``r = r0``) and
    ``rho_i`` is the exact decay ratio of the Friedrichs solution.  Summation
    stops once the terms fall geometrically below ``1e-30`` of the partial sum;
    the remainder is majorised by the last term over ``1 - q``.
    """
    p = mfd.cross_section.params
    if not (p and p[0] == "round_sphere") or not isinstance(mfd.profile, ExactCone):
        raise UnsupportedOperation("tail majorant is implemented for exact cones over round spheres")
    vol = mfd.fiber_volume()
    total = 0.0
    prev = None
    for i in range(truncation, truncation + max_terms):
        mu, mult = mfd.cross_section.mode(i)
        rho = mode_decay_ratio(mfd.n, mu, lam, r0, mfd.profile.c0, ratio)
        term = trace_norm * sphere_harmonic_sup(mfd.m, mult, vol) * rho
        total += term
        if prev is not None and prev > 0:
            q = term / prev
            if q < 0.9 and term <= 1e-30 * max(total, 1e-300):
                total += term * q / (1 - q)
                return TailBound(truncation, total, i - truncation + 1)
        prev = term
    raise InsufficientResolutionError("tail sum did not reach geometric decay")


def required_truncation(mfd: SingularManifold, lam: float, r0: float, tol: float, **kw) -> int:
    """Smallest truncation whose tail majorant is at most ``tol``."""
    k = 0
    while tail_majorant(mfd, lam, r0, k, **kw).bound > tol:
        k += 1
        if k > 10000:
            raise InsufficientResolutionError("no truncation below 10000 meets the tolerance")
    return k
