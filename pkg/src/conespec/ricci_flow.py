"""
Rotationally symmetric Ricci flow ``g = u(x)^2 dx^2 + phi(x)^2 h`` over round ``S^m``.

With ``d/ds = u^{-1} d/dx`` the flow ``dg/dt = -2 Ric`` reads

    phi_t = phi_ss - (m - 1)(1 - phi_s^2) / phi,    (log u)_t = m phi_ss / phi.

Time stepping is explicit Euler on a fixed uniform ``x`` grid.  The conical tip
is pinned: ``phi = 0`` at node 0, ``phi = c s`` at node 1, and ``u`` on both
copies node 2.  Closed (spindle) states mirror this at the far end; Dirichlet
states hold the outermost node fixed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .cross_section import round_sphere
from .errors import ConeSpecError, FlowBreakdown, InvalidParameterError
from .geometry import CustomProfile, Profile, SingularManifold
from .radial_modes import RadialGrid
from .spectrum import ground_state

CFL = 0.4
TIP_TOL = 1e-3


@dataclass(frozen=True)
class FlowState:
    """Snapshot of the flow on the fixed grid ``x``.

    ``closure`` is ``"spindle"`` (pinned tips at both ends) or ``"dirichlet"``
    (outermost node held fixed).  ``monitor_node`` is where the tip ratio
    ``phi / s`` is held to within ``tip_tol`` of ``c``.
    """

    x: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    t: float
    m: int
    c: float
    closure: str = "spindle"
    monitor_node: int = 1
    tip_tol: float = TIP_TOL

    def __post_init__(self):
        if self.closure not in ("spindle", "dirichlet"):
            raise InvalidParameterError(f"closure must be 'spindle' or 'dirichlet', got {self.closure!r}")
        if self.x.size < 8:
            raise InvalidParameterError("flow grid needs at least 8 nodes")
        if not np.allclose(np.diff(self.x), self.x[1] - self.x[0], rtol=1e-10, atol=0):
            raise InvalidParameterError("flow grid must be uniform")
        if int(self.m) != self.m or self.m < 2:
            raise InvalidParameterError("fiber dimension must be an integer >= 2")
        if not (self.c > 0 and self.c * self.c < self.m):
            raise InvalidParameterError(f"tip slope c = {self.c} violates 0 < c^2 < m")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def arclength(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(0.5 * (self.u[1:] + self.u[:-1]) * self.dx)])

    def tip_ratio(self, node: int) -> float:
        s = self.arclength()
        return float(self.phi[node] / s[node])

    def min_ds(self) -> float:
        return float(np.min(0.5 * (self.u[1:] + self.u[:-1])) * self.dx)

    def stable_dt(self) -> float:
        return CFL * self.min_ds() ** 2 / 2

    def min_phi(self) -> float:
        return float(np.min(self.phi[1:-1] if self.closure == "spindle" else self.phi[1:]))

    # constructors -------------------------------------------------------------

    @classmethod
    def from_profile(cls, profile: Profile, m: int, nodes: int, closure: str = "spindle", **kw) -> "FlowState":
        """Initial data ``u = 1`` and ``phi = profile(x)`` on ``nodes`` points of ``[0, L]``."""
        L = profile.L
        x = np.linspace(0.0, L, nodes)
        phi = np.zeros(nodes)
        inner = slice(1, nodes - 1) if closure == "spindle" else slice(1, nodes)
        phi[inner] = profile.phi(x[inner])
        st = cls(x, np.ones(nodes), phi, 0.0, m, profile.c0, closure, **kw)
        return _pin(st)

    @classmethod
    def spindle(cls, m: int, c: float, nodes: int, L: float = math.pi, **kw) -> "FlowState":
        """``phi = c L sin(pi x / L) / pi`` (tip slope ``c`` at both ends)."""
        x = np.linspace(0.0, L, nodes)
        phi = c * L / math.pi * np.sin(math.pi * x / L)
        phi[0] = phi[-1] = 0.0
        return _pin(cls(x, np.ones(nodes), phi, 0.0, m, c, "spindle", **kw))

    @classmethod
    def flat_cone(cls, m: int, nodes: int, L: float = 1.0, **kw) -> "FlowState":
        x = np.linspace(0.0, L, nodes)
        return _pin(cls(x, np.ones(nodes), x.copy(), 0.0, m, 1.0, "dirichlet", **kw))


def _pin(st: FlowState) -> FlowState:
    u = st.u.copy()
    phi = st.phi.copy()
    dx = st.dx
    u[0] = u[1] = u[2]
    phi[0] = 0.0
    phi[1] = st.c * 0.5 * (u[0] + u[1]) * dx
    if st.closure == "spindle":
        u[-1] = u[-2] = u[-3]
        phi[-1] = 0.0
        phi[-2] = st.c * 0.5 * (u[-1] + u[-2]) * dx
    return replace(st, u=u, phi=phi)


def velocities(st: FlowState) -> tuple[np.ndarray, np.ndarray]:
    """``(phi_t, (log u)_t)`` on all nodes; pinned and fixed nodes get zero."""
    u, phi, dx, m = st.u, st.phi, st.dx, st.m
    um = 0.5 * (u[1:] + u[:-1])
    ps = (phi[1:] - phi[:-1]) / (um * dx)          # phi_s at cell midpoints
    pss = (ps[1:] - ps[:-1]) / (u[1:-1] * dx)
    psn = 0.5 * (ps[1:] + ps[:-1])
    dphi = np.zeros_like(phi)
    dlu = np.zeros_like(phi)
    dphi[1:-1] = pss - (m - 1) * (1 - psn * psn) / phi[1:-1]
    dlu[1:-1] = m * pss / phi[1:-1]
    dphi[:2] = 0.0
    dlu[:3] = 0.0
    if st.closure == "spindle":
        dphi[-2:] = 0.0
        dlu[-3:] = 0.0
    else:
        dphi[-1] = 0.0
        dlu[-1] = 0.0
    return dphi, dlu


def step(st: FlowState, dt: float, direction: float = 1.0) -> FlowState:
    """One explicit Euler step of ``dg/dt = -2 direction Ric``."""
    if not dt > 0:
        raise InvalidParameterError("dt must be positive")
    lim = st.stable_dt()
    if dt > lim * (1 + 1e-12):
        raise InvalidParameterError(f"dt = {dt:.3e} exceeds the stability bound {lim:.3e}")
    dphi, dlu = velocities(st)
    phi = st.phi + direction * dt * dphi
    u = st.u * np.exp(direction * dt * dlu)
    new = _pin(replace(st, u=u, phi=phi, t=st.t + dt))
    _check(new)
    return new


def _check(st: FlowState):
    interior = st.phi[1:-1] if st.closure == "spindle" else st.phi[1:]
    bad_phi = not np.all(np.isfinite(interior)) or np.any(interior <= 0)
    bad_u = not np.all(np.isfinite(st.u)) or np.any(st.u <= 0)
    ratio = st.tip_ratio(st.monitor_node)
    diag = {
        "t": st.t,
        "min_phi": float(np.min(interior)) if interior.size else math.nan,
        "min_u": float(np.min(st.u)),
        "tip_ratio": ratio,
        "monitor_node": st.monitor_node,
    }
    if bad_phi or bad_u:
        raise FlowBreakdown("positivity lost", diag)
    if abs(ratio - st.c) > st.tip_tol:
        raise FlowBreakdown(f"tip ratio drifted to {ratio:.6g} (c = {st.c:g})", diag)


def evolve(st: FlowState, T: float, dt: float, direction: float = 1.0) -> FlowState:
    n = int(round(T / dt))
    for _ in range(n):
        st = step(st, dt, direction)
    return st


# ---------------------------------------------------------------------------
# geometry of a snapshot


def state_profile(st: FlowState) -> Profile:
    """Warping function in arclength: cubic spline outside the pinned nodes, ``c s`` inside."""
    s = st.arclength()
    L = float(s[-1])
    c = st.c
    if st.closure == "spindle":
        a, b = s[1], s[-2]
        spl = CubicSpline(s[1:-1], st.phi[1:-1], bc_type=((1, c), (1, -c)))
    else:
        a, b = s[1], L
        spl = CubicSpline(s[1:], st.phi[1:], bc_type=((1, c), "not-a-knot"))

    def ev(r, d):
        r = np.asarray(r, float)
        out = spl(np.clip(r, a, b), d)
        lin = (c * r, np.full_like(r, c), np.zeros_like(r))[d]
        out = np.where(r < a, lin, out)
        if st.closure == "spindle":
            lin_end = (c * (L - r), np.full_like(r, -c), np.zeros_like(r))[d]
            out = np.where(r > b, lin_end, out)
        return out

    return CustomProfile(
        lambda r: ev(r, 0),
        lambda r: ev(r, 1),
        lambda r: ev(r, 2),
        L,
        c0=c,
        end_slope=c if st.closure == "spindle" else None,
        label=f"flow@{st.t:g}",
    )


def state_manifold(st: FlowState) -> SingularManifold:
    outer = "conical" if st.closure == "spindle" else "dirichlet"
    return SingularManifold(st.m + 1, round_sphere(st.m), state_profile(st), outer)


@dataclass(frozen=True)
class CurvatureResidual:
    l2: float
    sup: float


def curvature_residual(st: FlowState, profile: Profile) -> CurvatureResidual:
    """``dg/dt + 2 Ric`` for ``u = 1`` data, in coordinate components.

    Components are the ``dx^2`` coefficient and the ``h`` coefficient
    (``2 phi phi_t + 2 ric_fiber_coeff``).  Nodes next to the pinned ring are
    skipped since the pin alters their second differences.  ``l2`` is the grid
    norm ``sqrt(sum res^2 dx)`` of the larger component; ``sup`` its maximum.
    ``profile`` must be the exact warping function of the snapshot.
    """
    if not np.allclose(st.u, 1.0):
        raise InvalidParameterError("curvature residual needs u = 1 initial data")
    from .geometry import ricci_warped

    mfd = SingularManifold(st.m + 1, round_sphere(st.m), profile,
                           "conical" if profile.end_slope is not None else "dirichlet")
    dphi, dlu = velocities(st)
    sl = slice(3, -3) if st.closure == "spindle" else slice(3, -1)
    r = st.x[sl]
    ric_rr, fib = ricci_warped(mfd, r)
    rr = 2 * dlu[sl] + 2 * ric_rr
    ff = 2 * st.phi[sl] * dphi[sl] + 2 * fib
    l2 = max(math.sqrt(float(np.sum(rr * rr)) * st.dx), math.sqrt(float(np.sum(ff * ff)) * st.dx))
    sup = float(max(np.max(np.abs(rr)), np.max(np.abs(ff))))
    return CurvatureResidual(l2, sup)


# ---------------------------------------------------------------------------
# lambda along the flow


@dataclass(frozen=True)
class FlowSample:
    t: float
    lam: float
    err: float
    min_phi: float
    tip_ratio: float
    note: str = ""


@dataclass
class FlowSeries:
    samples: list[FlowSample] = field(default_factory=list)
    direction: float = 1.0
    final: FlowState | None = None

    def violations(self) -> list[int]:
        """Indices ``k`` where the monotonicity test fails between ``k`` and ``k + 1``.

        Forward flows need ``lam[k+1] >= lam[k] - err[k]``; reversed flows the
        mirror inequality.
        """
        out = []
        ok = [s for s in self.samples if math.isfinite(s.lam)]
        for k in range(len(ok) - 1):
            a, b = ok[k], ok[k + 1]
            err = max(a.err, b.err)
            if self.direction > 0 and b.lam < a.lam - err:
                out.append(k)
            if self.direction < 0 and b.lam > a.lam + err:
                out.append(k)
        return out

    def write_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "lambda", "err", "min_phi", "tip_ratio"])
            for s in self.samples:
                w.writerow([f"{s.t:.10g}", f"{s.lam:.15g}", f"{s.err:.6g}", f"{s.min_phi:.15g}", f"{s.tip_ratio:.15g}"])


def sample_lambda(st: FlowState, M: int = 2048, r_min_factor: float = 1e-6, abs_tol: float = 1e-12) -> tuple[float, float]:
    """``lambda`` of a snapshot and the error bar ``|lam_M - lam_{M/2}| + 2 abs_tol``."""
    mfd = state_manifold(st)
    lam = ground_state(mfd, RadialGrid.for_manifold(mfd, M, r_min_factor), abs_tol).lam
    lam_c = ground_state(mfd, RadialGrid.for_manifold(mfd, M // 2, r_min_factor), abs_tol).lam
    return lam, abs(lam - lam_c) + 2 * abs_tol


def run_with_lambda(
    st: FlowState,
    T: float,
    dt: float,
    sample_every: int,
    direction: float = 1.0,
    M: int = 2048,
    r_min_factor: float = 1e-6,
    report_node: int = 2,
) -> FlowSeries:
    """Evolve to ``T`` and sample ``lambda`` every ``sample_every`` steps.

    The ``tip_ratio`` column is ``phi / s`` at ``report_node`` (the first free
    node by default).  A failed eigen-solve is recorded as ``nan`` with a note;
    flow breakdown propagates.
    """
    if sample_every < 1:
        raise InvalidParameterError("sample_every must be >= 1")
    n = int(round(T / dt))
    series = FlowSeries(direction=direction)

    def record(state):
        try:
            lam, err = sample_lambda(state, M, r_min_factor)
            note = ""
        except (ConeSpecError, ValueError, ArithmeticError) as exc:
            lam, err, note = math.nan, math.nan, f"{type(exc).__name__}: {exc}"
        series.samples.append(FlowSample(state.t, lam, err, state.min_phi(), state.tip_ratio(report_node), note))

    record(st)
    for k in range(1, n + 1):
        st = step(st, dt, direction)
        if k % sample_every == 0 or k == n:
            record(st)
    series.final = st
    return series
