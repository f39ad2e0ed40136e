"""
Global spectrum of ``-4 Delta + R`` assembled from the radial mode problems.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGroundStateError, InvalidParameterError, NonSemiboundedError
from .geometry import SingularManifold
from .radial_modes import ModeODE, ModeOperator, RadialGrid, discretize
from .tridiag import _EPS, _lu_solve_shifted, eigenvalues, sturm_count


@dataclass(frozen=True)
class SpectrumEntry:
    lam: float
    mode: int
    radial_index: int
    multiplicity: int


@dataclass(frozen=True)
class EigenfunctionProfile:
    """Radial eigenfunction with ``int u^2 phi^m dr = 1`` (``sum B w^2 = 1``).

    ``u`` multiplies the normalised angular factor; for mode 0 on a round
    sphere that factor is ``1/sqrt(vol(N))``, see :meth:`full_u`.
    """

    mode_index: int
    radial_index: int
    lam: float
    r: np.ndarray
    w: np.ndarray
    u: np.ndarray
    fiber_volume: float = 1.0

    def full_u(self) -> np.ndarray:
        return self.u / math.sqrt(self.fiber_volume)


@dataclass
class Spectrum:
    entries: list
    num_modes_used: int
    lambda_max_certified: float
    grid: RadialGrid
    mfd: SingularManifold
    operators: dict = field(default_factory=dict, repr=False)
    nonsemibounded: bool = False
    inner_bc: str = "friedrichs"

    def __len__(self):
        return len(self.entries)

    def values(self, with_multiplicity: bool = False) -> np.ndarray:
        if with_multiplicity:
            return np.array([e.lam for e in self.entries for _ in range(e.multiplicity)])
        return np.array([e.lam for e in self.entries])

    def global_indices(self) -> list[tuple[int, int]]:
        """First and last multiplicity-counted (1-based) index of each entry."""
        out, start = [], 1
        for e in self.entries:
            out.append((start, start + e.multiplicity - 1))
            start += e.multiplicity
        return out

    def operator(self, mode: int) -> ModeOperator:
        if mode not in self.operators:
            mu, mult = self.mfd.cross_section.mode(mode)
            self.operators[mode] = discretize(ModeODE(self.mfd.n, mu, self.mfd.profile, mode, mult), self.grid, self.inner_bc)
        return self.operators[mode]

    def eigenfunction(self, entry: SpectrumEntry) -> EigenfunctionProfile:
        op = self.operator(entry.mode)
        return eigenfunction_from_operator(op, entry.radial_index, self.mfd)

    def to_rows(self):
        return [(f"{e.lam:.12g}", e.mode, e.radial_index, e.multiplicity) for e in self.entries]

    def write_csv(self, path, header_lines=()):
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["lambda", "mode", "radial_index", "multiplicity"])
            wr.writerows(self.to_rows())


def eigenfunction_from_operator(op: ModeOperator, k: int, mfd: SingularManifold) -> EigenfunctionProfile:
    lam, w = op.eigenpair(k)
    r = op.r
    u = w / mfd.profile.phi(r) ** (mfd.m / 2)
    mode = op.mode.mode_index if op.mode is not None else 0
    return EigenfunctionProfile(mode, k, lam, r, w, u, mfd.fiber_volume())


def mode_floor(op: ModeOperator) -> float:
    """Lower bound ``min Q + 4 pi^2 / L^2`` for the spectrum of a mode (nu >= 1 ends)."""
    L = op.mode.profile.L
    return float(np.min(op.q)) + 4 * math.pi**2 / L**2


def assemble(
    mfd: SingularManifold,
    lambda_max: float,
    grid: RadialGrid | None = None,
    M: int = 2048,
    r_min_factor: float = 1e-6,
    inner_bc: str = "friedrichs",
    max_modes: int = 5000,
    abs_tol: float = 1e-12,
) -> Spectrum:
    """Merge per-mode spectra below ``lambda_max``.

    Modes are visited in order of ``mu``.  A mode whose tip parameter satisfies
    ``nu >= 1`` at every conical end has ``Q >= min_grid Q`` with Dirichlet-type
    behaviour at the ends, so its eigenvalues are at least
    ``min Q + 4 pi^2 / L^2``; since ``Q`` grows with ``mu`` the iteration stops
    at the first such mode whose floor exceeds ``lambda_max``.
    """
    if grid is None:
        grid = RadialGrid.for_manifold(mfd, M, r_min_factor)
    entries = []
    ops = {}
    nonsemi = False
    certified = lambda_max
    used = 0
    for i in range(max_modes):
        mu, mult = mfd.cross_section.mode(i)
        if not math.isfinite(mu):
            break
        mode = ModeODE(mfd.n, mu, mfd.profile, i, mult)
        op = discretize(mode, grid, inner_bc)
        ops[i] = op
        used = i + 1
        if op.diagnostic:
            nonsemi = True
        cnt = sturm_count(op.T, lambda_max)
        if cnt:
            for k, lam in enumerate(eigenvalues(op.T, 1, cnt, abs_tol), start=1):
                entries.append(SpectrumEntry(float(lam), i, k, mult))
        regular = (
            not op.diagnostic
            and mode.nu >= 1
            and (op.outer_bc != "robin" or mode.nu_end >= 1)
        )
        if regular and mode_floor(op) > lambda_max:
            break
    else:
        certified = min(certified, _first_floor_bound(ops, lambda_max))
    entries.sort(key=lambda e: (e.lam, e.mode, e.radial_index))
    return Spectrum(entries, used, certified, grid, mfd, ops, nonsemi, inner_bc)


def _first_floor_bound(ops, lambda_max):
    last = ops[max(ops)]
    return min(lambda_max, mode_floor(last))


def rayleigh(mfd: SingularManifold, u, grid: RadialGrid | None = None, mode: int = 0, op: ModeOperator | None = None) -> float:
    """Discrete ``int (4|grad U|^2 + R U^2) / int U^2`` for ``U = u(r) psi_mode``.

    ``u`` is sampled on the unknown nodes of the mode operator.
    """
    if op is None:
        if grid is None:
            grid = RadialGrid.for_manifold(mfd)
        mu, mult = mfd.cross_section.mode(mode)
        op = discretize(ModeODE(mfd.n, mu, mfd.profile, mode, mult), grid)
    u = np.asarray(u, float)
    if u.shape != op.r.shape:
        raise InvalidParameterError(f"u must be sampled on {op.r.size} nodes, got {u.shape}")
    w = u * mfd.profile.phi(op.r) ** (mfd.m / 2)
    den = float(np.sum(op.mass * w * w))
    if den == 0.0:
        raise InvalidParameterError("zero function has no Rayleigh quotient")
    return float(w @ op.matvec_A(w)) / den


@dataclass(frozen=True)
class CourantRow:
    first_index: int
    last_index: int
    lam: float
    mode: int
    radial_index: int
    radial_domains: int
    nodal_domains: int
    passed: bool


def _angular_domains(mfd: SingularManifold, mode: int) -> int:
    p = mfd.cross_section.params
    if p and p[0] == "round_sphere":
        # mode k carries the degree-k harmonics
        return mode + 1
    return 1


def count_sign_changes(v, rel_floor: float = 1e-10) -> int:
    v = np.asarray(v, float)
    keep = np.abs(v) > rel_floor * np.max(np.abs(v))
    s = np.sign(v[keep])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def courant_radial_check(spec: Spectrum, count: int = 20) -> list[CourantRow]:
    """Nodal-domain counts of the first ``count`` (multiplicity-counted) eigenfunctions.

    Each entry is represented by ``u(r) Y(theta)`` with ``Y`` a zonal harmonic
    on round-sphere links (``k + 1`` nodal domains for degree ``k``) and a single
    angular domain otherwise.  The Courant bound is checked against the first
    global index of the eigenvalue.
    """
    rows = []
    for e, (first, last) in zip(spec.entries, spec.global_indices()):
        if first > count:
            break
        prof = spec.eigenfunction(e)
        rad = count_sign_changes(prof.w) + 1
        nod = rad * _angular_domains(spec.mfd, e.mode)
        rows.append(CourantRow(first, last, e.lam, e.mode, e.radial_index, rad, nod, nod <= first))
    return rows


@dataclass(frozen=True)
class GroundState:
    lam: float
    profile: EigenfunctionProfile
    simple: bool
    gap: float


def ground_state(mfd: SingularManifold, grid: RadialGrid | None = None, abs_tol: float = 1e-12, inner_bc: str = "friedrichs") -> GroundState:
    """Lowest eigenvalue (mode 0, radial index 1), its profile and simplicity."""
    if grid is None:
        grid = RadialGrid.for_manifold(mfd)
    mu0, mult0 = mfd.cross_section.mode(0)
    op0 = discretize(ModeODE(mfd.n, mu0, mfd.profile, 0, mult0), grid, inner_bc)
    if op0.diagnostic:
        raise NonSemiboundedError("mode 0 is subcritical; the operator is not semibounded")
    prof = eigenfunction_from_operator(op0, 1, mfd)
    lam2_0 = float(eigenvalues(op0.T, 2, 2, abs_tol)[0])
    mu1, mult1 = mfd.cross_section.mode(1)
    nxt = lam2_0
    if math.isfinite(mu1):
        op1 = discretize(ModeODE(mfd.n, mu1, mfd.profile, 1, mult1), grid, inner_bc)
        nxt = min(nxt, float(eigenvalues(op1.T, 1, 1, abs_tol)[0]))
    gap = nxt - prof.lam
    simple = bool(gap > abs_tol and mult0 == 1)
    return GroundState(prof.lam, prof, simple, gap)


def require_simple_ground(gs: GroundState):
    if not gs.simple:
        raise DegenerateGroundStateError(f"ground eigenvalue not simple (gap {gs.gap:.3e})")


def projected_minimum(op: ModeOperator, deflate: np.ndarray, iters: int = 400, tol: float = 1e-14) -> float:
    """Minimum of the Rayleigh quotient orthogonal (in ``B``) to the columns of ``deflate``.

    Projected inverse iteration on ``T = B^{-1/2} A B^{-1/2}`` shifted below its
    spectrum; ``deflate`` holds ``w``-vectors (``B``-orthonormal).
    """
    T = op.T
    sq = np.sqrt(op.mass)
    V = deflate * sq[:, None] if deflate.size else np.zeros((op.size, 0))
    lam1 = float(eigenvalues(T, 1, 1)[0])
    sigma = lam1 - max(1.0, abs(lam1))
    rng = np.random.default_rng(7)
    x = rng.uniform(0.5, 1.5, op.size)

    def proj(y):
        if V.shape[1]:
            y = y - V @ (V.T @ y)
            y = y - V @ (V.T @ y)
        return y

    x = proj(x)
    x /= np.linalg.norm(x)
    prev = np.inf
    for _ in range(iters):
        y, _s = _lu_solve_shifted(T.diag, T.offdiag, sigma, x, _EPS, _EPS * T.norm())
        y = proj(y)
        x = y / np.linalg.norm(y)
        rq = float(x @ T.matvec(x))
        if abs(rq - prev) <= tol * abs(rq):
            break
        prev = rq
    return rq


def minmax_check(spec: Spectrum, count: int = 5) -> list[tuple[int, float, float]]:
    """For ``i <= count`` compare ``lambda_i`` with the minimum of the Rayleigh
    quotient over the discrete space orthogonal to the first ``i - 1`` computed
    eigenvectors.  Returns ``(i, lambda_i, minimum)`` rows.
    """
    flat = [(e, j) for e in spec.entries for j in range(e.multiplicity)]
    rows = []
    vec_cache: dict = {}

    def vecs(mode, k):
        key = (mode, k)
        if key not in vec_cache:
            op = spec.operator(mode)
            vec_cache[key] = op.eigenpair(k)[1]
        return vec_cache[key]

    modes = sorted({e.mode for e, _ in flat[: count + 1]} | {0})
    for i in range(1, min(count, len(flat)) + 1):
        used = flat[: i - 1]
        best = math.inf
        for j in modes:
            # copies of a degenerate level live in orthogonal angular components;
            # a radial vector is exhausted only when all its copies are used
            copies = {}
            for e, _c in used:
                if e.mode == j:
                    copies[e.radial_index] = copies.get(e.radial_index, 0) + 1
            mult = spec.mfd.cross_section.multiplicity(j)
            full = sorted(k for k, c in copies.items() if c == mult)
            op = spec.operator(j)
            D = np.column_stack([vecs(j, k) for k in full]) if full else np.zeros((op.size, 0))
            best = min(best, projected_minimum(op, D))
        rows.append((i, flat[i - 1][0].lam, best))
    return rows


def weyl_constant(spec: Spectrum) -> float:
    """Largest ``c`` with ``lambda_k >= c k^{2/n}`` over the computed range (positive part)."""
    vals = spec.values(with_multiplicity=True)
    k = np.arange(1, vals.size + 1)
    return float(np.min(vals / k ** (2.0 / spec.mfd.n)))
