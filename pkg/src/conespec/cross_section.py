"""
Cross-section data: the spectrum of ``-4 Delta_h0 + R_h0`` on the link ``N``.

Round spheres are handled analytically.  Explicit cross-sections are given as a
finite list of ``(mu, multiplicity)`` pairs; indices beyond that list return
``mu = inf`` so that spectrum truncation treats them as never contributing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .errors import InvalidParameterError, SubcriticalModeError

# tolerance for treating mu - (n-2) as zero
_CRIT_TOL = 1e-12


@dataclass(frozen=True)
class ConditionReport:
    admissible: bool
    margin: float


@dataclass(frozen=True)
class CrossSection:
    """Spectral description of the cross-section ``(N, h0)``.

    Parameters
    ----------
    fiber_dim : int
        Dimension ``m = n - 1`` of ``N``.
    scal_min : float
        Minimum of the scalar curvature of ``h0``.
    mode_fn : callable
        ``i -> (mu_i, multiplicity_i)``; must be nondecreasing in ``mu``.
    label : str
    einstein_const : float or None
        ``kappa`` with ``Ric_h0 = (m-1) kappa h0`` when ``h0`` is Einstein.
    """

    fiber_dim: int
    scal_min: float
    mode_fn: Callable[[int], tuple[float, int]] = field(repr=False, compare=False)
    label: str = ""
    einstein_const: float | None = None
    params: tuple = ()

    def mode(self, i: int) -> tuple[float, int]:
        if i < 0:
            raise InvalidParameterError(f"mode index must be >= 0, got {i}")
        return self.mode_fn(int(i))

    def mu(self, i: int) -> float:
        return self.mode(i)[0]

    def multiplicity(self, i: int) -> int:
        return self.mode(i)[1]

    def modes(self, count: int) -> list[tuple[float, int]]:
        return [self.mode(i) for i in range(count)]

    def laplace_eigenvalue(self, i: int) -> float:
        """Eigenvalue of ``-Delta_h0`` carried by mode ``i`` (constant scalar curvature)."""
        return (self.mu(i) - self.scal_min) / 4.0

    def scaled(self, c: float) -> "CrossSection":
        """Cross-section for the metric ``c^2 h0``; eigenvalues scale by ``1/c^2``."""
        if not c > 0:
            raise InvalidParameterError(f"scale must be positive, got {c}")
        if c == 1.0:
            return self
        base = self.mode_fn
        c2 = c * c

        def fn(i):
            mu, mult = base(i)
            return mu / c2, mult

        kappa = None if self.einstein_const is None else self.einstein_const / c2
        return CrossSection(
            self.fiber_dim, self.scal_min / c2, fn, f"{self.label}*{c:g}", kappa, self.params
        )

    @property
    def is_einstein(self) -> bool:
        return self.einstein_const is not None

    @classmethod
    def from_dict(cls, data: dict) -> "CrossSection":
        kind = data.get("kind", "explicit")
        if kind == "round_sphere":
            return round_sphere(int(data["m"]), float(data.get("radius", 1.0)))
        try:
            m = int(data["fiber_dim"])
            scal = float(data["scal_min"])
            raw = data["modes"]
        except KeyError as exc:
            raise InvalidParameterError(f"explicit cross-section missing field {exc}") from None
        return explicit(
            m,
            [(float(d["mu"]), int(d["multiplicity"])) for d in raw],
            scal,
            label=data.get("label", "explicit"),
            einstein_const=data.get("einstein_const"),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "CrossSection":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _sphere_mult(m: int, k: int) -> int:
    # dimension of degree-k harmonic polynomials on R^{m+1}
    if k == 0:
        return 1
    return math.comb(k + m, m) - math.comb(k + m - 2, m)


def round_sphere(m: int, c: float = 1.0) -> CrossSection:
    """Round sphere ``S^m`` of radius ``c``.

    ``mu_k = [4 k (k + m - 1) + m (m - 1)] / c^2`` with the spherical-harmonic
    multiplicities.
    """
    if int(m) != m or m < 2:
        raise InvalidParameterError(f"sphere dimension must be an integer >= 2, got {m}")
    if not (c > 0 and math.isfinite(c)):
        raise InvalidParameterError(f"radius must be positive and finite, got {c}")
    m = int(m)
    c2 = float(c) * float(c)

    def fn(k):
        return (4.0 * k * (k + m - 1) + m * (m - 1)) / c2, _sphere_mult(m, k)

    return CrossSection(m, m * (m - 1) / c2, fn, f"S^{m}({c:g})", 1.0 / c2, ("round_sphere", m, c))


def explicit(
    m: int,
    modes: list[tuple[float, int]],
    scal_min: float,
    label: str = "explicit",
    einstein_const: float | None = None,
) -> CrossSection:
    if int(m) != m or m < 2:
        raise InvalidParameterError(f"fiber_dim must be an integer >= 2, got {m}")
    if not modes:
        raise InvalidParameterError("explicit cross-section needs at least one mode")
    mus = [float(mu) for mu, _ in modes]
    mults = [int(k) for _, k in modes]
    if any(b < a for a, b in zip(mus, mus[1:])):
        raise InvalidParameterError("mode eigenvalues must be nondecreasing")
    if any(k < 1 for k in mults):
        raise InvalidParameterError("multiplicities must be >= 1")
    if mus[0] < scal_min - 1e-12 * max(1.0, abs(scal_min)):
        raise InvalidParameterError("mu_0 must be >= scal_min")
    data = tuple(zip(mus, mults))

    def fn(i):
        if i < len(data):
            return data[i]
        return math.inf, 1

    return CrossSection(int(m), float(scal_min), fn, label, einstein_const, ("explicit", data))


def check_cone_condition(cs: CrossSection, n: int) -> ConditionReport:
    """Admissibility ``scal_min > n - 2`` and ``mu_0 > n - 2``."""
    if n != cs.fiber_dim + 1:
        raise InvalidParameterError(f"n = {n} does not match fiber_dim + 1 = {cs.fiber_dim + 1}")
    if n < 3:
        raise InvalidParameterError("n must be >= 3")
    margin = min(cs.scal_min, cs.mu(0)) - (n - 2)
    if abs(margin) <= _CRIT_TOL * max(1.0, n):
        margin = 0.0
    return ConditionReport(margin > 0, margin)


def nu(cs: CrossSection, i: int, n: int) -> float:
    """Indicial parameter ``nu_i = sqrt(mu_i - (n - 2))``."""
    mu = cs.mu(i)
    d = mu - (n - 2)
    if d <= _CRIT_TOL * max(1.0, abs(mu)):
        raise SubcriticalModeError(0.0 if abs(d) <= _CRIT_TOL * max(1.0, abs(mu)) else d, i)
    return math.sqrt(d)
