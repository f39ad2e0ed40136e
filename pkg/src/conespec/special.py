"""
Special functions for the closed-form radial solutions.

Real arguments only.  Evaluation strategy:

* ``bessel_j``: ascending power series when ``x <= 2`` or ``x**2/4 <= alpha + 1``
  (the first term dominates, so no cancellation); otherwise Miller's backward
  recurrence on the lattice ``alpha - floor(alpha) + k``, normalised by the
  Neumann-type identity ``(x/2)**nu0 = sum_k c_k J_{nu0+2k}(x)``.
* ``bessel_y``: for non-integer order the J-based reflection formula, with
  ``J_{-alpha}`` obtained by downward recurrence (the dominant direction for
  negative orders).  For integer order the Neumann series for ``Y_0`` and its
  derivative for ``Y_1``, then upward recurrence.  Orders close to an integer
  are interpolated in the order, which avoids the cancellation of the
  reflection formula.
* ``bessel_j_zero``: a sign-change scan from ``x = alpha`` certifies the index,
  the root is then polished by Newton steps safeguarded by bisection, starting
  from McMahon's expansion when it falls inside the bracket.
* ``digamma`` / ``ln_gamma``: upward shift to ``x >= 10`` followed by the
  asymptotic (Bernoulli) series.
* ``kummer_m``: direct series with compensated summation.
* ``kummer_u``: logarithmic form for integer ``b`` when ``z < 3``, generalized
  Gauss-Laguerre quadrature of the integral representation otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_genlaguerre

from .errors import InvalidParameterError, NumericalFailure, PoleError, UnsupportedOperation

EULER_GAMMA = 0.57721566490153286060651209
_LN2 = math.log(2.0)

# B_{2k} for k = 1..10
_BERNOULLI = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
)


@dataclass(frozen=True)
class SeriesAccuracy:
    """Stopping rule for the power series in this module."""

    rel_tol: float = 1e-16
    max_terms: int = 20000

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-6):
            raise InvalidParameterError(f"rel_tol must lie in (0, 1e-6], got {self.rel_tol}")
        if self.max_terms < 50:
            raise InvalidParameterError(f"max_terms must be >= 50, got {self.max_terms}")


DEFAULT_ACCURACY = SeriesAccuracy()


class _Kahan:
    __slots__ = ("s", "c")

    def __init__(self, s=0.0):
        self.s = s
        self.c = 0.0

    def add(self, x):
        y = x - self.c
        t = self.s + y
        self.c = (t - self.s) - y
        self.s = t


def pochhammer(x: float, k: int) -> float:
    """Rising factorial ``(x)_k = x (x+1) ... (x+k-1)``, with ``(x)_0 = 1``."""
    if k < 0:
        raise InvalidParameterError("k must be nonnegative")
    p = 1.0
    for j in range(k):
        p *= x + j
    return p


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0:
        raise InvalidParameterError(f"ln_gamma requires x > 0, got {x}")
    shift = 0.0
    while x < 10.0:
        shift += math.log(x)
        x += 1.0
    z = 1.0 / (x * x)
    s = 0.0
    zk = 1.0 / x
    for k, b in enumerate(_BERNOULLI, start=1):
        s += b / (2 * k * (2 * k - 1)) * zk
        zk *= z
    return (x - 0.5) * math.log(x) - x + 0.5 * math.log(2 * math.pi) + s - shift


def digamma(x: float) -> float:
    """Logarithmic derivative of the gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0:
        raise InvalidParameterError(f"digamma requires x > 0, got {x}")
    shift = 0.0
    while x < 10.0:
        shift += 1.0 / x
        x += 1.0
    z = 1.0 / (x * x)
    s = 0.0
    zk = z
    for k, b in enumerate(_BERNOULLI, start=1):
        s += b / (2 * k) * zk
        zk *= z
    return math.log(x) - 0.5 / x - s - shift


def rgamma(x: float) -> float:
    """``1/Gamma(x)``, equal to 0 at the poles x = 0, -1, -2, ..."""
    if x <= 0 and x == math.floor(x):
        return 0.0
    return 1.0 / math.gamma(x)


# ---------------------------------------------------------------------------
# Bessel functions


def _check_order_arg(alpha, x):
    if not (alpha >= 0):
        raise InvalidParameterError(f"order must be >= 0, got {alpha}")
    if not (x >= 0):
        raise InvalidParameterError(f"argument must be >= 0, got {x}")


def _j_series(alpha: float, x: float) -> float:
    q = -0.25 * x * x
    term = 1.0
    acc = _Kahan(1.0)
    k = 0
    while True:
        k += 1
        term *= q / (k * (alpha + k))
        acc.add(term)
        if abs(term) <= 1e-17 * abs(acc.s) and k > 2:
            break
        if k > 500:  # pragma: no cover - series converges long before
            raise NumericalFailure("Bessel series did not converge")
    lead = math.exp(alpha * (math.log(x) - _LN2) - ln_gamma(alpha + 1.0)) if alpha > 0 else 1.0
    return lead * acc.s


def _j_lattice(nu0: float, x: float, kmax: int) -> list[float]:
    """J_{nu0+k}(x) for k = 0..kmax by Miller's algorithm (x > 0, 0 <= nu0 < 1)."""
    big = max(x, nu0 + kmax)
    N = int(big + 30 + 2.5 * math.sqrt(big) * 3)
    N += N % 2
    vals = [0.0] * (N + 2)
    vals[N + 1] = 0.0
    vals[N] = 1e-300
    for j in range(N, 0, -1):
        v = nu0 + j
        vals[j - 1] = (2.0 * v / x) * vals[j] - vals[j + 1]
        if abs(vals[j - 1]) > 1e250:
            for i in range(j - 1, N + 2):
                vals[i] *= 1e-250
    # normalisation: (x/2)^nu0 = sum_k c_k J_{nu0+2k}
    g0 = math.gamma(nu0 + 1.0)
    acc = _Kahan(g0 * vals[0])
    for k in range(1, N // 2 + 1):
        ck = (nu0 + 2 * k) * g0 * _poch_over_fact(nu0, k)
        acc.add(ck * vals[2 * k])
    scale = (0.5 * x) ** nu0 / acc.s
    return [v * scale for v in vals[: kmax + 1]]


def _poch_over_fact(nu0: float, k: int) -> float:
    # (nu0+1)_{k-1} / k!  computed stably via logs
    if nu0 == 0.0:
        return 1.0 / k
    return math.exp(ln_gamma(nu0 + k) - ln_gamma(nu0 + 1.0) - ln_gamma(k + 1.0))


def bessel_j(alpha: float, x: float) -> float:
    """Bessel function of the first kind ``J_alpha(x)`` for real ``alpha, x >= 0``."""
    alpha = float(alpha)
    x = float(x)
    _check_order_arg(alpha, x)
    if x == 0.0:
        return 1.0 if alpha == 0.0 else 0.0
    if x <= 2.0 or 0.25 * x * x <= alpha + 1.0:
        return _j_series(alpha, x)
    n = int(math.floor(alpha))
    nu0 = alpha - n
    return _j_lattice(nu0, x, n)[n]


def bessel_j_prime(alpha: float, x: float) -> float:
    """Derivative ``J_alpha'(x) = (alpha/x) J_alpha(x) - J_{alpha+1}(x)``."""
    if x == 0.0:
        if alpha == 1.0:
            return 0.5
        if alpha == 0.0 or alpha > 1.0:
            return 0.0
        return math.inf
    return alpha / x * bessel_j(alpha, x) - bessel_j(alpha + 1.0, x)


def _y_integer(n: int, x: float) -> float:
    K = int(x + 40 + 3 * math.sqrt(x))
    J = _j_lattice(0.0, x, 2 * K + 2)
    lg = math.log(0.5 * x) + EULER_GAMMA
    s = _Kahan()
    ds = _Kahan()
    for k in range(1, K + 1):
        sgn = -1.0 if k % 2 else 1.0
        s.add(sgn * J[2 * k] / k)
        # d/dx J_{2k} = (J_{2k-1} - J_{2k+1}) / 2
        ds.add(sgn * 0.5 * (J[2 * k - 1] - J[2 * k + 1]) / k)
    y0 = 2.0 / math.pi * lg * J[0] - 4.0 / math.pi * s.s
    dy0 = 2.0 / math.pi * (J[0] / x - lg * J[1]) - 4.0 / math.pi * ds.s
    y1 = -dy0
    if n == 0:
        return y0
    ym, y = y0, y1
    for k in range(1, n):
        ym, y = y, (2.0 * k / x) * y - ym
    return y


def bessel_y(alpha: float, x: float) -> float:
    """Bessel function of the second kind ``Y_alpha(x)``, ``alpha >= 0``, ``x > 0``.

    Orders within ``_Y_NEAR_INT`` of an integer are interpolated in the order
    from nodes at distance ``>= 2 _Y_NEAR_INT`` (the reflection formula cancels there).
    """
    alpha = float(alpha)
    x = float(x)
    _check_order_arg(alpha, x)
    if x == 0.0:
        return -math.inf
    n = round(alpha)
    if alpha == n:
        return _y_integer(n, x)
    if abs(alpha - n) < _Y_NEAR_INT:
        return _y_interpolated(n, alpha - n, x)
    return _y_fractional(alpha, x)


def _y_signed(alpha: float, x: float) -> float:
    if alpha >= 0:
        return _y_fractional(alpha, x)
    # Y_{-v} = sin(v pi) J_v + cos(v pi) Y_v
    v = -alpha
    return math.sin(v * math.pi) * bessel_j(v, x) + math.cos(v * math.pi) * _y_fractional(v, x)


def _y_interpolated(n: int, eps: float, x: float) -> float:
    h = 2 * _Y_NEAR_INT
    ks = [k for k in range(-4, 5) if k != 0]
    ts = [0.0] + [k * h for k in ks]
    ys = [_y_integer(n, x)] + [_y_signed(n + t, x) for t in ts[1:]]
    # Lagrange form on the 9 nodes
    out = 0.0
    for i, (ti, yi) in enumerate(zip(ts, ys)):
        w = 1.0
        for j, tj in enumerate(ts):
            if j != i:
                w *= (eps - tj) / (ti - tj)
        out += w * yi
    return out


def _y_fractional(alpha: float, x: float) -> float:
    n = int(math.floor(alpha))
    nu0 = alpha - n
    # J_{-alpha}: start from J_{mu0}, J_{mu0+1} with mu0 = 1 - nu0 and recur down
    mu0 = 1.0 - nu0
    if x <= 2.0:
        a, b = _j_series(mu0, x), _j_series(mu0 + 1.0, x)
    else:
        lat = _j_lattice(mu0, x, 1)
        a, b = lat[0], lat[1]
    v = mu0
    # after the loop `a` holds J_{v}, target order -alpha = mu0 - (n + 1)
    for _ in range(n + 1):
        a, b = (2.0 * v / x) * a - b, a
        v -= 1.0
    jneg = a
    return (bessel_j(alpha, x) * math.cos(alpha * math.pi) - jneg) / math.sin(alpha * math.pi)


_Y_NEAR_INT = 0.0125


def _mcmahon(alpha: float, k: int) -> float:
    mu = 4.0 * alpha * alpha
    beta = (k + 0.5 * alpha - 0.25) * math.pi
    b8 = 8.0 * beta
    return (
        beta
        - (mu - 1.0) / b8
        - 4.0 * (mu - 1.0) * (7.0 * mu - 31.0) / (3.0 * b8**3)
        - 32.0 * (mu - 1.0) * (83.0 * mu * mu - 982.0 * mu + 3779.0) / (15.0 * b8**5)
    )


def bessel_j_zero(alpha: float, k: int, rtol: float = 1e-14, maxit: int = 200) -> float:
    """k-th positive zero ``j_{alpha,k}`` of ``J_alpha``.

    The index is certified by counting sign changes on a 0.5-spaced scan
    starting at ``x = alpha`` (``J_alpha`` is positive on ``(0, alpha]``, and
    consecutive zeros are further apart than the scan step for orders <= 30).
    """
    alpha = float(alpha)
    if not alpha >= 0:
        raise InvalidParameterError(f"order must be >= 0, got {alpha}")
    if int(k) != k or k < 1:
        raise InvalidParameterError(f"k must be a positive integer, got {k}")
    k = int(k)
    step = 0.5
    x0 = max(alpha, 1e-3)
    f0 = bessel_j(alpha, x0)
    found = 0
    lo = hi = None
    x = x0
    while found < k:
        x1 = x + step
        f1 = bessel_j(alpha, x1)
        if f1 == 0.0:
            found += 1
            if found == k:
                return x1
            x1 += 1e-9
            f1 = bessel_j(alpha, x1)
        if (f0 > 0) != (f1 > 0):
            found += 1
            if found == k:
                lo, hi = x, x1
                flo = f0
                break
        x, f0 = x1, f1
        if x > 1e4:  # pragma: no cover
            raise NumericalFailure("zero scan exceeded search range")
    guess = _mcmahon(alpha, k)
    x = guess if lo < guess < hi else 0.5 * (lo + hi)
    for _ in range(maxit):
        fx = bessel_j(alpha, x)
        if fx == 0.0:
            return x
        if (fx > 0) == (flo > 0):
            lo, flo = x, fx
        else:
            hi = x
        dfx = bessel_j_prime(alpha, x)
        xn = x - fx / dfx if dfx != 0.0 else 0.5 * (lo + hi)
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if abs(xn - x) <= rtol * abs(xn) or hi - lo <= rtol * abs(hi):
            return xn
        x = xn
    raise NumericalFailure(f"zero j_({alpha},{k}) did not converge in {maxit} iterations")


# ---------------------------------------------------------------------------
# Confluent hypergeometric functions


def _is_nonpos_int(b: float) -> bool:
    return b <= 0 and b == math.floor(b)


def kummer_m(a: float, b: float, x: float, acc: SeriesAccuracy = DEFAULT_ACCURACY) -> float:
    """Kummer's function ``M(a, b, x) = sum (a)_k / (b)_k x^k / k!`` for ``x >= 0``."""
    a, b, x = float(a), float(b), float(x)
    if _is_nonpos_int(b):
        raise PoleError(f"Kummer M has a pole at b = {b}")
    if not x >= 0:
        raise InvalidParameterError(f"kummer_m requires x >= 0, got {x}")
    s = _Kahan(1.0)
    term = 1.0
    for k in range(acc.max_terms):
        ratio = (a + k) / (b + k) * x / (k + 1)
        term *= ratio
        s.add(term)
        if term == 0.0:
            return s.s
        if abs(ratio) < 0.5 and abs(term) <= acc.rel_tol * abs(s.s):
            return s.s
    raise NumericalFailure(f"Kummer series did not converge in {acc.max_terms} terms")


def kummer_m_prime(a: float, b: float, x: float) -> float:
    return a / b * kummer_m(a + 1.0, b + 1.0, x)


_U_QUAD_MIN_Z = 3.0
_U_QUAD_NODES = 100


def _kummer_u_laguerre(a: float, b: float, z: float) -> float:
    # U = z^-a / Gamma(a) int_0^inf e^-s s^(a-1) (1 + s/z)^(b-a-1) ds
    s, w = roots_genlaguerre(_U_QUAD_NODES, a - 1.0)
    return math.exp(-a * math.log(z) - ln_gamma(a)) * float(np.sum(w * (1.0 + s / z) ** (b - a - 1.0)))


def kummer_u(a: float, b: int, z: float, acc: SeriesAccuracy = DEFAULT_ACCURACY) -> float:
    """Tricomi's ``U(a, b, z)`` for integer ``b = n + 1 >= 1`` and ``z > 0``.

    Uses the logarithmic expansion

        U(a, n+1, z) = (-1)^(n+1) / (n! Gamma(a-n)) * [ M(a, n+1, z) ln z
                       + sum_r (a)_r z^r / ((n+1)_r r!) (psi(a+r) - psi(1+r) - psi(1+n+r)) ]
                       + (n-1)! / Gamma(a) * z^-n * sum_{r<n} (a-n)_r z^r / ((1-n)_r r!)

    with ``1/Gamma`` vanishing at poles, so the log part drops out when ``a-n``
    is a nonpositive integer.  For ``z >= 3`` the series cancels badly and the
    integral representation is evaluated by generalized Gauss-Laguerre
    quadrature instead.  Requires ``a > 0``.
    """
    a, z = float(a), float(z)
    if int(b) != b or b < 1:
        raise UnsupportedOperation(f"kummer_u implemented for integer b >= 1, got {b}")
    if not a > 0:
        raise InvalidParameterError(f"kummer_u requires a > 0, got {a}")
    if not z > 0:
        raise InvalidParameterError(f"kummer_u requires z > 0, got {z}")
    n = int(b) - 1
    if z >= _U_QUAD_MIN_Z:
        return _kummer_u_laguerre(a, float(b), z)
    pref = (-1.0) ** (n + 1) / math.factorial(n) * rgamma(a - n)
    total = 0.0
    if pref != 0.0:
        s = _Kahan(kummer_m(a, n + 1.0, z, acc) * math.log(z))
        coef = 1.0
        psi_a = digamma(a)
        psi_1 = -EULER_GAMMA
        psi_n = digamma(1.0 + n)
        for r in range(acc.max_terms):
            if r > 0:
                coef *= (a + r - 1) / ((n + r) * r) * z
                psi_a += 1.0 / (a + r - 1)
                psi_1 += 1.0 / r
                psi_n += 1.0 / (n + r)
            t = coef * (psi_a - psi_1 - psi_n)
            s.add(t)
            if r > z and abs(t) <= acc.rel_tol * abs(s.s):
                break
        else:  # pragma: no cover
            raise NumericalFailure("log series in kummer_u did not converge")
        total = pref * s.s
    if n > 0:
        fin = _Kahan()
        c = 1.0
        for r in range(n):
            if r > 0:
                c *= (a - n + r - 1) / ((1 - n + r - 1) * r) * z
            fin.add(c)
        total += math.factorial(n - 1) * rgamma(a) * z ** (-n) * fin.s
    return total

