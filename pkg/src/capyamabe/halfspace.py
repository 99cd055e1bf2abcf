"""Closed-form spherical-cap parametrization of the sharp half-space invariant.

The two-constant conformal invariant of the flat half-space is realized by a
spherical cap whose contact angle r in (0, pi/2] encodes the constant boundary
mean curvature T_c = -cot r.  Everything in this module reduces to the scalar
balance

    f(r) = 2 n (n-1) b A(r)^{2/n} B(r)^{-1/(n-1)} - a cot r = 0,

with the cap integrals

    2^n A(r)     = omega_{n-1} * int_0^r sin(tau)^{n-1} dtau,
    2^{n-1} B(r) = omega_{n-1} * sin(r)^{n-1}.

f is strictly increasing on (0, pi/2) with f(0+) = -inf, so the root is unique
and safely bracketed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import special

from .errors import DomainError

__all__ = [
    "Dim",
    "Weights",
    "CapSolution",
    "sphere_volume",
    "cap_A",
    "cap_A_quadrature",
    "cap_B",
    "cap_f",
    "cap_identity_residual",
    "solve_cap",
    "yamabe_halfspace",
]


@dataclass(frozen=True)
class Dim:
    """Ambient dimension n >= 3 and the Taylor cutoff d = floor((n-2)/2)."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 3:
            raise DomainError(f"dimension must be an integer >= 3, got {self.n}")

    @property
    def d(self) -> int:
        return (self.n - 2) // 2

    @property
    def q_critical(self) -> float:
        return (self.n + 2) / (self.n - 2)


@dataclass(frozen=True)
class Weights:
    """Interior/boundary normalization weights (a, b), a, b >= 0, not both 0."""

    a: float
    b: float

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise DomainError(f"weights must be nonnegative, got ({self.a}, {self.b})")
        if self.a == 0 and self.b == 0:
            raise DomainError("weights (0, 0) are not admissible")


@dataclass(frozen=True)
class CapSolution:
    """Cap angle, boundary constant and the invariant they determine."""

    r: float
    T_c: float
    A: float
    B: float
    Y: float


def sphere_volume(m: int) -> float:
    """m-dimensional measure of the unit sphere S^m: 2 pi^{(m+1)/2} / Gamma((m+1)/2)."""
    if m < 1:
        raise DomainError(f"sphere dimension must be >= 1, got {m}")
    return 2.0 * math.pi ** ((m + 1) / 2) / math.gamma((m + 1) / 2)


def _adaptive_simpson(f, lo, hi, rel_tol):
    """Recursive adaptive Simpson with absolute-scaled tolerance."""

    def simpson(a, b, fa, fm, fb):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = simpson(a, m, fa, flm, fm)
        right = simpson(m, b, fm, frm, fb)
        if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return recurse(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(
            m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
        )

    fa, fb = f(lo), f(hi)
    fm = f(0.5 * (lo + hi))
    whole = simpson(lo, hi, fa, fm, fb)
    scale = max(abs(whole), 1e-300)
    return recurse(lo, hi, fa, fm, fb, whole, rel_tol * scale, 48)


def _check_angle(r: float) -> None:
    if not (0.0 < r <= math.pi / 2):
        raise DomainError(f"cap angle must lie in (0, pi/2], got {r}")


def _sin_power_integral(m: int, r: float) -> float:
    """int_0^r sin(tau)^m dtau for r in (0, pi/2].

    Substituting u = sin^2(tau) gives (1/2) B(sin^2 r; (m+1)/2, 1/2), which
    the regularized incomplete beta evaluates stably down to r -> 0 (the
    naive sin-power reduction cancels catastrophically there).
    """
    x = math.sin(r) ** 2
    p, q = (m + 1) / 2.0, 0.5
    return 0.5 * special.beta(p, q) * float(special.betainc(p, q, x))


def cap_A(r: float, dim: Dim) -> float:
    """A(r) = 2^{-n} omega_{n-1} int_0^r sin(tau)^{n-1} dtau, exact reduction."""
    _check_angle(r)
    n = dim.n
    return 2.0 ** (-n) * sphere_volume(n - 1) * _sin_power_integral(n - 1, r)


def cap_A_quadrature(r: float, dim: Dim) -> float:
    """Independent adaptive-Simpson evaluation of the cap volume integral.

    Kept as a cross-check oracle for cap_A's exact reduction formula.
    """
    _check_angle(r)
    n = dim.n
    integral = _adaptive_simpson(lambda t: math.sin(t) ** (n - 1), 0.0, r, 1e-13)
    return 2.0 ** (-n) * sphere_volume(n - 1) * integral


def cap_B(r: float, dim: Dim) -> float:
    """B(r) = 2^{1-n} omega_{n-1} sin(r)^{n-1}, closed form."""
    _check_angle(r)
    n = dim.n
    return 2.0 ** (1 - n) * sphere_volume(n - 1) * math.sin(r) ** (n - 1)


def cap_f(r: float, w: Weights, dim: Dim) -> float:
    """The strictly increasing balance function whose root fixes the cap angle."""
    n = dim.n
    A = cap_A(r, dim)
    B = cap_B(r, dim)
    return (
        2.0 * n * (n - 1) * w.b * A ** (2.0 / n) * B ** (-1.0 / (n - 1))
        - w.a / math.tan(r)
    )


def cap_identity_residual(sol: CapSolution, w: Weights, dim: Dim) -> float:
    """Residual of -a A^{-2/n} T_c = 2n(n-1) b B^{-1/(n-1)}, relative scale."""
    n = dim.n
    lhs = -w.a * sol.A ** (-2.0 / n) * sol.T_c
    rhs = 2.0 * n * (n - 1) * w.b * sol.B ** (-1.0 / (n - 1))
    return abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1.0)


def solve_cap(w: Weights, dim: Dim, f_tol: float = 1e-13) -> CapSolution:
    """Find the unique cap angle balancing the interior and boundary weights.

    Bracketed bisection down to width 1e-6 warm-starts a Newton iteration with
    numeric derivative; f is strictly increasing so the bracket never lies.
    Requires a > 0 and b > 0; the edge weights are handled by yamabe_halfspace.
    """
    if w.a == 0.0 or w.b == 0.0:
        raise DomainError(
            "solve_cap requires strictly positive weights; "
            "use yamabe_halfspace for the a=0 / b=0 limit formulas"
        )
    n = dim.n

    f = lambda r: cap_f(r, w, dim)
    lo, hi = 1e-12, math.pi / 2 - 1e-12
    flo, fhi = f(lo), f(hi)
    if not (flo < 0.0 < fhi):  # pragma: no cover - guaranteed by monotonicity
        raise DomainError("balance function does not bracket a root")
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid

    r = 0.5 * (lo + hi)
    for _ in range(60):
        fr = f(r)
        if abs(fr) <= f_tol:
            break
        step = max(1e-9, 1e-7 * r)
        dfr = (f(r + step) - f(r - step)) / (2.0 * step)
        r_new = r - fr / dfr
        if not (lo <= r_new <= hi):
            r_new = 0.5 * (lo + hi)  # fall back to bisection inside the bracket
        if f(r_new) < 0.0:
            lo = r_new
        else:
            hi = r_new
        if abs(r_new - r) < 1e-16:
            r = r_new
            break
        r = r_new

    T_c = -1.0 / math.tan(r)
    A = cap_A(r, dim)
    B = cap_B(r, dim)
    Y = 4.0 * n * (n - 1) * A ** (2.0 / n) / w.a
    return CapSolution(r=r, T_c=T_c, A=A, B=B, Y=Y)


def yamabe_halfspace(w: Weights, dim: Dim) -> float:
    """Sharp invariant Y_{a,b} of the flat half-space.

    For a, b > 0 the two closed forms 4n(n-1) A^{2/n} / a and
    -2 T_c B^{1/(n-1)} / b must agree to 1e-10 relative; their mismatch would
    indicate a broken cap solve, so it is asserted here.
    """
    n = dim.n
    if w.b == 0.0:
        # minimal-boundary cap: r = pi/2, T_c = 0
        return 4.0 * n * (n - 1) * cap_A(math.pi / 2, dim) ** (2.0 / n) / w.a
    if w.a == 0.0:
        # r -> 0 limit: -T_c * B^{1/(n-1)} -> (2^{1-n} omega_{n-1})^{1/(n-1)}
        return 2.0 / w.b * (2.0 ** (1 - n) * sphere_volume(n - 1)) ** (1.0 / (n - 1))
    sol = solve_cap(w, dim)
    y_boundary = -2.0 * sol.T_c * sol.B ** (1.0 / (n - 1)) / w.b
    if abs(sol.Y - y_boundary) > 1e-10 * abs(sol.Y):
        raise AssertionError(
            f"cap invariant formulas disagree: {sol.Y} vs {y_boundary}"
        )
    return sol.Y
