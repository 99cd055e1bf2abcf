"""The extremal half-space bubble and its exact differential identities.

With m = (n-2)/2, z = y - T_c*eps*e_n and D = eps^2 + |z|^2 the bubble is
W(y) = eps^m D^{-m}.  All derivatives below are hand-derived closed forms:

    d_i W       = -(n-2) eps^m z_i D^{-m-1}
    d_i d_j W   = -(n-2) eps^m (delta_ij D^{-m-1} - n z_i z_j D^{-m-2})
    d_i d_j d_k W = -(n-2) eps^m ( -n (delta_ij z_k + delta_ik z_j + delta_jk z_i)
                    D^{-m-2} + n(n+2) z_i z_j z_k D^{-m-3} )

which makes the interior equation -Delta W = n(n-2) W^{(n+2)/(n-2)} and the
boundary condition d_n W = (n-2) T_c W^{n/(n-2)} exact to roundoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .halfspace import Dim, Weights, cap_A, cap_B, solve_cap, sphere_volume

__all__ = [
    "Bubble",
    "bubble_eval",
    "verify_bubble_pde",
    "bubble_energy",
    "bubble_energy_quadrature",
    "stereo_lift",
    "verify_stereo_conformal",
]


@dataclass(frozen=True)
class Bubble:
    """Scale eps > 0, boundary constant T_c <= 0, ambient dimension."""

    eps: float
    T_c: float
    dim: Dim

    def __post_init__(self):
        if self.eps <= 0.0:
            raise DomainError(f"bubble scale must be positive, got {self.eps}")
        if self.T_c > 0.0:
            raise DomainError(f"boundary constant must be <= 0, got {self.T_c}")

    @classmethod
    def from_weights(cls, w: Weights, dim: Dim, eps: float = 1.0) -> "Bubble":
        return cls(eps=eps, T_c=solve_cap(w, dim).T_c, dim=dim)

    # -- internals ---------------------------------------------------------

    def _zD(self, y):
        """Shifted coordinates z (shape (n, ...)) and denominator D (...)."""
        y = np.asarray(y, dtype=float)
        z = np.array(y, copy=True)
        z[-1] = z[-1] - self.T_c * self.eps
        D = self.eps**2 + np.sum(z * z, axis=0)
        return z, D

    def value(self, y):
        z, D = self._zD(y)
        m = (self.dim.n - 2) / 2.0
        return (self.eps / D) ** m

    def grad(self, y):
        n = self.dim.n
        z, D = self._zD(y)
        m = (n - 2) / 2.0
        return -(n - 2) * self.eps**m * z * D ** (-m - 1)

    def hess(self, y):
        n = self.dim.n
        z, D = self._zD(y)
        m = (n - 2) / 2.0
        eye = np.eye(n).reshape((n, n) + (1,) * (z.ndim - 1))
        out = eye * D ** (-m - 1) - n * z[:, None] * z[None, :] * D ** (-m - 2)
        return -(n - 2) * self.eps**m * out

    def third(self, y):
        n = self.dim.n
        z, D = self._zD(y)
        m = (n - 2) / 2.0
        eye = np.eye(n)
        shape = (1,) * (z.ndim - 1)
        e_ij = eye.reshape((n, n, 1) + shape)
        e_ik = eye.reshape((n, 1, n) + shape)
        e_jk = eye.reshape((1, n, n) + shape)
        zi = z.reshape((n, 1, 1) + z.shape[1:])
        zj = z.reshape((1, n, 1) + z.shape[1:])
        zk = z.reshape((1, 1, n) + z.shape[1:])
        out = -n * (e_ij * zk + e_ik * zj + e_jk * zi) * D ** (-m - 2)
        out = out + n * (n + 2) * zi * zj * zk * D ** (-m - 3)
        return -(n - 2) * self.eps**m * out

    def laplacian(self, y):
        n = self.dim.n
        _, D = self._zD(y)
        m = (n - 2) / 2.0
        return -n * (n - 2) * self.eps ** (m + 2) * D ** (-m - 2)


def bubble_eval(bub: Bubble, y):
    """Value, gradient and Laplacian of the bubble at half-space points.

    ``y`` has component axis first (shape (n, ...)); the normal coordinate is
    the last component and must be >= 0.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y[-1] < 0):
        raise DomainError("bubble evaluation requires y^n >= 0")
    return bub.value(y), bub.grad(y), bub.laplacian(y)


def verify_bubble_pde(bub: Bubble, y_interior, y_boundary, T_c_boundary=None):
    """Max residuals of the half-space PDE with analytic derivatives.

    Interior: -Delta W - n(n-2) W^{(n+2)/(n-2)}.
    Boundary (y^n = 0): d_n W - (n-2) T_c W^{n/(n-2)}.
    ``T_c_boundary`` overrides the constant used in the boundary check
    (negative-control hook); by default the bubble's own T_c is used.
    """
    n = bub.dim.n
    w, _, lap = bubble_eval(bub, y_interior)
    interior = np.max(np.abs(-lap - n * (n - 2) * w ** ((n + 2) / (n - 2))))

    tc = bub.T_c if T_c_boundary is None else T_c_boundary
    yb = np.asarray(y_boundary, dtype=float)
    wb = bub.value(yb)
    gb = bub.grad(yb)
    boundary = np.max(np.abs(gb[-1] - (n - 2) * tc * wb ** (n / (n - 2))))
    return {"interior": float(interior), "boundary": float(boundary)}


def _cap_angle(T_c: float) -> float:
    # cos r = -T_c / sqrt(1 + T_c^2), r in (0, pi/2]
    return math.acos(-T_c / math.sqrt(1.0 + T_c * T_c))


def bubble_energy(bub: Bubble) -> float:
    """Dirichlet energy int |grad W|^2 = n(n-2) A - (n-2) T_c B (eps-free)."""
    dim = bub.dim
    n = dim.n
    r = _cap_angle(bub.T_c)
    A = cap_A(r, dim)
    B = cap_B(r, dim)
    return n * (n - 2) * A - (n - 2) * bub.T_c * B


def bubble_energy_quadrature(bub: Bubble, cutoff: float = 200.0, order: int = 80) -> float:
    """Independent quadrature of int_{half-space} |grad W|^2.

    In spherical coordinates centered at T_c*e_n (eps = 1 by scale
    invariance), |grad W|^2 = (n-2)^2 s^2 (1+s^2)^{-n} over the region
    s >= -T_c, theta <= arccos(-T_c / s).  The radial integral is split at
    ``cutoff`` and the far piece mapped by t = 1/s so the tail is integrated
    exactly rather than truncated.
    """
    n = bub.dim.n
    tc = bub.T_c
    om = sphere_volume(n - 2) if n >= 3 else 2.0

    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(order)

    def angular(s):
        # int_0^{theta_max} sin^{n-2} theta dtheta, theta_max = arccos(-tc/s)
        tmax = np.arccos(np.clip(-tc / s, -1.0, 1.0))
        t = 0.5 * tmax[:, None] * (gl_nodes[None, :] + 1.0)
        w = 0.5 * tmax[:, None] * gl_weights[None, :]
        return np.sum(np.sin(t) ** (n - 2) * w, axis=1)

    def radial_piece(lo, hi, transform=None):
        s = 0.5 * (hi - lo) * gl_nodes + 0.5 * (hi + lo)
        w = 0.5 * (hi - lo) * gl_weights
        if transform == "inverse":
            # variable is t = 1/s on (0, 1/cutoff]
            t = s
            s = 1.0 / t
            w = w / t**2
        f = s ** (n + 1) * (1.0 + s * s) ** (-float(n)) * angular(s)
        return np.sum(f * w)

    lo = max(-tc, 0.0)
    total = 0.0
    # graded panels toward the lower end where the integrand peaks
    edges = np.unique(np.concatenate([np.geomspace(max(lo, 1e-8) + 1.0, cutoff + 1.0, 24) - 1.0, [lo, cutoff]]))
    edges = edges[(edges >= lo - 1e-15) & (edges <= cutoff + 1e-15)]
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            total += radial_piece(a, b)
    total += radial_piece(1e-12, 1.0 / cutoff, transform="inverse")
    return (n - 2) ** 2 * om * total


def stereo_lift(y, T_c: float):
    """Inverse stereographic lift of a half-space point to the unit sphere.

    xi^a = 2 y^a / (1+|z|^2), xi^n = 2 (y^n - T_c) / (1+|z|^2),
    xi^{n+1} = (|z|^2 - 1) / (1+|z|^2), with z = y - T_c e_n; |xi| = 1 exactly.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y[-1] < 0):
        raise DomainError("stereo_lift requires y^n >= 0")
    z = np.array(y, copy=True)
    z[-1] = z[-1] - T_c
    s = np.sum(z * z, axis=0)
    denom = 1.0 + s
    xi = np.concatenate([2.0 * z / denom, ((s - 1.0) / denom)[None]], axis=0)
    return xi


def verify_stereo_conformal(y, T_c: float, h: float = 1e-5):
    """Check J^T J = (2/(1+|z|^2))^2 Id via central finite-difference Jacobians.

    Returns max deviation over the supplied points (O(h^2) accurate).
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    worst = 0.0
    pts = y.reshape(n, -1)
    for col in range(pts.shape[1]):
        p = pts[:, col].copy()
        p[-1] = max(p[-1], h)  # keep the central stencil inside the half-space
        J = np.empty((n + 1, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            hi = stereo_lift((p + e)[:, None], T_c)[:, 0]
            lo = stereo_lift((p - e)[:, None], T_c)[:, 0]
            J[:, j] = (hi - lo) / (2 * h)
        z = p.copy()
        z[-1] -= T_c
        factor = (2.0 / (1.0 + np.dot(z, z))) ** 2
        worst = max(worst, float(np.max(np.abs(J.T @ J - factor * np.eye(n)))))
    return worst
