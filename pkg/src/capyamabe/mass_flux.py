"""ADM-type mass of asymptotically flat half-space metrics and flux integrals.

The mass of a metric g on {y^n >= 0, |y| >= 1} is the large-R limit of

    int_{|y|=R, y^n>=0} sum_{ij} (g_{ij,j} - g_{jj,i}) y^i/|y| dsigma
  + int_{|y|=R, y^n=0}  sum_a    g_{na} y^a/|y| dsigma,

a hemisphere flux plus an equatorial correction.  Hemisphere quadrature is a
product rule (Gauss-Legendre in the polar angles, trapezoid in the periodic
azimuth); the limit is taken by a fitted-rate Richardson extrapolation
flux(R) = m + c R^{-kappa} over a geometric radius ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError
from .halfspace import Dim, sphere_volume

__all__ = [
    "AsymptoticMetric",
    "FluxResult",
    "RadialProfile",
    "flat_metric",
    "conformally_flat_metric",
    "boundary_cross_metric",
    "hemisphere_rule",
    "equator_rule",
    "mass",
    "flux_I",
    "default_green_profile",
]


# ---------------------------------------------------------------------------
# quadrature rules on spheres


def _unit_sphere_rule(m: int, resolution: int):
    """Points (m+1, P) and weights (P,) integrating over the unit sphere S^m."""
    if m == 0:
        pts = np.array([[1.0, -1.0]])
        return pts, np.array([1.0, 1.0])
    if m == 1:
        N = max(4, 2 * resolution)
        phi = 2.0 * np.pi * np.arange(N) / N
        pts = np.stack([np.cos(phi), np.sin(phi)])
        return pts, np.full(N, 2.0 * np.pi / N)
    nodes, weights = np.polynomial.legendre.leggauss(resolution)
    theta = 0.5 * np.pi * (nodes + 1.0)
    w_theta = 0.5 * np.pi * weights * np.sin(theta) ** (m - 1)
    sub_pts, sub_w = _unit_sphere_rule(m - 1, resolution)
    pts = np.concatenate(
        [
            np.repeat(np.cos(theta), sub_pts.shape[1])[None],
            np.einsum("t,cp->ctp", np.sin(theta), sub_pts).reshape(m, -1),
        ]
    )
    return pts, np.outer(w_theta, sub_w).ravel()


def hemisphere_rule(R: float, dim: Dim, resolution: int = 40):
    """Quadrature for {|y| = R, y^n >= 0}: points (n, P), weights (P,).

    Gauss-Legendre in the polar angle measured from the +e_n axis, recursive
    product rule over the remaining factor sphere (trapezoid on the final
    periodic azimuth).
    """
    n = dim.n
    nodes, weights = np.polynomial.legendre.leggauss(resolution)
    theta = 0.25 * np.pi * (nodes + 1.0)  # [0, pi/2]
    w_theta = 0.25 * np.pi * weights * np.sin(theta) ** (n - 2)
    sub_pts, sub_w = _unit_sphere_rule(n - 2, resolution)
    lateral = np.einsum("t,cp->ctp", np.sin(theta), sub_pts).reshape(n - 1, -1)
    normal = np.repeat(np.cos(theta), sub_pts.shape[1])[None]
    pts = R * np.concatenate([lateral, normal])
    w = R ** (n - 1) * np.outer(w_theta, sub_w).ravel()
    return pts, w


def equator_rule(R: float, dim: Dim, resolution: int = 40):
    """Quadrature for the equatorial sphere {|y| = R, y^n = 0}."""
    n = dim.n
    sub_pts, sub_w = _unit_sphere_rule(n - 2, resolution)
    pts = np.concatenate([R * sub_pts, np.zeros((1, sub_pts.shape[1]))])
    return pts, R ** (n - 2) * sub_w


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class AsymptoticMetric:
    """Metric evaluator on {|y| >= 1, y^n >= 0} with analytic first derivatives.

    ``values(Y) -> (n, n, P)`` and ``grad(Y) -> (n, n, n, P)`` with
    grad[i, j, k] = d_k g_ij; ``decay_order`` is the claimed p of Def-style
    falloff |g - delta| = O(|y|^{-p}).
    """

    values: Callable
    grad: Callable
    dim: Dim
    decay_order: float
    name: str = "custom"

    def decay_residual(self, radii=(4.0, 8.0, 16.0), resolution: int = 16) -> float:
        """Max over shells of |g - delta| * |y|^p; finite for honest decay."""
        worst = 0.0
        n = self.dim.n
        for R in radii:
            Y, _ = hemisphere_rule(R, self.dim, resolution)
            dev = self.values(Y) - np.eye(n)[:, :, None]
            worst = max(worst, float(np.max(np.abs(dev))) * R**self.decay_order)
        return worst


def flat_metric(dim: Dim) -> AsymptoticMetric:
    n = dim.n

    def values(Y):
        return np.broadcast_to(np.eye(n)[:, :, None], (n, n, Y.shape[1])).copy()

    def grad(Y):
        return np.zeros((n, n, n, Y.shape[1]))

    return AsymptoticMetric(values, grad, dim, decay_order=np.inf, name="flat")


def conformally_flat_metric(dim: Dim, m0: float) -> AsymptoticMetric:
    """g = (1 + m0 |y|^{2-n})^{4/(n-2)} delta; mass is linear in m0 in the limit."""
    n = dim.n
    p = 4.0 / (n - 2)

    def values(Y):
        r = np.sqrt(np.sum(Y * Y, axis=0))
        u = 1.0 + m0 * r ** (2 - n)
        return u**p * np.eye(n)[:, :, None]

    def grad(Y):
        r = np.sqrt(np.sum(Y * Y, axis=0))
        u = 1.0 + m0 * r ** (2 - n)
        # d_k u^p = p u^{p-1} m0 (2-n) r^{1-n} y_k / r
        du = p * u ** (p - 1.0) * m0 * (2.0 - n) * r ** (-n)
        return np.einsum("k...,ij->ijk...", du * Y, np.eye(n))

    return AsymptoticMetric(values, grad, dim, decay_order=n - 2, name="conformal")


def boundary_cross_metric(dim: Dim, c: float) -> AsymptoticMetric:
    """delta plus cross terms g_{na} = c y^a |y|^{1-n}; feeds the equator term."""
    n = dim.n

    def values(Y):
        r = np.sqrt(np.sum(Y * Y, axis=0))
        g = np.broadcast_to(np.eye(n)[:, :, None], (n, n, Y.shape[1])).copy()
        cross = c * Y[:-1] * r ** (1 - n)
        g[-1, :-1] += cross
        g[:-1, -1] += cross
        return g

    def grad(Y):
        r = np.sqrt(np.sum(Y * Y, axis=0))
        out = np.zeros((n, n, n, Y.shape[1]))
        # d_k (c y^a r^{1-n}) = c (delta_ak r^{1-n} + (1-n) y^a y^k r^{-n-1})
        dcross = c * (
            np.einsum("ak,...->ak...", np.eye(n - 1, n), r ** (1 - n))
            + (1 - n) * np.einsum("a...,k...->ak...", Y[:-1], Y * r ** (-n - 1))
        )
        out[-1, :-1] = dcross
        out[:-1, -1] = dcross
        return out

    return AsymptoticMetric(values, grad, dim, decay_order=n - 2, name="boundary_cross")


# ---------------------------------------------------------------------------
# mass


@dataclass
class FluxResult:
    radii: list
    flux_values: list
    extrapolated_mass: float
    converged: bool
    hemisphere_values: list
    equator_values: list


def _fit_extrapolate(radii, values):
    """Fit flux(R) = m + c R^{-kappa} through the last three ladder rungs."""
    if len(values) < 3:
        return values[-1], False
    f1, f2, f3 = values[-3:]
    r1, r2, r3 = radii[-3:]
    d1, d2 = f1 - f2, f2 - f3
    ratio21, ratio32 = r2 / r1, r3 / r2
    if abs(ratio21 - ratio32) > 1e-9 * ratio21:
        return values[-1], False  # ladder not geometric; no rate to fit
    if d1 == 0.0 and d2 == 0.0:
        return f3, True  # already converged
    if d2 == 0.0 or d1 * d2 <= 0.0 or abs(d2) >= abs(d1):
        return f3, False  # differences not decreasing
    kappa = math.log(d1 / d2) / math.log(ratio21)
    factor = ratio21**kappa - 1.0
    return f3 - d2 / factor, True


def mass(
    g: AsymptoticMetric,
    radii=(20.0, 40.0, 80.0),
    resolution: int = 40,
) -> FluxResult:
    """Hemisphere + equator flux per radius, extrapolated over the ladder."""
    radii = [float(R) for R in radii]
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ConfigurationError("radii must be strictly increasing")
    if radii[0] < 2.0:
        raise ConfigurationError("smallest radius must be >= 2 (asymptotic region)")
    dim = g.dim
    hemi_vals, eq_vals, totals = [], [], []
    for R in radii:
        Y, w = hemisphere_rule(R, dim, resolution)
        dg = g.grad(Y)
        nu = Y / R
        integrand = np.einsum("ijj...,i...->...", dg, nu) - np.einsum(
            "jji...,i...->...", dg, nu
        )
        hemi = float(np.dot(integrand, w))
        Yb, wb = equator_rule(R, dim, resolution)
        gb = g.values(Yb)
        eq = float(np.dot(np.einsum("a...,a...->...", gb[-1, :-1], Yb[:-1] / R), wb))
        hemi_vals.append(hemi)
        eq_vals.append(eq)
        totals.append(hemi + eq)
    m, ok = _fit_extrapolate(radii, totals)
    return FluxResult(
        radii=radii,
        flux_values=totals,
        extrapolated_mass=m,
        converged=ok,
        hemisphere_values=hemi_vals,
        equator_values=eq_vals,
    )


# ---------------------------------------------------------------------------
# flux integral at small rho


@dataclass(frozen=True)
class RadialProfile:
    """Radial function G(|y|) with analytic derivative."""

    f: Callable
    df: Callable


def default_green_profile(dim: Dim) -> RadialProfile:
    n = dim.n
    return RadialProfile(
        f=lambda r: r ** (2.0 - n),
        df=lambda r: (2.0 - n) * r ** (1.0 - n),
    )


def flux_I(
    h,
    G: RadialProfile | None,
    rho: float,
    dim: Dim,
    resolution: int = 40,
) -> float:
    """Small-sphere flux integral at radius rho on the half-space:

    I = - int_{|y|=rho, y^n>=0} |y|^{2-2n} (|y|^2 d_j h_ij - 2n y^j h_ij) y^i/|y|
        + (4(n-1)/(n-2)) int (|y|^{2-n} d_i G - G d_i |y|^{2-n}) y^i/|y|.

    ``h`` is a PerturbationTensor (or None for zero); ``G`` a radial profile,
    default |y|^{2-n} (for which the second integrand vanishes identically).
    """
    if not (0.0 < rho <= 1.0):
        raise DomainError(f"flux radius must lie in (0, 1], got {rho}")
    n = dim.n
    Y, w = hemisphere_rule(rho, dim, resolution)
    nu = Y / rho
    total = 0.0
    if h is not None:
        hv = h.values(Y)
        dh = h.grad(Y)
        term = rho**2 * np.einsum("ijj...->i...", dh) - 2.0 * n * np.einsum(
            "j...,ij...->i...", Y, hv
        )
        total -= rho ** (2 - 2 * n) * float(
            np.dot(np.einsum("i...,i...->...", term, nu), w)
        )
    if G is None:
        G = default_green_profile(dim)
    r = np.full(Y.shape[1], rho)
    # (r^{2-n} G'(r) - G(r) (2-n) r^{1-n}) since y^i d_i acts radially
    radial = rho ** (2.0 - n) * G.df(r) - G.f(r) * (2.0 - n) * rho ** (1.0 - n)
    total += 4.0 * (n - 1) / (n - 2) * float(np.dot(radial, w))
    return total
