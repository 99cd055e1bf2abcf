"""Exact tensor identities of the bubble's second-variation machinery.

Everything here verifies pointwise algebraic/differential identities relating
the bubble W, an admissible deformation vector field V, its conformal Killing
part S, the correction scalar psi and an optional perturbation tensor H:

* the Einstein-type Hessian identity of W;
* the linearized scalar- and mean-curvature equations for psi;
* the boundary relations for S and T = H - S on the plane y^n = 0;
* the flux vector xi and its boundary normal component;
* the second-variation divergence identity (T = 0 branch).

Vector fields and perturbation tensors are held symbolically (sympy) so all
V/H derivatives are analytic; bubble derivatives use the closed forms from the
bubble module.  Identities are either fully analytic (residual at roundoff)
or use finite differences for one designated derivative, in which case the
residual must vanish at second order under grid refinement.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sp

from .bubble import Bubble
from .errors import ConfigurationError, DomainError
from .halfspace import Dim
from .numerics import HalfGrid, OrderEstimate, TensorField, estimate_order, fd_derivative

__all__ = [
    "AdmissibleVectorField",
    "PerturbationTensor",
    "KillingPair",
    "zero_field",
    "dilation_field",
    "translation_field",
    "random_cubic_field",
    "boundary_flux_field",
    "zero_perturbation",
    "taylor_perturbation",
    "conformal_killing",
    "killing_pair",
    "correction_psi",
    "verify_einstein_identity",
    "verify_linearized_scalar",
    "verify_linearized_mean",
    "verify_ST_boundary",
    "q_tensor",
    "xi_field",
    "xi_boundary_residual",
    "verify_second_variation",
]


def _symbols(n: int):
    return sp.symbols(f"y1:{n + 1}")


def _lambdify(expr, syms):
    f = sp.lambdify(syms, expr, modules="numpy")

    def call(Y):
        out = f(*Y)
        return np.broadcast_to(np.asarray(out, dtype=float), Y.shape[1:]).copy()

    return call


class _SymbolicDerivatives:
    """Cached lambdified derivatives of a tuple of sympy expressions."""

    def __init__(self, exprs, syms):
        self.exprs = tuple(exprs)
        self.syms = tuple(syms)
        self._cache = {}

    def _fn(self, comp: int, multi: tuple):
        key = (comp, tuple(sorted(multi)))
        if key not in self._cache:
            expr = self.exprs[comp]
            if key[1]:
                expr = sp.diff(expr, *[self.syms[j] for j in key[1]])
            self._cache[key] = _lambdify(expr, self.syms)
        return self._cache[key]

    def eval(self, Y, order: int) -> np.ndarray:
        """Array d[i, j1..j_order, ...] = d_{j_order}...d_{j1} expr_i at Y."""
        n = len(self.exprs)
        m = len(self.syms)
        out = np.empty((n,) + (m,) * order + Y.shape[1:])
        for comp in range(n):
            for multi in itertools.product(range(m), repeat=order):
                out[(comp,) + multi] = self._fn(comp, multi)(Y)
        return out


# ---------------------------------------------------------------------------
# admissible vector fields


@dataclass
class AdmissibleVectorField:
    """Deformation field with V_n = 0 and d_n V_a = 0 on the plane y^n = 0.

    Components are sympy expressions; derivative tensors use the conventions
    jac[i, j] = d_j V_i, hess[i, j, k] = d_k d_j V_i, third adds one index.
    """

    exprs: tuple
    dim: Dim
    name: str = "custom"

    def __post_init__(self):
        n = self.dim.n
        if len(self.exprs) != n:
            raise ConfigurationError(f"need {n} components, got {len(self.exprs)}")
        self.exprs = tuple(sp.sympify(e) for e in self.exprs)
        res = self.admissibility_residual()
        if res > 1e-10:
            raise DomainError(
                f"vector field '{self.name}' violates the boundary conditions "
                f"V_n = 0, d_n V_a = 0 on y^n = 0 (residual {res:.3e})"
            )

    @cached_property
    def _derivs(self):
        return _SymbolicDerivatives(self.exprs, _symbols(self.dim.n))

    def admissibility_residual(self, half_extent: float = 3.0, samples: int = 40) -> float:
        n = self.dim.n
        rng = np.random.default_rng(0)
        Y = np.zeros((n, samples))
        Y[:-1] = rng.uniform(-half_extent, half_extent, size=(n - 1, samples))
        v = self.values(Y)
        j = self.jac(Y)
        return float(max(np.max(np.abs(v[-1])), np.max(np.abs(j[:-1, -1]))))

    def values(self, Y) -> np.ndarray:
        return self._derivs.eval(np.asarray(Y, dtype=float), 0)

    def jac(self, Y) -> np.ndarray:
        return self._derivs.eval(np.asarray(Y, dtype=float), 1)

    def hess(self, Y) -> np.ndarray:
        return self._derivs.eval(np.asarray(Y, dtype=float), 2)

    def third(self, Y) -> np.ndarray:
        return self._derivs.eval(np.asarray(Y, dtype=float), 3)

    def __add__(self, other: "AdmissibleVectorField") -> "AdmissibleVectorField":
        if self.dim != other.dim:
            raise ConfigurationError("dimension mismatch")
        exprs = tuple(a + b for a, b in zip(self.exprs, other.exprs))
        return AdmissibleVectorField(exprs, self.dim, f"{self.name}+{other.name}")


def zero_field(dim: Dim) -> AdmissibleVectorField:
    return AdmissibleVectorField((sp.Integer(0),) * dim.n, dim, "zero")


def dilation_field(dim: Dim) -> AdmissibleVectorField:
    y = _symbols(dim.n)
    return AdmissibleVectorField(tuple(y), dim, "dilation")


def translation_field(dim: Dim, axis: int = 0) -> AdmissibleVectorField:
    if not (0 <= axis < dim.n - 1):
        raise DomainError("translations must be tangential (axis < n-1)")
    exprs = [sp.Integer(0)] * dim.n
    exprs[axis] = sp.Integer(1)
    return AdmissibleVectorField(tuple(exprs), dim, f"translation_{axis}")


def random_cubic_field(dim: Dim, seed: int = 0) -> AdmissibleVectorField:
    """Seeded polynomial field of total degree <= 3, admissible by construction.

    Tangential components depend on y^n only through (y^n)^2 and the normal
    component carries an overall y^n factor, which enforces V_n = 0 and
    d_n V_a = 0 on the plane exactly.
    """
    n = dim.n
    y = _symbols(n)
    yn = y[-1]
    rng = np.random.default_rng(seed)

    def coeff():
        return sp.Rational(int(rng.integers(-9, 10)), 8)

    tangential_monos = [sp.Integer(1)] + list(y[:-1])
    tangential_quads = [ya * yb for ya in y[:-1] for yb in y[:-1]]
    exprs = []
    for _a in range(n - 1):
        e = sum(coeff() * m for m in tangential_monos + tangential_quads)
        e += yn**2 * sum(coeff() * m for m in tangential_monos)
        exprs.append(sp.expand(e))
    vn = yn * sum(coeff() * m for m in tangential_monos + tangential_quads)
    vn += yn**2 * sum(coeff() * m for m in tangential_monos)
    exprs.append(sp.expand(vn))
    return AdmissibleVectorField(tuple(exprs), dim, f"cubic_seed{seed}")


def boundary_flux_field(bubble: Bubble, c1: float = 1.0) -> AdmissibleVectorField:
    """Admissible V whose Killing part satisfies the boundary flux relation

        d_n S_nn = -(2n/(n-2)) W^{-1} d_n W S_nn   on y^n = 0.

    With V_a = 0 and V_n = c1 y^n + (y^n)^2 phi(y'), the relation pins
    phi(y') = -n T_c eps c1 / (eps^2 + |y'|^2 + (T_c eps)^2); S_nn is a
    nonzero constant on the plane, so the relation is exercised nontrivially.
    """
    n = bubble.dim.n
    y = _symbols(n)
    yn = y[-1]
    eps, tc = bubble.eps, bubble.T_c
    D0 = eps**2 + sum(ya**2 for ya in y[:-1]) + (tc * eps) ** 2
    phi = -n * tc * eps * c1 / D0
    exprs = [sp.Integer(0)] * (n - 1) + [c1 * yn + yn**2 * phi]
    return AdmissibleVectorField(tuple(exprs), bubble.dim, "boundary_flux")


# ---------------------------------------------------------------------------
# perturbation tensors


@dataclass
class PerturbationTensor:
    """Analytic symmetric trace-free H with H_{in} = 0 for all i.

    Additional normalizations of the admissible Taylor class are enforced:
    tangential gradient vanishing at the origin and sum_b y^b H_{ab} = 0 on
    the plane y^n = 0 (both hold automatically for fields with an overall
    y^n factor, which is how taylor_perturbation builds them).
    """

    exprs: tuple  # flattened row-major (n*n,) of sympy expressions
    dim: Dim
    name: str = "custom"

    def __post_init__(self):
        n = self.dim.n
        if len(self.exprs) != n * n:
            raise ConfigurationError("need n*n components (row-major)")
        self.exprs = tuple(sp.sympify(e) for e in self.exprs)
        mat = [[self.exprs[i * n + j] for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(n):
                if sp.simplify(mat[i][j] - mat[j][i]) != 0:
                    raise DomainError("perturbation tensor must be symmetric")
            if sp.simplify(mat[i][n - 1]) != 0:
                raise DomainError("perturbation tensor must have H_in = 0")
        if sp.simplify(sum(mat[i][i] for i in range(n))) != 0:
            raise DomainError("perturbation tensor must be trace-free")

    @cached_property
    def _derivs(self):
        return _SymbolicDerivatives(self.exprs, _symbols(self.dim.n))

    def _reshape(self, arr, extra):
        n = self.dim.n
        return arr.reshape((n, n) + arr.shape[1 : 1 + extra] + arr.shape[1 + extra :])

    def values(self, Y) -> np.ndarray:
        n = self.dim.n
        out = self._derivs.eval(np.asarray(Y, dtype=float), 0)
        return out.reshape((n, n) + out.shape[1:])

    def grad(self, Y) -> np.ndarray:
        """dH[i, j, k] = d_k H_ij."""
        n = self.dim.n
        out = self._derivs.eval(np.asarray(Y, dtype=float), 1)
        return out.reshape((n, n, n) + out.shape[2:])

    def hess(self, Y) -> np.ndarray:
        """ddH[i, j, k, l] = d_l d_k H_ij."""
        n = self.dim.n
        out = self._derivs.eval(np.asarray(Y, dtype=float), 2)
        return out.reshape((n, n, n, n) + out.shape[3:])


def zero_perturbation(dim: Dim) -> PerturbationTensor:
    return PerturbationTensor((sp.Integer(0),) * (dim.n * dim.n), dim, "zero")


def taylor_perturbation(dim: Dim, seed: int = 0) -> PerturbationTensor:
    """Seeded polynomial H (degree <= 3) with an overall y^n factor.

    The y^n factor makes H vanish on the plane, which realizes the boundary
    normalizations exactly; trace-freeness is imposed on the tangential block
    (H_nn = 0, so sum_a H_aa = 0).
    """
    n = dim.n
    y = _symbols(n)
    yn = y[-1]
    rng = np.random.default_rng(seed)

    def poly():
        monos = [sp.Integer(1)] + list(y) + [ya * yb for ya in y for yb in y]
        return sum(sp.Rational(int(rng.integers(-9, 10)), 8) * m for m in monos[: 2 * n])

    mat = [[sp.Integer(0)] * n for _ in range(n)]
    for a in range(n - 1):
        for b in range(a, n - 1):
            mat[a][b] = mat[b][a] = sp.expand(yn * poly())
    # restore trace-freeness on the tangential block
    trace = sum(mat[a][a] for a in range(n - 1))
    for a in range(n - 1):
        mat[a][a] = sp.expand(mat[a][a] - trace / (n - 1))
    exprs = tuple(mat[i][j] for i in range(n) for j in range(n))
    return PerturbationTensor(exprs, dim, f"taylor_seed{seed}")


# ---------------------------------------------------------------------------
# analytic field bundle


def _bundle(V: AdmissibleVectorField, bubble: Bubble, Y, H: PerturbationTensor | None = None):
    """All analytic fields entering the identities, evaluated at points Y."""
    n = bubble.dim.n
    Y = np.asarray(Y, dtype=float)
    out = {"n": n, "Y": Y}
    out["W"] = bubble.value(Y)
    out["dW"] = bubble.grad(Y)
    out["ddW"] = bubble.hess(Y)
    out["dddW"] = bubble.third(Y)
    out["lapW"] = bubble.laplacian(Y)

    v = V.values(Y)
    jac = V.jac(Y)  # jac[i, j] = d_j V_i
    hess = V.hess(Y)  # hess[i, j, k] = d_k d_j V_i
    third = V.third(Y)
    out["V"], out["jacV"] = v, jac

    delta = np.eye(n).reshape((n, n) + (1,) * (Y.ndim - 1))
    div = np.einsum("mm...->...", jac)
    ddiv = np.einsum("mm k...->k...", hess)  # d_k div V
    dddiv = np.einsum("mm kl...->kl...", third)

    S = jac + np.swapaxes(jac, 0, 1) - (2.0 / n) * div * delta
    # dS[i, j, k] = d_k S_ij
    dS = (
        hess
        + np.einsum("jik...->ijk...", hess)
        - (2.0 / n) * np.einsum("k...,ij...->ijk...", ddiv, delta)
    )
    # ddS[i, j, k, l] = d_l d_k S_ij
    ddS = (
        third
        + np.einsum("jikl...->ijkl...", third)
        - (2.0 / n) * np.einsum("kl...,ij...->ijkl...", dddiv, delta)
    )
    out["S"], out["dS"], out["ddS"] = S, dS, ddS

    c = (n - 2) / (2.0 * n)
    W, dW, ddW, dddW = out["W"], out["dW"], out["ddW"], out["dddW"]
    psi = np.einsum("i...,i...->...", dW, v) + c * W * div
    dpsi = (
        np.einsum("ik...,i...->k...", ddW, v)
        + np.einsum("i...,ik...->k...", dW, jac)
        + c * (np.einsum("k...,...->k...", dW, div) + W * ddiv)
    )
    ddpsi = (
        np.einsum("ikl...,i...->kl...", dddW, v)
        + np.einsum("ik...,il...->kl...", ddW, jac)
        + np.einsum("il...,ik...->kl...", ddW, jac)
        + np.einsum("i...,ikl...->kl...", dW, hess)
        + c
        * (
            np.einsum("kl...,...->kl...", ddW, div)
            + np.einsum("k...,l...->kl...", dW, ddiv)
            + np.einsum("l...,k...->kl...", dW, ddiv)
            + W * dddiv
        )
    )
    out["psi"], out["dpsi"], out["ddpsi"] = psi, dpsi, ddpsi

    if H is not None:
        out["H"] = H.values(Y)
        out["dH"] = H.grad(Y)
        out["ddH"] = H.hess(Y)
    return out


# ---------------------------------------------------------------------------
# operations


def conformal_killing(V: AdmissibleVectorField, grid: HalfGrid) -> TensorField:
    """Trace-free Killing deviation S_ij = d_i V_j + d_j V_i - (2/n) div V delta."""
    n = grid.dim.n
    Y = grid.coords()
    jac = V.jac(Y)
    delta = np.eye(n).reshape((n, n) + (1,) * (Y.ndim - 1))
    div = np.einsum("mm...->...", jac)
    S = jac + np.swapaxes(jac, 0, 1) - (2.0 / n) * div * delta
    trace = np.max(np.abs(np.einsum("ii...->...", S)))
    if trace > 1e-12:
        raise AssertionError(f"Killing deviation acquired a trace: {trace:.3e}")
    return TensorField(rank=2, data=S, grid=grid)


@dataclass
class KillingPair:
    S: TensorField
    T: TensorField
    psi: TensorField


def killing_pair(
    V: AdmissibleVectorField, H: PerturbationTensor, bubble: Bubble, grid: HalfGrid
) -> KillingPair:
    S = conformal_killing(V, grid)
    T = TensorField(rank=2, data=H.values(grid.coords()) - S.data, grid=grid)
    psi = correction_psi(V, bubble, grid)
    return KillingPair(S=S, T=T, psi=psi)


def correction_psi(
    V: AdmissibleVectorField,
    bubble: Bubble,
    grid: HalfGrid,
    convention: str = "general",
) -> TensorField:
    """psi = V . grad W + ((n-2)/(2n)) W div V, or the vanishing convention.

    ``convention="vanishing"`` returns psi = 0 (the normalization adopted in
    the lowest dimension, where the Taylor perturbation class is empty).
    """
    Y = grid.coords()
    if convention == "vanishing":
        return TensorField(rank=0, data=np.zeros(Y.shape[1:]), grid=grid)
    if convention != "general":
        raise ConfigurationError(f"unknown psi convention {convention!r}")
    b = _bundle(V, bubble, Y)
    return TensorField(rank=0, data=b["psi"], grid=grid)


def verify_einstein_identity(bubble: Bubble, points) -> float:
    """Max relative residual of the Hessian identity

    W d_i d_j W - (n/(n-2)) d_i W d_j W
        = (1/n) (W Lap W - (n/(n-2)) |grad W|^2) delta_ij.

    Residuals are normalized by the local magnitude of the participating
    terms, so the check is scale-free in eps.
    """
    n = bubble.dim.n
    Y = np.asarray(points, dtype=float)
    W = bubble.value(Y)
    dW = bubble.grad(Y)
    ddW = bubble.hess(Y)
    lap = bubble.laplacian(Y)
    g2 = np.einsum("k...,k...->...", dW, dW)
    delta = np.eye(n).reshape((n, n) + (1,) * (Y.ndim - 1))
    lhs = W * ddW - (n / (n - 2)) * np.einsum("i...,j...->ij...", dW, dW)
    rhs = (1.0 / n) * (W * lap - (n / (n - 2)) * g2) * delta
    scale = (
        np.abs(W * ddW)
        + (n / (n - 2)) * np.abs(np.einsum("i...,j...->ij...", dW, dW))
        + (1.0 / n) * (np.abs(W * lap) + (n / (n - 2)) * g2) * delta
        + 1e-300
    )
    return float(np.max(np.abs(lhs - rhs) / np.maximum(scale, np.max(scale) * 1e-8)))


def _scalar_residual_analytic(V, bubble, Y):
    """Residual of the linearized scalar-curvature equation, all analytic.

    Lap psi + n(n+2) W^{4/(n-2)} psi
        = ((n-2)/(4(n-1))) W d_i d_j S_ij + d_i (d_j W S_ij).
    """
    b = _bundle(V, bubble, Y)
    n = b["n"]
    lhs = np.einsum("kk...->...", b["ddpsi"]) + n * (n + 2) * b["W"] ** (
        4.0 / (n - 2)
    ) * b["psi"]
    ddS_contracted = np.einsum("ijij...->...", b["ddS"])  # d_i d_j S_ij
    div_term = np.einsum("ji...,ij...->...", b["ddW"], b["S"]) + np.einsum(
        "j...,iji...->...", b["dW"], b["dS"]
    )  # d_i(d_j W S_ij) = d_i d_j W S_ij + d_j W d_i S_ij
    rhs = (n - 2) / (4.0 * (n - 1)) * b["W"] * ddS_contracted + div_term
    return lhs - rhs, b


def verify_linearized_scalar(
    V: AdmissibleVectorField, bubble: Bubble, grid: HalfGrid, mode: str = "analytic"
):
    """Interior linearized scalar-curvature identity.

    ``mode="analytic"``: all derivatives closed-form; returns an OrderEstimate
    whose residuals sit at the roundoff floor (is_exact).  ``mode="fd"``: the
    outer Laplacian of psi and the S-divergences are finite differences, so
    the residual must decay at second order between grid and grid.refined().
    """
    if mode == "analytic":
        res = []
        for g in (grid, grid.refined()):
            Y = g.coords()
            mask = g.interior_mask()
            r, b = _scalar_residual_analytic(V, bubble, Y)
            scale = max(float(np.max(np.abs(b["W"][mask]) ** 2)), 1e-300)
            res.append(float(np.max(np.abs(r[mask]))) / scale)
        return estimate_order(*res)
    if mode != "fd":
        raise ConfigurationError(f"unknown mode {mode!r}")

    res = []
    for g in (grid, grid.refined()):
        Y = g.coords()
        b = _bundle(V, bubble, Y)
        n = b["n"]
        psi, S, W, dW = b["psi"], b["S"], b["W"], b["dW"]
        # one FD layer on analytic first derivatives keeps second order up to
        # the one-sided boundary stencils
        lap_psi = np.zeros_like(psi)
        for k in range(n):
            lap_psi += fd_derivative(b["dpsi"][k], g, k)
        lhs = lap_psi + n * (n + 2) * W ** (4.0 / (n - 2)) * psi
        div_S = np.einsum("ijj...->i...", b["dS"])  # d_j S_ij
        flux = np.einsum("j...,ij...->i...", dW, S)
        ddS = np.zeros_like(psi)
        div_flux = np.zeros_like(psi)
        for i in range(n):
            ddS += fd_derivative(div_S[i], g, i)
            div_flux += fd_derivative(flux[i], g, i)
        rhs = (n - 2) / (4.0 * (n - 1)) * W * ddS + div_flux
        mask = g.interior_mask()
        scale = max(float(np.max(np.abs(W[mask]) ** 2)), 1e-300)
        res.append(float(np.max(np.abs((lhs - rhs)[mask]))) / scale)
    return estimate_order(*res)


def _boundary_points(grid: HalfGrid):
    Y = grid.coords()
    return Y[(slice(None),) + (slice(None),) * (grid.dim.n - 1) + (0,)]


def verify_linearized_mean(
    V: AdmissibleVectorField, bubble: Bubble, grid: HalfGrid, mode: str = "analytic"
):
    """Boundary linearized mean-curvature identity on y^n = 0:

    d_n psi - (n/(n-2)) W^{-1} d_n W psi
        = (1/2) d_n W S_nn + ((n-2)/(4(n-1))) W d_n S_nn.
    """
    if mode not in ("analytic", "fd"):
        raise ConfigurationError(f"unknown mode {mode!r}")
    res = []
    for g in (grid, grid.refined()):
        if mode == "analytic":
            Yb = _boundary_points(g)
            b = _bundle(V, bubble, Yb)
            n = b["n"]
            dn_psi = b["dpsi"][-1]
            dn_Snn = b["dS"][-1, -1, -1]
            W, dW, psi, S = b["W"], b["dW"], b["psi"], b["S"]
        else:
            Y = g.coords()
            b = _bundle(V, bubble, Y)
            n = b["n"]
            bsl = (slice(None),) * (n - 1) + (0,)
            dn_psi = fd_derivative(b["psi"], g, n - 1)[bsl]
            dn_Snn = fd_derivative(b["S"][-1, -1], g, n - 1)[bsl]
            W, dW = b["W"][bsl], b["dW"][(slice(None),) + bsl]
            psi, S = b["psi"][bsl], b["S"][(np.s_[:], np.s_[:]) + bsl]
        lhs = dn_psi - (n / (n - 2)) * dW[-1] / W * psi
        rhs = 0.5 * dW[-1] * S[-1, -1] + (n - 2) / (4.0 * (n - 1)) * W * dn_Snn
        lat = np.all(np.abs(_boundary_points(g)[:-1]) <= g.half_extent - g.h + 1e-12, axis=0)
        scale = max(float(np.max(np.abs(W[lat]) ** 2)), 1e-300)
        res.append(float(np.max(np.abs((lhs - rhs)[lat]))) / scale)
    return estimate_order(*res)


def verify_ST_boundary(
    V: AdmissibleVectorField,
    bubble: Bubble,
    boundary_points,
    H: PerturbationTensor | None = None,
) -> dict:
    """Residuals of the plane relations for S and T = H - S (H = S if omitted).

        S_an = 0,   T_an = 0,
        d_n S_nn = -(2n/(n-2)) W^{-1} d_n W S_nn,
        d_n S_ab = -(1/(n-1)) d_n S_nn delta_ab.

    The second row holds for every admissible V; the first normal-derivative
    relation encodes the flux structure of the construction and holds e.g.
    for boundary_flux_field.  All derivatives are analytic.
    """
    Yb = np.asarray(boundary_points, dtype=float)
    if np.max(np.abs(Yb[-1])) > 1e-14:
        raise DomainError("verify_ST_boundary expects points on y^n = 0")
    b = _bundle(V, bubble, Yb, H)
    n = b["n"]
    S, dS, W, dW = b["S"], b["dS"], b["W"], b["dW"]
    T = (b["H"] if H is not None else S) - S
    scale = max(float(np.max(W**2)), 1e-300)

    out = {}
    out["S_an"] = float(np.max(np.abs(S[:-1, -1]))) / scale
    out["T_an"] = float(np.max(np.abs(T[:-1, -1]))) / scale
    lhs1 = dS[-1, -1, -1]
    rhs1 = -(2.0 * n / (n - 2)) * dW[-1] / W * S[-1, -1]
    out["dn_S_nn"] = float(np.max(np.abs(lhs1 - rhs1))) / scale
    worst = 0.0
    for a in range(n - 1):
        for c in range(n - 1):
            target = -(1.0 / (n - 1)) * dS[-1, -1, -1] if a == c else 0.0
            worst = max(worst, float(np.max(np.abs(dS[a, c, -1] - target))))
    out["dn_S_ab"] = worst / scale
    return out


def q_tensor(T: TensorField, bubble: Bubble, grid: HalfGrid) -> np.ndarray:
    """Q_{ij,k} = W d_k T_ij + (2/(n-2)) (d_l W T_il delta_jk + d_l W T_jl
    delta_ik - d_i W T_jk - d_j W T_ik); T derivatives by finite differences.
    """
    n = grid.dim.n
    if T.rank != 2:
        raise ConfigurationError("q_tensor expects a rank-2 field")
    tr = np.max(np.abs(np.einsum("ii...->...", T.data)))
    if tr > 1e-10 * max(1.0, float(np.max(np.abs(T.data)))):
        raise DomainError(f"q_tensor requires trace-free T (trace {tr:.3e})")
    Y = grid.coords()
    W = bubble.value(Y)
    dW = bubble.grad(Y)
    dT = np.empty((n, n, n) + Y.shape[1:])
    for k in range(n):
        dT[:, :, k] = np.stack(
            [np.stack([fd_derivative(T.data[i, j], grid, k) for j in range(n)]) for i in range(n)]
        )
    delta = np.eye(n).reshape((n, n) + (1,) * (Y.ndim - 1))
    flux = np.einsum("l...,il...->i...", dW, T.data)
    Q = W * dT
    Q += (2.0 / (n - 2)) * (
        np.einsum("i...,jk...->ijk...", flux, delta)
        + np.einsum("j...,ik...->ijk...", flux, delta)
        - np.einsum("i...,jk...->ijk...", dW, T.data)
        - np.einsum("j...,ik...->ijk...", dW, T.data)
    )
    return Q


def _xi_terms(b):
    """The flux vector xi_i assembled term by term from analytic fields."""
    n = b["n"]
    W, dW, psi, dpsi = b["W"], b["dW"], b["psi"], b["dpsi"]
    S, dS = b["S"], b["dS"]
    H = b.get("H", S)
    dH = b.get("dH", dS)
    T = H - S
    cf = 4.0 * (n - 1) / (n - 2)
    div_S = np.einsum("klk...->l...", dS)  # d_k S_lk, free index l
    div_H = np.einsum("ikk...->i...", dH)  # d_k H_ik
    xi = 2.0 * W * psi * div_H
    xi -= 2.0 * W * np.einsum("k...,ik...->i...", dpsi, H)
    xi -= 2.0 * psi * np.einsum("k...,ik...->i...", dW, H)
    xi -= 0.5 * W**2 * np.einsum("lki...,lk...->i...", dS, H)
    xi += W**2 * np.einsum("k...,ik...->i...", div_S, H)
    xi += 2.0 * W * np.einsum("l...,kl...,ik...->i...", dW, S, H)
    xi -= W * psi * np.einsum("kik...->i...", dS)
    xi += W * np.einsum("k...,ik...->i...", dpsi, S)
    xi += psi * np.einsum("k...,ik...->i...", dW, S)
    xi += 0.25 * W**2 * np.einsum("lki...,lk...->i...", dS, S)
    xi -= 0.5 * W**2 * np.einsum("k...,ik...->i...", div_S, S)
    xi -= W * np.einsum("l...,kl...,ik...->i...", dW, S, S)
    xi -= cf * psi * np.einsum("k...,ik...->i...", dW, S)
    xi += cf * psi * dpsi
    xi -= (2.0 / (n - 2)) * W * np.einsum("k...,lk...,il...->i...", dW, T, T)
    return xi


def xi_field(
    V: AdmissibleVectorField,
    bubble: Bubble,
    grid: HalfGrid,
    H: PerturbationTensor | None = None,
) -> TensorField:
    """The second-variation flux vector (fifteen terms), analytic inputs.

    With ``H`` omitted the trivial pairing H = S (T = 0) is used.
    """
    b = _bundle(V, bubble, grid.coords(), H)
    return TensorField(rank=1, data=_xi_terms(b), grid=grid)


def xi_boundary_residual(
    V: AdmissibleVectorField,
    bubble: Bubble,
    boundary_points,
    H: PerturbationTensor | None = None,
) -> float:
    """Relative residual of the boundary normal component relation

    xi_n = -((n+2)/(2(n-2))) W d_n W S_nn^2
           + (4n(n-1)/(n-2)^2) W^{-1} d_n W psi^2   on y^n = 0.

    Requires V to satisfy the flux relation checked by verify_ST_boundary
    (e.g. boundary_flux_field) and H_in = 0.
    """
    Yb = np.asarray(boundary_points, dtype=float)
    if np.max(np.abs(Yb[-1])) > 1e-14:
        raise DomainError("xi_boundary_residual expects points on y^n = 0")
    b = _bundle(V, bubble, Yb, H)
    n = b["n"]
    xi = _xi_terms(b)
    W, dW, psi, S = b["W"], b["dW"], b["psi"], b["S"]
    rhs = (
        -(n + 2) / (2.0 * (n - 2)) * W * dW[-1] * S[-1, -1] ** 2
        + 4.0 * n * (n - 1) / (n - 2) ** 2 * dW[-1] / W * psi**2
    )
    scale = max(float(np.max(np.abs(rhs))), float(np.max(np.abs(xi[-1]))), 1e-300)
    return float(np.max(np.abs(xi[-1] - rhs))) / scale


def verify_second_variation(
    V: AdmissibleVectorField,
    bubble: Bubble,
    grid: HalfGrid,
    H: PerturbationTensor | None = None,
    t_tol: float = 1e-8,
    psi_convention: str = "general",
):
    """Pointwise second-variation divergence identity, T = H - S branch.

    LHS = (1/4) Q_{ik,j} Q_{ik,j} - (1/2) Q_{ki,k} Q_{li,l}
          + 2 W^{2n/(n-2)} T_ik T_ik,
    RHS = eight algebraic terms in (W, H, psi) + div xi.

    All fields are analytic except div xi, which is a finite difference, so
    the residual decays at second order between grid and grid.refined().
    Supported only when T satisfies the compatibility divergence equation
    W d_j T_ij + (2n/(n-2)) d_j W T_ij = 0; H = S (the default) gives T = 0.
    """
    if psi_convention not in ("general", "vanishing"):
        raise ConfigurationError(f"unknown psi convention {psi_convention!r}")
    res = []
    for g in (grid, grid.refined()):
        Y = g.coords()
        b = _bundle(V, bubble, Y, H)
        if psi_convention == "vanishing":
            b["psi"] = np.zeros_like(b["psi"])
            b["dpsi"] = np.zeros_like(b["dpsi"])
        n = b["n"]
        W, dW, psi, dpsi = b["W"], b["dW"], b["psi"], b["dpsi"]
        S = b["S"]
        Hv = b.get("H", S)
        dH = b.get("dH", b["dS"])
        T = Hv - S
        dT = dH - b["dS"]

        compat = W * np.einsum("ijj...->i...", dT) + (
            2.0 * n / (n - 2)
        ) * np.einsum("j...,ij...->i...", dW, T)
        compat_res = float(np.max(np.abs(compat))) / max(float(np.max(W**2)), 1e-300)
        if compat_res > t_tol:
            raise DomainError(
                "T = H - S violates the compatibility divergence equation "
                f"(relative residual {compat_res:.3e})"
            )

        delta = np.eye(n).reshape((n, n) + (1,) * (Y.ndim - 1))
        fluxT = np.einsum("l...,il...->i...", dW, T)
        Q = W * dT + (2.0 / (n - 2)) * (
            np.einsum("i...,jk...->ijk...", fluxT, delta)
            + np.einsum("j...,ik...->ijk...", fluxT, delta)
            - np.einsum("i...,jk...->ijk...", dW, T)
            - np.einsum("j...,ik...->ijk...", dW, T)
        )
        lhs = (
            0.25 * np.einsum("ikj...,ikj...->...", Q, Q)
            - 0.5 * np.einsum("kik...,lil...->...", Q, Q)
            + 2.0 * W ** (2.0 * n / (n - 2)) * np.einsum("ik...,ik...->...", T, T)
        )

        div_H = np.einsum("ill...->i...", dH)
        rhs = 0.25 * W**2 * np.einsum("ikl...,ikl...->...", dH, dH)
        rhs -= (2.0 * (n - 1) / (n - 2)) * np.einsum(
            "k...,l...,ik...,il...->...", dW, dW, Hv, Hv
        )
        rhs -= 2.0 * W * np.einsum("k...,ik...,i...->...", dW, Hv, div_H)
        rhs -= 0.5 * W**2 * np.einsum("i...,i...->...", div_H, div_H)
        rhs += (8.0 * (n - 1) / (n - 2)) * np.einsum(
            "i...,k...,ik...->...", dW, dpsi, Hv
        )
        rhs -= (4.0 * (n - 1) / (n - 2)) * np.einsum("k...,k...->...", dpsi, dpsi)
        rhs += (4.0 * (n - 1) / (n - 2)) * n * (n + 2) * W ** (4.0 / (n - 2)) * psi**2
        ddH = b.get("ddH")
        if ddH is not None:
            ddiv_H = np.einsum("ikik...->...", ddH)  # d_i d_k H_ik
        else:
            ddiv_H = np.einsum("ikik...->...", b["ddS"])
        rhs -= 2.0 * W * psi * ddiv_H

        xi = _xi_terms(b)
        div_xi = np.zeros(Y.shape[1:])
        for i in range(n):
            div_xi += fd_derivative(xi[i], g, i)
        rhs += div_xi

        mask = g.interior_mask()
        scale = max(float(np.max(np.abs(W[mask]) ** 4)), 1e-300)
        res.append(float(np.max(np.abs((lhs - rhs)[mask]))) / scale)
    return estimate_order(*res)
