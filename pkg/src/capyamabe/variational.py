"""Subcritical approximation scheme for the two-constant curvature functional.

For a rotationally symmetric background (flat ball or annulus) the quotient

    Q^q[u] = E[u] / ( a (int u^{q+1} dmu)^{2/(q+1)}
                      + 2(n-1) b (int_bdry u^{(q+3)/2} dsigma)^{4/(q+3)} )

is minimized over radial profiles under the unit-denominator normalization.
The minimizer is found by projected gradient descent (renormalization after
every step, absolute value keeps positivity) followed by a Newton polish of
the strong-form Euler-Lagrange system

    -c_n (u'' + (n-1) u'/r) + R u = mu a alpha_q u^q          (interior)
    (2/(n-2)) du/dnu + h u        = mu b beta_q u^{(q+1)/2}   (boundary)

with c_n = 4(n-1)/(n-2), so the reported Euler-Lagrange residual is limited
only by the Newton tolerance, not by the optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, DomainError
from .halfspace import Dim, Weights, yamabe_halfspace
from .numerics import DiscreteField, RadialMesh, make_annulus_mesh, make_ball_mesh

__all__ = [
    "BackgroundGeometry",
    "SubcriticalProblem",
    "MinimizerOptions",
    "MinimizerResult",
    "flat_ball_geometry",
    "flat_annulus_geometry",
    "energy",
    "quotient_q",
    "normalization",
    "minimize_subcritical",
    "el_residual",
    "critical_limit",
    "CriticalLimitResult",
    "conformal_curvatures",
    "sweep_ab",
    "default_schedule",
]


@dataclass(frozen=True)
class BackgroundGeometry:
    """Rotationally symmetric background (M, g0): mesh + R_{g0} + boundary h."""

    mesh: RadialMesh
    scalar_curvature: np.ndarray
    boundary_h: tuple  # aligned with mesh.boundary_radii

    def __post_init__(self):
        if len(self.boundary_h) != len(self.mesh.boundary_radii):
            raise ConfigurationError("one mean curvature per boundary sphere")

    @property
    def dim(self) -> Dim:
        return self.mesh.dim


def flat_ball_geometry(M: int, dim: Dim, grading: float = 1.0) -> BackgroundGeometry:
    mesh = make_ball_mesh(M, dim, grading)
    return BackgroundGeometry(mesh, np.zeros(M + 1), (1.0,))


def flat_annulus_geometry(M: int, dim: Dim, r_in: float, r_out: float) -> BackgroundGeometry:
    mesh = make_annulus_mesh(M, dim, r_in, r_out)
    return BackgroundGeometry(mesh, np.zeros(M + 1), (-1.0 / r_in, 1.0 / r_out))


@dataclass(frozen=True)
class SubcriticalProblem:
    geometry: BackgroundGeometry
    weights: Weights
    q: float

    def __post_init__(self):
        q_crit = self.geometry.dim.q_critical
        if not (1.0 < self.q <= q_crit):
            raise DomainError(f"exponent must lie in (1, {q_crit}], got {self.q}")


@dataclass
class MinimizerOptions:
    tol: float = 1e-6  # strong-form Euler-Lagrange residual target
    max_iter: int = 50_000
    # the Newton polish does the heavy lifting; projected gradient only needs
    # to produce a basin-correct warm start
    pg_max_iter: int = 200
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    polish: bool = True
    newton_tol: float = 1e-12
    newton_max_iter: int = 60


@dataclass
class MinimizerResult:
    u: DiscreteField
    mu: float
    energy: float
    el_residual: float
    iterations: int
    alpha_q: float
    beta_q: float
    converged: bool
    q: float


# ---------------------------------------------------------------------------
# functional pieces


def _boundary_data(geom: BackgroundGeometry):
    mesh = geom.mesh
    idx = mesh.boundary_nodes()
    sigma = np.array([mesh.boundary_measure(r) for r in mesh.boundary_radii])
    h = np.asarray(geom.boundary_h, dtype=float)
    return idx, sigma, h


def _c_n(n: int) -> float:
    return 4.0 * (n - 1) / (n - 2)


def _stiffness_apply(mesh: RadialMesh, u: np.ndarray) -> np.ndarray:
    """Action of the |grad u|^2 bilinear form: (Ku)_i with u^T K u = int |u'|^2 dmu."""
    from .halfspace import sphere_volume

    r = mesh.nodes
    n = mesh.dim.n
    dr = np.diff(r)
    m = sphere_volume(n - 1) * (r[1:] ** n - r[:-1] ** n) / n
    slope = np.diff(u) / dr
    flux = slope * m / dr
    out = np.zeros_like(u)
    out[:-1] -= flux
    out[1:] += flux
    return out


def energy(u: DiscreteField, geom: BackgroundGeometry) -> float:
    """Discrete E[u] = int (c_n |u'|^2 + R u^2) dmu + 2(n-1) int_bdry h u^2 dsigma."""
    if u.mesh is not geom.mesh and not np.array_equal(u.mesh.nodes, geom.mesh.nodes):
        raise ConfigurationError("field lives on a different mesh")
    n = geom.dim.n
    v = u.values
    grad_term = _c_n(n) * float(v @ _stiffness_apply(geom.mesh, v))
    mass_term = geom.mesh.integrate(geom.scalar_curvature * v**2)
    idx, sigma, h = _boundary_data(geom)
    bdry = 2.0 * (n - 1) * float(np.sum(h * sigma * v[idx] ** 2))
    return grad_term + mass_term + bdry


def normalization(u_values: np.ndarray, prob: SubcriticalProblem):
    """Denominator of Q^q and the two normalization integrals (I_alpha, I_beta)."""
    geom, w, q = prob.geometry, prob.weights, prob.q
    n = geom.dim.n
    idx, sigma, _ = _boundary_data(geom)
    uv = np.abs(u_values)
    I_alpha = geom.mesh.integrate(uv ** (q + 1))
    I_beta = float(np.sum(sigma * uv[idx] ** ((q + 3) / 2)))
    N = w.a * I_alpha ** (2.0 / (q + 1)) + 2.0 * (n - 1) * w.b * I_beta ** (
        4.0 / (q + 3)
    )
    return N, I_alpha, I_beta


def quotient_q(u: DiscreteField, prob: SubcriticalProblem) -> float:
    """The subcritical quotient Q^q_{a,b}[u]; scale invariant in u."""
    if np.all(u.values == 0.0):
        raise DomainError("quotient undefined for the zero field")
    N, _, _ = normalization(u.values, prob)
    return energy(DiscreteField(np.abs(u.values), prob.geometry.mesh), prob.geometry) / N


def _alpha_beta(prob: SubcriticalProblem, I_alpha: float, I_beta: float):
    q = prob.q
    alpha = I_alpha ** ((1.0 - q) / (1.0 + q))
    beta = I_beta ** ((1.0 - q) / (q + 3.0)) if I_beta > 0 else 0.0
    return alpha, beta


# ---------------------------------------------------------------------------
# strong-form FD operators


def _fd_rows(mesh: RadialMesh):
    """Nonuniform 3-point stencils for u'' and u' at interior nodes."""
    r = mesh.nodes
    dm = r[1:-1] - r[:-2]
    dp = r[2:] - r[1:-1]
    # second derivative
    c2m = 2.0 / (dm * (dm + dp))
    c2c = -2.0 / (dm * dp)
    c2p = 2.0 / (dp * (dm + dp))
    # first derivative (central, second order on nonuniform grids)
    c1m = -dp / (dm * (dm + dp))
    c1c = (dp - dm) / (dm * dp)
    c1p = dm / (dp * (dm + dp))
    return (c2m, c2c, c2p), (c1m, c1c, c1p)


def _one_sided_first(r0, r1, r2):
    """Weights of a 3-point one-sided derivative at r0 (second order)."""
    h1, h2 = r1 - r0, r2 - r0
    w1 = h2 / (h1 * (h2 - h1))
    w2 = -h1 / (h2 * (h2 - h1))
    w0 = -(w1 + w2)
    return w0, w1, w2


def _strong_rows(u, mu, prob: SubcriticalProblem):
    """Interior and boundary strong-form residual rows, plus alpha/beta."""
    geom, w, q = prob.geometry, prob.weights, prob.q
    mesh = geom.mesh
    n = geom.dim.n
    cn = _c_n(n)
    r = mesh.nodes
    R = geom.scalar_curvature
    _, I_alpha, I_beta = normalization(u, prob)
    alpha, beta = _alpha_beta(prob, I_alpha, I_beta)
    idx, sigma, h = _boundary_data(geom)

    (c2m, c2c, c2p), (c1m, c1c, c1p) = _fd_rows(mesh)
    upp = c2m * u[:-2] + c2c * u[1:-1] + c2p * u[2:]
    up = c1m * u[:-2] + c1c * u[1:-1] + c1p * u[2:]
    lap = upp + (n - 1) * up / r[1:-1]
    interior = -cn * lap + R[1:-1] * u[1:-1] - mu * w.a * alpha * u[1:-1] ** q

    is_ball = len(mesh.boundary_radii) == 1
    rows = {}
    if is_ball:
        # regularity row at r = 0: Laplacian -> n u''(0), u''(0) ~ 2(u1-u0)/r1^2
        lap0 = n * 2.0 * (u[1] - u[0]) / r[1] ** 2
        rows["center"] = -cn * lap0 + R[0] * u[0] - mu * w.a * alpha * u[0] ** q

    bres = []
    for k, b_idx in enumerate(idx):
        if b_idx == len(u) - 1:
            w0, w1, w2 = _one_sided_first(r[-1], r[-2], r[-3])
            dnu = w0 * u[-1] + w1 * u[-2] + w2 * u[-3]  # outward = +d/dr
        else:
            w0, w1, w2 = _one_sided_first(r[0], r[1], r[2])
            dnu = -(w0 * u[0] + w1 * u[1] + w2 * u[2])  # outward = -d/dr
        bres.append(
            2.0 / (n - 2) * dnu
            + h[k] * u[b_idx]
            - mu * w.b * beta * u[b_idx] ** ((q + 1) / 2)
        )
    rows["interior"] = interior
    rows["boundary"] = np.array(bres)
    rows["alpha"], rows["beta"] = alpha, beta
    return rows


def el_residual(u: DiscreteField, prob: SubcriticalProblem, mu: float) -> float:
    """Strong-form Euler-Lagrange defect: max interior + max boundary residual."""
    rows = _strong_rows(np.asarray(u.values, dtype=float), mu, prob)
    interior = float(np.max(np.abs(rows["interior"])))
    if "center" in rows:
        interior = max(interior, abs(rows["center"]))
    boundary = float(np.max(np.abs(rows["boundary"])))
    return interior + boundary


# ---------------------------------------------------------------------------
# Newton polish of the strong-form system


def _newton_polish(u0, mu0, prob: SubcriticalProblem, opts: MinimizerOptions):
    """Solve {strong EL rows, normalization = 1} for (u, mu) by damped Newton.

    The Jacobian is a pentadiagonal band plus two rank-one couplings (through
    alpha_q and beta_q) and the (mu column / normalization row) border; it is
    inverted with banded solves + Woodbury + one Schur complement, so the cost
    is O(M) per iteration.
    """
    geom, w, q = prob.geometry, prob.weights, prob.q
    mesh = geom.mesh
    n = geom.dim.n
    cn = _c_n(n)
    r = mesh.nodes
    R = geom.scalar_curvature
    wts = mesh.volume_weights
    idx, sigma, h = _boundary_data(geom)
    Mn = len(r)
    is_ball = len(mesh.boundary_radii) == 1
    (c2m, c2c, c2p), (c1m, c1c, c1p) = _fd_rows(mesh)

    sig = np.zeros(Mn)
    for k, b_idx in enumerate(idx):
        sig[b_idx] = sigma[k]

    def residual_vec(u, mu):
        rows = _strong_rows(u, mu, prob)
        F = np.empty(Mn + 1)
        if is_ball:
            F[0] = rows["center"]
            F[1:-2] = rows["interior"]
            F[-2] = rows["boundary"][0]
        else:
            F[0] = rows["boundary"][0]
            F[1:-2] = rows["interior"]
            F[-2] = rows["boundary"][1]
        N, _, _ = normalization(u, prob)
        F[-1] = N - 1.0
        return F, rows

    def solve_newton_step(u, mu, F, rows):
        alpha, beta = rows["alpha"], rows["beta"]
        _, I_alpha, I_beta = normalization(u, prob)
        uq = u**q
        uh = u ** ((q + 1) / 2)

        # banded part A (lower/upper bandwidth 2)
        A = np.zeros((5, Mn))

        def set_entry(i, j, val):
            A[2 + i - j, j] += val

        lap_rows = range(1, Mn - 1)
        for i in lap_rows:
            k = i - 1
            fac = -cn
            set_entry(i, i - 1, fac * (c2m[k] + (n - 1) * c1m[k] / r[i]))
            set_entry(i, i, fac * (c2c[k] + (n - 1) * c1c[k] / r[i]))
            set_entry(i, i + 1, fac * (c2p[k] + (n - 1) * c1p[k] / r[i]))
            set_entry(i, i, R[i] - mu * w.a * alpha * q * u[i] ** (q - 1))
        if is_ball:
            fac = -cn * n * 2.0 / r[1] ** 2
            set_entry(0, 0, -fac)
            set_entry(0, 1, fac)
            set_entry(0, 0, R[0] - mu * w.a * alpha * q * u[0] ** (q - 1))
        else:
            w0, w1, w2 = _one_sided_first(r[0], r[1], r[2])
            for j, wj in enumerate((w0, w1, w2)):
                set_entry(0, j, -2.0 / (n - 2) * wj)
            set_entry(0, 0, h[0] - mu * w.b * beta * (q + 1) / 2 * u[0] ** ((q - 1) / 2))
        w0, w1, w2 = _one_sided_first(r[-1], r[-2], r[-3])
        for j, wj in zip((Mn - 1, Mn - 2, Mn - 3), (w0, w1, w2)):
            set_entry(Mn - 1, j, 2.0 / (n - 2) * wj)
        k_out = len(idx) - 1
        set_entry(
            Mn - 1,
            Mn - 1,
            h[k_out] - mu * w.b * beta * (q + 1) / 2 * u[-1] ** ((q - 1) / 2),
        )

        # rank-one couplings through alpha and beta
        dalpha = (1.0 - q) * I_alpha ** (-2.0 * q / (1.0 + q)) * uq * wts
        p1 = -mu * w.a * uq.copy()
        if is_ball:
            p1[-1] = 0.0
        else:
            p1[0] = 0.0
            p1[-1] = 0.0
        U = [p1]
        V = [dalpha]
        if I_beta > 0 and w.b != 0.0:
            dbeta = (
                (1.0 - q)
                / 2.0
                * I_beta ** ((-2.0 * q - 2.0) / (q + 3.0))
                * uh
                * sig
            )
            p2 = np.zeros(Mn)
            for b_idx in idx:
                p2[b_idx] = -mu * w.b * uh[b_idx]
            U.append(p2)
            V.append(dbeta)

        # mu column and normalization row
        col = np.zeros(Mn)
        col[1:-1] = -w.a * alpha * uq[1:-1]
        if is_ball:
            col[0] = -w.a * alpha * uq[0]
            col[-1] = -w.b * beta * uh[-1]
        else:
            col[0] = -w.b * beta * uh[0]
            col[-1] = -w.b * beta * uh[-1]
        row = 2.0 * w.a * alpha * uq * wts + 4.0 * (n - 1) * w.b * beta * uh * sig

        def band_solve(rhs):
            return solve_banded((2, 2), A, rhs)

        # Woodbury: B = A + sum U_k V_k^T
        Umat = np.stack(U, axis=1)
        Vmat = np.stack(V, axis=1)
        AiU = band_solve(Umat)
        core = np.eye(Umat.shape[1]) + Vmat.T @ AiU

        def B_solve(rhs):
            Ai = band_solve(rhs)
            return Ai - AiU @ np.linalg.solve(core, Vmat.T @ Ai)

        x1 = B_solve(F[:-1])
        x2 = B_solve(col)
        denom = row @ x2
        if abs(denom) < 1e-300:
            raise np.linalg.LinAlgError("singular bordered system")
        dmu = (F[-1] - row @ x1) / denom
        du = -x1 - x2 * dmu
        return du, dmu

    u, mu = u0.copy(), mu0
    F, rows = residual_vec(u, mu)
    it = 0
    for it in range(1, opts.newton_max_iter + 1):
        if np.max(np.abs(F)) <= opts.newton_tol:
            break
        du, dmu = solve_newton_step(u, mu, F, rows)
        t = 1.0
        norm0 = np.linalg.norm(F)
        for _ in range(40):
            u_try = np.abs(u + t * du)
            u_try = np.maximum(u_try, 1e-14 * np.max(u_try))
            mu_try = mu + t * dmu
            F_try, rows_try = residual_vec(u_try, mu_try)
            if np.linalg.norm(F_try) < (1.0 - 1e-4 * t) * norm0:
                u, mu, F, rows = u_try, mu_try, F_try, rows_try
                break
            t *= 0.5
        else:
            break
    return u, mu, it


# ---------------------------------------------------------------------------
# projected gradient + polish


def minimize_subcritical(
    prob: SubcriticalProblem,
    init: DiscreteField,
    opts: MinimizerOptions | None = None,
) -> MinimizerResult:
    """Minimize Q^q under the unit-denominator normalization.

    Projected gradient with Armijo backtracking does the global descent; the
    projection is an exact rescale (the constraint is quadratic under
    dilation of u).  A Newton polish then drives the strong-form
    Euler-Lagrange residual to roundoff.
    """
    opts = opts or MinimizerOptions()
    geom, w, q = prob.geometry, prob.weights, prob.q
    q_crit = geom.dim.q_critical
    if not (1.0 < q < q_crit):
        raise DomainError(
            f"minimize_subcritical requires 1 < q < {q_crit} strictly "
            "(compactness is lost at the critical exponent)"
        )
    if np.any(init.values <= 0.0):
        raise DomainError("initial field must be strictly positive")

    mesh = geom.mesh
    n = geom.dim.n
    idx, sigma, h = _boundary_data(geom)
    sig = np.zeros(len(mesh.nodes))
    hvec = np.zeros(len(mesh.nodes))
    for k, b_idx in enumerate(idx):
        sig[b_idx] = sigma[k]
        hvec[b_idx] = h[k]
    precond = mesh.volume_weights + sig

    def project(u):
        N, _, _ = normalization(u, prob)
        return u / math.sqrt(N)

    def grad_E(u):
        return (
            2.0 * _c_n(n) * _stiffness_apply(mesh, u)
            + 2.0 * geom.scalar_curvature * u * mesh.volume_weights
            + 4.0 * (n - 1) * hvec * sig * u
        )

    def grad_N(u):
        _, I_alpha, I_beta = normalization(u, prob)
        alpha, beta = _alpha_beta(prob, I_alpha, I_beta)
        return (
            2.0 * w.a * alpha * u**q * mesh.volume_weights
            + 4.0 * (n - 1) * w.b * beta * u ** ((q + 1) / 2) * sig
        )

    u = project(np.abs(init.values.astype(float)))
    E = energy(DiscreteField(u, mesh), geom)
    t = 1.0
    iterations = 0
    pg_budget = min(opts.pg_max_iter, opts.max_iter)
    for _ in range(pg_budget):
        d = grad_E(u) - E * grad_N(u)
        d_prec = d / precond
        slope = float(d @ d_prec)
        if slope <= 1e-24 * max(E * E, 1.0):
            break
        accepted = False
        t = min(t * 2.0, 1e6)
        for _ in range(60):
            v = np.abs(u - t * d_prec)
            v = np.maximum(v, 1e-14 * np.max(v))
            v = project(v)
            E_v = energy(DiscreteField(v, mesh), geom)
            if E_v <= E - opts.armijo_c * t * slope:
                accepted = True
                break
            t *= opts.backtrack
        iterations += 1
        if not accepted:
            break
        u, E = v, E_v
        if iterations % 25 == 0:
            res = el_residual(DiscreteField(u, mesh), prob, E)
            if res <= opts.tol:
                break

    mu = E
    if opts.polish:
        u, mu, newton_its = _newton_polish(u, mu, prob, opts)
        iterations += newton_its

    u_field = DiscreteField(u, mesh)
    res = el_residual(u_field, prob, mu)
    _, I_alpha, I_beta = normalization(u, prob)
    alpha, beta = _alpha_beta(prob, I_alpha, I_beta)
    return MinimizerResult(
        u=u_field,
        mu=mu,
        energy=energy(u_field, geom),
        el_residual=res,
        iterations=iterations,
        alpha_q=alpha,
        beta_q=beta,
        converged=bool(res <= opts.tol and np.all(u > 0.0)),
        q=q,
    )


# ---------------------------------------------------------------------------
# critical limit, curvatures, sweeps


def default_schedule(dim: Dim, steps: int = 7) -> list:
    q_crit = dim.q_critical
    return [q_crit - 0.5 * 2.0 ** (-k) for k in range(steps)]


@dataclass
class CriticalLimitResult:
    qs: list
    mus: list
    residuals: list
    iterations: list
    extrapolated: float
    converged: bool
    final: MinimizerResult
    flags: list = field(default_factory=list)


def _extrapolate(qs, mus, q_crit):
    """Richardson-style extrapolation mu(delta) -> delta = 0, fitted rate."""
    if len(mus) < 3:
        return mus[-1], False
    m0, m1, m2 = mus[-3], mus[-2], mus[-1]
    d1, d2 = m1 - m0, m2 - m1
    if d1 == 0 or d2 == 0 or d1 * d2 <= 0:
        return mus[-1], False
    ratio = d1 / d2
    if ratio <= 1.0:
        return mus[-1] + d2, False  # no decay detected; linear guess, flagged
    p = math.log2(ratio)
    return m2 + d2 / (2.0**p - 1.0), True


def critical_limit(
    geom: BackgroundGeometry,
    weights: Weights,
    schedule: list | None = None,
    opts: MinimizerOptions | None = None,
    init: DiscreteField | None = None,
) -> CriticalLimitResult:
    """Drive q up the schedule with warm starts and extrapolate mu_q to q_crit."""
    dim = geom.dim
    schedule = list(schedule) if schedule is not None else default_schedule(dim)
    q_crit = dim.q_critical
    if any(s2 <= s1 for s1, s2 in zip(schedule, schedule[1:])) or schedule[-1] >= q_crit:
        raise ConfigurationError("schedule must increase strictly toward q_crit, exclusive")

    u = init if init is not None else DiscreteField(np.ones_like(geom.mesh.nodes), geom.mesh)
    qs, mus, residuals, iters, flags = [], [], [], [], []
    final = None
    for q in schedule:
        prob = SubcriticalProblem(geom, weights, q)
        try:
            result = minimize_subcritical(prob, u, opts)
        except Exception as exc:  # partial results with flags
            flags.append(f"q={q}: {exc}")
            break
        qs.append(q)
        mus.append(result.mu)
        residuals.append(result.el_residual)
        iters.append(result.iterations)
        if not result.converged:
            flags.append(f"q={q}: residual {result.el_residual:.3e} above tolerance")
        u = result.u
        final = result
    extrapolated, ok = _extrapolate(qs, mus, q_crit)
    return CriticalLimitResult(
        qs=qs,
        mus=mus,
        residuals=residuals,
        iterations=iters,
        extrapolated=extrapolated,
        converged=ok and not flags,
        final=final,
        flags=flags,
    )


def conformal_curvatures(result: MinimizerResult, weights: Weights, geom: BackgroundGeometry):
    """Constant curvatures of the minimizing metric and the R_g=1 normalized h.

    R_g = a mu (int u^{2n/(n-2)} dmu)^{-2/n},
    h_g = b mu (int_bdry u^{2(n-1)/(n-2)} dsigma)^{-1/(n-1)},
    h_normalized = (b/sqrt(a)) sqrt(mu) (int u^{2n/(n-2)})^{1/n}
                   (int_bdry u^{2(n-1)/(n-2)})^{-1/(n-1)}.
    """
    n = geom.dim.n
    u = result.u.values
    idx, sigma, _ = _boundary_data(geom)
    I_M = geom.mesh.integrate(u ** (2 * n / (n - 2)))
    I_B = float(np.sum(sigma * u[idx] ** (2 * (n - 1) / (n - 2))))
    R_g = weights.a * result.mu * I_M ** (-2.0 / n)
    h_g = weights.b * result.mu * I_B ** (-1.0 / (n - 1))
    if weights.a == 0.0:
        h_norm = None  # normalized mean curvature undefined without interior weight
    else:
        h_norm = (
            weights.b
            / math.sqrt(weights.a)
            * math.sqrt(max(result.mu, 0.0))
            * I_M ** (1.0 / n)
            * I_B ** (-1.0 / (n - 1))
        )
    return R_g, h_g, h_norm


def sweep_ab(
    geom: BackgroundGeometry,
    a_values,
    b_values,
    schedule: list | None = None,
    opts: MinimizerOptions | None = None,
    monotone_rtol: float = 1e-3,
):
    """Tabulate Y estimates over a weight grid and check Prop-4.1 monotonicity."""
    rows = []
    for a in a_values:
        for b in b_values:
            cell = {"a": a, "b": b, "Y": None, "R_g": None, "h_g": None,
                    "h_normalized": None, "error": ""}
            try:
                w = Weights(a, b)
                lim = critical_limit(geom, w, schedule, opts)
                R_g, h_g, h_norm = conformal_curvatures(lim.final, w, geom)
                cell.update(Y=lim.extrapolated, R_g=R_g, h_g=h_g, h_normalized=h_norm)
                if lim.flags:
                    cell["error"] = "; ".join(lim.flags)
            except Exception as exc:
                cell["error"] = str(exc)
            rows.append(cell)

    def get(a, b):
        for row in rows:
            if row["a"] == a and row["b"] == b:
                return row["Y"]
        return None

    violations = []
    for b in b_values:
        ys = [get(a, b) for a in a_values]
        for (a1, y1), (a2, y2) in zip(zip(a_values, ys), zip(a_values[1:], ys[1:])):
            if y1 is not None and y2 is not None and y2 > y1 * (1 + monotone_rtol):
                violations.append(f"Y({a2},{b}) > Y({a1},{b})")
    for a in a_values:
        ys = [get(a, b) for b in b_values]
        for (b1, y1), (b2, y2) in zip(zip(b_values, ys), zip(b_values[1:], ys[1:])):
            if y1 is not None and y2 is not None and y2 > y1 * (1 + monotone_rtol):
                violations.append(f"Y({a},{b2}) > Y({a},{b1})")
    return {"rows": rows, "monotone": not violations, "violations": violations}


def closed_form_reference(weights: Weights, dim: Dim) -> float:
    """Closed-form half-space invariant (equals the ball's invariant)."""
    return yamabe_halfspace(weights, dim)
