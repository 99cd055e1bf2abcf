"""Discretization substrate: radial meshes, half-space grids, FD stencils.

Radial meshes carry quadrature weights that integrate piecewise-linear fields
against the measure omega_{n-1} r^{n-1} dr exactly (cell moments in closed
form), so constants reproduce ball/annulus volumes to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .halfspace import Dim, sphere_volume

__all__ = [
    "RadialMesh",
    "DiscreteField",
    "HalfGrid",
    "TensorField",
    "OrderEstimate",
    "make_ball_mesh",
    "make_annulus_mesh",
    "fd_derivative",
    "fd_laplacian",
    "estimate_order",
]

MIN_RADIAL_NODES = 16


@dataclass(frozen=True)
class RadialMesh:
    """Strictly increasing radii with exact piecewise-linear volume weights."""

    nodes: np.ndarray
    dim: Dim
    volume_weights: np.ndarray
    boundary_radii: tuple  # subset of (nodes[0], nodes[-1])

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    def boundary_measure(self, r_b: float) -> float:
        """(n-1)-measure of the boundary sphere of radius r_b."""
        n = self.dim.n
        return sphere_volume(n - 1) * r_b ** (n - 1)

    def integrate(self, values: np.ndarray) -> float:
        """Volume integral of nodal values (piecewise-linear in r)."""
        return float(np.dot(self.volume_weights, values))

    def boundary_nodes(self) -> list:
        out = []
        for r_b in self.boundary_radii:
            idx = 0 if abs(r_b - self.nodes[0]) < abs(r_b - self.nodes[-1]) else len(self.nodes) - 1
            out.append(idx)
        return out


@dataclass
class DiscreteField:
    """Nodal values on a radial mesh."""

    values: np.ndarray
    mesh: RadialMesh

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.mesh.nodes.shape:
            raise ConfigurationError("field/mesh size mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ConfigurationError("field contains non-finite values")


def _pl_weights(nodes: np.ndarray, n: int) -> np.ndarray:
    """Weights w with sum_i w_i u_i = omega_{n-1} * int I[u](r) r^{n-1} dr.

    I[u] is the piecewise-linear interpolant; the cell moments
    m0 = int r^{n-1}, m1 = int r^n are exact.
    """
    r0, r1 = nodes[:-1], nodes[1:]
    dr = r1 - r0
    m0 = (r1**n - r0**n) / n
    m1 = (r1 ** (n + 1) - r0 ** (n + 1)) / (n + 1)
    w = np.zeros_like(nodes)
    w[:-1] += (r1 * m0 - m1) / dr
    w[1:] += (m1 - r0 * m0) / dr
    return sphere_volume(n - 1) * w


def make_ball_mesh(M: int, dim: Dim, grading: float = 1.0) -> RadialMesh:
    """Unit-ball mesh on [0, 1], graded toward the boundary sphere r = 1."""
    if M < MIN_RADIAL_NODES:
        raise ConfigurationError(f"need at least {MIN_RADIAL_NODES} cells, got {M}")
    if grading < 1.0:
        raise ConfigurationError(f"grading must be >= 1, got {grading}")
    t = np.linspace(0.0, 1.0, M + 1)
    nodes = 1.0 - (1.0 - t) ** grading
    nodes[0], nodes[-1] = 0.0, 1.0
    return RadialMesh(
        nodes=nodes,
        dim=dim,
        volume_weights=_pl_weights(nodes, dim.n),
        boundary_radii=(1.0,),
    )


def make_annulus_mesh(M: int, dim: Dim, r_in: float, r_out: float) -> RadialMesh:
    """Annulus mesh; both spheres are boundary.

    Sign convention: the outer sphere has mean curvature +1/r_out, the inner
    sphere -1/r_in (outward normal points toward the origin there); Euclidean
    balls have positive boundary mean curvature.
    """
    if M < MIN_RADIAL_NODES:
        raise ConfigurationError(f"need at least {MIN_RADIAL_NODES} cells, got {M}")
    if not (0.0 < r_in < r_out):
        raise ConfigurationError(f"need 0 < r_in < r_out, got ({r_in}, {r_out})")
    nodes = np.linspace(r_in, r_out, M + 1)
    return RadialMesh(
        nodes=nodes,
        dim=dim,
        volume_weights=_pl_weights(nodes, dim.n),
        boundary_radii=(r_in, r_out),
    )


def mean_curvature_convention(mesh: RadialMesh) -> dict:
    """Boundary mean curvature h per boundary radius for flat model meshes."""
    out = {}
    for r_b in mesh.boundary_radii:
        if r_b == mesh.nodes[-1]:
            out[r_b] = 1.0 / r_b
        else:
            out[r_b] = -1.0 / r_b
    return out


# ---------------------------------------------------------------------------
# Half-space grids


@dataclass(frozen=True)
class HalfGrid:
    """Uniform grid on [-L, L]^{n-1} x [0, L]; component axes come first."""

    h: float
    half_extent: float
    dim: Dim = field(default_factory=lambda: Dim(3))

    def __post_init__(self):
        if self.dim.n > 7:
            raise ConfigurationError("half-space grids support n <= 7")
        if self.h <= 0 or self.half_extent <= 0:
            raise ConfigurationError("spacing and extent must be positive")
        if self.points_per_lateral_axis < 8 + 2:
            raise ConfigurationError("need at least 8 interior points per axis")

    @property
    def points_per_lateral_axis(self) -> int:
        return int(round(2 * self.half_extent / self.h)) + 1

    @property
    def points_normal_axis(self) -> int:
        return int(round(self.half_extent / self.h)) + 1

    def refined(self, factor: int = 2) -> "HalfGrid":
        return HalfGrid(self.h / factor, self.half_extent, self.dim)

    def axes(self):
        L, h = self.half_extent, self.h
        lat = np.linspace(-L, L, self.points_per_lateral_axis)
        nor = np.linspace(0.0, L, self.points_normal_axis)
        return [lat] * (self.dim.n - 1) + [nor]

    def coords(self) -> np.ndarray:
        """Coordinate array of shape (n, *grid_shape)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=0)

    def interior_mask(self, margin: float = 0.0) -> np.ndarray:
        """True away from lateral faces (and >= margin from them).

        The normal face y^n = 0 is kept: it is the manifold boundary, handled
        by one-sided stencils, not an artificial truncation.
        """
        Y = self.coords()
        L = self.half_extent
        m = max(margin, self.h)
        mask = np.ones(Y.shape[1:], dtype=bool)
        for a in range(self.dim.n - 1):
            mask &= np.abs(Y[a]) <= L - m + 1e-12
        mask &= Y[-1] <= L - m + 1e-12
        return mask


@dataclass
class TensorField:
    """Component samples on a half-grid; rank 0, 1 or 2 (symmetric).

    Rank-2 data is stored as the full (n, n, ...) array but must be symmetric;
    higher-rank intermediates in the identity checks use raw ndarrays.
    """

    rank: int
    data: np.ndarray
    grid: HalfGrid

    def __post_init__(self):
        n = self.grid.dim.n
        expected = {0: (), 1: (n,), 2: (n, n)}[self.rank]
        if self.data.shape[: self.rank] != expected:
            raise ConfigurationError(
                f"rank-{self.rank} field has component shape {self.data.shape[: self.rank]}"
            )
        if self.rank == 2 and not np.allclose(
            self.data, np.swapaxes(self.data, 0, 1), atol=1e-12
        ):
            raise ConfigurationError("rank-2 tensor field must be symmetric")


def fd_derivative(values: np.ndarray, grid: HalfGrid, axis: int) -> np.ndarray:
    """Second-order first derivative along a grid axis.

    Centered in the interior, 3-point one-sided at the ends (np.gradient with
    edge_order=2); callers exclude the lateral halo via interior_mask.
    """
    if values.shape[axis] < 3:
        raise ConfigurationError("grid too small for a second-order stencil")
    return np.gradient(values, grid.h, axis=axis, edge_order=2)


def fd_laplacian(values: np.ndarray, grid: HalfGrid) -> np.ndarray:
    n = grid.dim.n
    out = np.zeros_like(values)
    for axis in range(n):
        out += fd_derivative(fd_derivative(values, grid, axis), grid, axis)
    return out


@dataclass(frozen=True)
class OrderEstimate:
    """Observed convergence order between residuals at h and h/2."""

    residual_h: float
    residual_h2: float
    exact_floor: float = 1e-13

    @property
    def is_exact(self) -> bool:
        return self.residual_h <= self.exact_floor and self.residual_h2 <= self.exact_floor

    @property
    def order(self):
        if self.is_exact:
            return None
        return float(np.log2(self.residual_h / self.residual_h2))


def estimate_order(res_h: float, res_h2: float) -> OrderEstimate:
    if res_h < 0 or res_h2 < 0:
        raise ConfigurationError("residuals must be nonnegative")
    return OrderEstimate(residual_h=res_h, residual_h2=res_h2)
