"""Pointwise identity verification: Killing deviations, linearized curvature
operators, boundary flux relations, and the second-variation divergence
identity, all against the explicit bubble."""

import numpy as np
import pytest
import sympy as sp

from capyamabe import (
    Bubble,
    ConfigurationError,
    Dim,
    DomainError,
    HalfGrid,
    TensorField,
    Weights,
)
from capyamabe.geometry_checks import (
    AdmissibleVectorField,
    PerturbationTensor,
    boundary_flux_field,
    conformal_killing,
    correction_psi,
    dilation_field,
    killing_pair,
    q_tensor,
    random_cubic_field,
    taylor_perturbation,
    translation_field,
    verify_ST_boundary,
    verify_einstein_identity,
    verify_linearized_mean,
    verify_linearized_scalar,
    verify_second_variation,
    xi_boundary_residual,
    xi_field,
    zero_field,
    zero_perturbation,
)


@pytest.fixture(scope="module")
def dim():
    return Dim(3)


@pytest.fixture(scope="module")
def bubble(dim):
    return Bubble.from_weights(Weights(1.0, 1.0), dim)


@pytest.fixture(scope="module")
def grid(dim):
    return HalfGrid(h=0.25, half_extent=2.0, dim=dim)


@pytest.fixture(scope="module")
def plane_points(dim):
    rng = np.random.default_rng(2)
    Yb = np.zeros((dim.n, 60))
    Yb[:-1] = rng.uniform(-3.0, 3.0, (dim.n - 1, 60))
    return Yb


@pytest.fixture(scope="module")
def interior_points(dim):
    rng = np.random.default_rng(4)
    Y = rng.uniform(-3.0, 3.0, (dim.n, 80))
    Y[-1] = np.abs(Y[-1])
    return Y


class TestAdmissibility:
    def test_normal_shear_rejected(self, dim):
        y = sp.symbols("y1 y2 y3")
        # d_n V_0 = 1 on the plane: inadmissible
        with pytest.raises(DomainError):
            AdmissibleVectorField((y[2], sp.Integer(0), sp.Integer(0)), dim)

    def test_normal_component_on_plane_rejected(self, dim):
        with pytest.raises(DomainError):
            AdmissibleVectorField(
                (sp.Integer(0), sp.Integer(0), sp.Integer(1)), dim
            )

    def test_factories_are_admissible(self, dim, bubble):
        for V in (
            zero_field(dim),
            dilation_field(dim),
            translation_field(dim, 1),
            random_cubic_field(dim, seed=5),
            boundary_flux_field(bubble),
        ):
            assert V.admissibility_residual() <= 1e-10

    def test_translation_must_be_tangential(self, dim):
        with pytest.raises(DomainError):
            translation_field(dim, axis=2)

    def test_addition_preserves_admissibility(self, dim):
        V = dilation_field(dim) + random_cubic_field(dim, seed=1)
        assert V.admissibility_residual() <= 1e-10


class TestKillingDeviation:
    def test_dilation_is_conformal_killing(self, dim, grid):
        S = conformal_killing(dilation_field(dim), grid)
        assert np.max(np.abs(S.data)) <= 1e-13

    def test_translation_is_killing(self, dim, grid):
        S = conformal_killing(translation_field(dim, 0), grid)
        assert np.max(np.abs(S.data)) <= 1e-13

    def test_trace_free_and_symmetric(self, dim, grid):
        S = conformal_killing(random_cubic_field(dim, seed=7), grid)
        assert np.max(np.abs(np.einsum("ii...->...", S.data))) <= 1e-12
        assert np.max(np.abs(S.data - np.swapaxes(S.data, 0, 1))) <= 1e-13

    def test_matches_finite_differences_of_field(self, dim, bubble):
        V = random_cubic_field(dim, seed=9)

        def S_num(h):
            rng = np.random.default_rng(0)
            Y = rng.uniform(0.2, 1.5, (3, 10))
            jac = np.empty((3, 3, 10))
            for j in range(3):
                e = np.zeros((3, 1))
                e[j] = h
                jac[:, j] = (V.values(Y + e) - V.values(Y - e)) / (2 * h)
            div = np.einsum("mm...->...", jac)
            S = jac + np.swapaxes(jac, 0, 1) - (2 / 3) * div * np.eye(3)[..., None]
            exact = V.jac(Y)
            Sx = exact + np.swapaxes(exact, 0, 1) - (2 / 3) * np.einsum(
                "mm...->...", exact
            ) * np.eye(3)[..., None]
            return float(np.max(np.abs(S - Sx)))

        # centered differences are exact on polynomials of degree <= 3, so
        # the analytic Jacobian must agree to roundoff
        assert S_num(1e-2) <= 1e-9

    def test_additivity(self, dim, grid):
        V1 = random_cubic_field(dim, seed=1)
        V2 = random_cubic_field(dim, seed=2)
        S1 = conformal_killing(V1, grid).data
        S2 = conformal_killing(V2, grid).data
        S12 = conformal_killing(V1 + V2, grid).data
        assert np.max(np.abs(S12 - S1 - S2)) <= 1e-11


class TestCorrectionPsi:
    def test_zero_field_gives_zero(self, dim, bubble, grid):
        psi = correction_psi(zero_field(dim), bubble, grid)
        assert np.max(np.abs(psi.data)) == 0.0

    def test_dilation_is_scale_derivative(self, dim, grid):
        # for V = y, psi equals -eps d/d(eps) W_eps at eps = 1
        bub = Bubble(1.0, -2.0, dim)
        psi = correction_psi(dilation_field(dim), bub, grid).data
        Y = grid.coords()
        h = 1e-6
        deps = (Bubble(1 + h, -2.0, dim).value(Y) - Bubble(1 - h, -2.0, dim).value(Y)) / (
            2 * h
        )
        assert np.max(np.abs(psi + deps)) <= 1e-8

    def test_vanishing_convention(self, dim, bubble, grid):
        psi = correction_psi(dilation_field(dim), bubble, grid, convention="vanishing")
        assert np.max(np.abs(psi.data)) == 0.0
        with pytest.raises(ConfigurationError):
            correction_psi(dilation_field(dim), bubble, grid, convention="bogus")


class TestEinsteinIdentity:
    def test_residual_at_roundoff(self, bubble, interior_points):
        assert verify_einstein_identity(bubble, interior_points) <= 1e-9

    def test_scale_free_in_concentration(self, dim, interior_points):
        for eps in (1.0, 0.05):
            bub = Bubble(eps, -1.5, dim)
            assert verify_einstein_identity(bub, interior_points) <= 1e-9

    def test_higher_dimensions(self, interior_points):
        for n in (4, 5):
            rng = np.random.default_rng(6)
            Y = rng.uniform(0.1, 3.0, (n, 50))
            bub = Bubble.from_weights(Weights(1.0, 1.0), Dim(n))
            assert verify_einstein_identity(bub, Y) <= 1e-9


class TestLinearizedScalar:
    @pytest.mark.parametrize("seed", [0, 3])
    def test_analytic_exact_for_cubic(self, dim, bubble, grid, seed):
        oe = verify_linearized_scalar(random_cubic_field(dim, seed), bubble, grid)
        assert oe.is_exact

    def test_analytic_exact_for_symmetries(self, dim, bubble, grid):
        for V in (dilation_field(dim), translation_field(dim, 0)):
            assert verify_linearized_scalar(V, bubble, grid).is_exact

    def test_fd_mode_second_order(self, dim, bubble, grid):
        oe = verify_linearized_scalar(
            random_cubic_field(dim, seed=3), bubble, grid, mode="fd"
        )
        assert 1.7 <= oe.order <= 2.3

    def test_unknown_mode(self, dim, bubble, grid):
        with pytest.raises(ConfigurationError):
            verify_linearized_scalar(zero_field(dim), bubble, grid, mode="x")


class TestLinearizedMean:
    def test_analytic_exact(self, dim, bubble, grid):
        for V in (
            dilation_field(dim),
            random_cubic_field(dim, seed=3),
            boundary_flux_field(bubble),
        ):
            assert verify_linearized_mean(V, bubble, grid).is_exact

    def test_fd_mode_second_order(self, dim, bubble, grid):
        oe = verify_linearized_mean(
            random_cubic_field(dim, seed=3), bubble, grid, mode="fd"
        )
        assert 1.7 <= oe.order <= 2.3


class TestBoundaryRelations:
    def test_any_admissible_field_tangential_relations(self, dim, bubble, plane_points):
        out = verify_ST_boundary(random_cubic_field(dim, seed=3), bubble, plane_points)
        assert out["S_an"] <= 1e-12
        assert out["T_an"] <= 1e-12
        assert out["dn_S_ab"] <= 1e-12

    def test_flux_field_satisfies_normal_derivative_relation(
        self, bubble, plane_points
    ):
        out = verify_ST_boundary(boundary_flux_field(bubble), bubble, plane_points)
        assert all(v <= 1e-12 for v in out.values()), out

    def test_generic_field_fails_normal_relation(self, dim, bubble, plane_points):
        out = verify_ST_boundary(random_cubic_field(dim, seed=3), bubble, plane_points)
        assert out["dn_S_nn"] > 1e-2  # negative control

    def test_dilation_trivial(self, dim, bubble, plane_points):
        out = verify_ST_boundary(dilation_field(dim), bubble, plane_points)
        assert all(v <= 1e-13 for v in out.values())

    def test_rejects_off_plane_points(self, dim, bubble):
        Y = np.full((3, 4), 0.3)
        with pytest.raises(DomainError):
            verify_ST_boundary(dilation_field(dim), bubble, Y)


class TestQTensor:
    def test_zero_for_trivial_pairing(self, dim, bubble, grid):
        H = zero_perturbation(dim)
        pair = killing_pair(zero_field(dim), H, bubble, grid)
        Q = q_tensor(pair.T, bubble, grid)
        assert np.max(np.abs(Q)) == 0.0

    def test_symmetric_in_first_pair(self, dim, bubble, grid):
        T = conformal_killing(random_cubic_field(dim, seed=5), grid)
        Q = q_tensor(T, bubble, grid)
        assert np.max(np.abs(Q - np.swapaxes(Q, 0, 1))) <= 1e-11

    def test_linearity(self, dim, bubble, grid):
        T = conformal_killing(random_cubic_field(dim, seed=5), grid)
        T2 = TensorField(rank=2, data=2.0 * T.data, grid=grid)
        assert np.max(
            np.abs(q_tensor(T2, bubble, grid) - 2.0 * q_tensor(T, bubble, grid))
        ) <= 1e-11

    def test_rejects_traceful_input(self, dim, bubble, grid):
        data = np.zeros((3, 3) + grid.coords().shape[1:])
        for i in range(3):
            data[i, i] = 1.0
        with pytest.raises(DomainError):
            q_tensor(TensorField(rank=2, data=data, grid=grid), bubble, grid)


class TestXiFlux:
    def test_zero_for_trivial_data(self, dim, bubble, grid):
        xi = xi_field(zero_field(dim), bubble, grid)
        assert np.max(np.abs(xi.data)) == 0.0

    def test_boundary_normal_component_relation(self, dim, bubble, plane_points):
        V = boundary_flux_field(bubble)
        H = taylor_perturbation(dim, seed=1)
        assert xi_boundary_residual(V, bubble, plane_points, H) <= 1e-12

    def test_tangential_trace_needed(self, dim, bubble, plane_points):
        # H = S fails the boundary hypotheses: the relation must break
        V = boundary_flux_field(bubble)
        assert xi_boundary_residual(V, bubble, plane_points) > 1e-2

    def test_rejects_off_plane_points(self, dim, bubble):
        Y = np.full((3, 4), 0.3)
        with pytest.raises(DomainError):
            xi_boundary_residual(dilation_field(dim), bubble, Y)


class TestSecondVariation:
    def test_divergence_identity_second_order(self, dim, bubble, grid):
        oe = verify_second_variation(random_cubic_field(dim, seed=3), bubble, grid)
        assert 1.7 <= oe.order <= 2.3

    def test_dilation_vanishing_convention_exact(self, dim, bubble, grid):
        oe = verify_second_variation(
            dilation_field(dim), bubble, grid, psi_convention="vanishing"
        )
        assert oe.is_exact

    def test_translation_converges(self, dim, bubble, grid):
        # one-sided boundary stencils drag the observed rate slightly below 2
        oe = verify_second_variation(translation_field(dim, 0), bubble, grid)
        assert 1.5 <= oe.order <= 2.4

    def test_incompatible_perturbation_rejected(self, dim, bubble, grid):
        with pytest.raises(DomainError):
            verify_second_variation(
                zero_field(dim), bubble, grid, H=taylor_perturbation(dim, seed=1)
            )

    def test_unknown_convention(self, dim, bubble, grid):
        with pytest.raises(ConfigurationError):
            verify_second_variation(
                zero_field(dim), bubble, grid, psi_convention="bogus"
            )


class TestPerturbationTensor:
    def test_taylor_properties(self, dim, grid):
        H = taylor_perturbation(dim, seed=1)
        vals = H.values(grid.coords())
        assert np.max(np.abs(np.einsum("ii...->...", vals))) <= 1e-12
        assert np.max(np.abs(vals - np.swapaxes(vals, 0, 1))) <= 1e-13
        # H_in = 0 identically
        assert np.max(np.abs(vals[:, -1])) <= 1e-13

    def test_symmetry_violation_rejected(self, dim):
        y = sp.symbols("y1 y2 y3")
        flat = [sp.Integer(0)] * 9
        flat[0 * 3 + 1] = y[2]  # H_01 without the matching H_10
        with pytest.raises(DomainError):
            PerturbationTensor(tuple(flat), dim)
