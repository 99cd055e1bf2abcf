"""Subcritical scheme: energies, minimizer, critical extrapolation, sweeps."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from capyamabe import (
    Dim,
    DiscreteField,
    DomainError,
    MinimizerOptions,
    SubcriticalProblem,
    Weights,
    conformal_curvatures,
    critical_limit,
    default_schedule,
    el_residual,
    energy,
    flat_annulus_geometry,
    flat_ball_geometry,
    minimize_subcritical,
    quotient_q,
    sweep_ab,
    yamabe_halfspace,
)

# frozen oracle: scipy shooting solve of the radial strong-form system on the
# unit ball, n=3, (a,b)=(1,0), q=4.5 (solve_ivp rtol 1e-12 + brentq on the
# Robin mismatch + quad normalization), computed once and locked
MU_SHOOTING_10_Q45 = 26.539072422107985


@pytest.fixture(scope="module")
def ball():
    return flat_ball_geometry(400, Dim(3))


def ones(geom):
    return DiscreteField(np.ones_like(geom.mesh.nodes), geom.mesh)


class TestEnergyAndQuotient:
    def test_constant_field_energy_is_boundary_term(self, ball):
        # E[1] = 2(n-1) * h * |boundary| = 4 * 4pi
        assert energy(ones(ball), ball) == pytest.approx(16 * math.pi, rel=1e-12)

    def test_constant_field_quotient_closed_form(self, ball):
        a, b = 1.3, 0.7
        prob = SubcriticalProblem(ball, Weights(a, b), 5.0)
        expected = 16 * math.pi / (
            a * (4 * math.pi / 3) ** (1 / 3) + 4 * b * math.sqrt(4 * math.pi)
        )
        assert quotient_q(ones(ball), prob) == pytest.approx(expected, rel=1e-10)

    def test_quotient_scale_invariance(self, ball):
        prob = SubcriticalProblem(ball, Weights(1.0, 1.0), 4.0)
        u = ones(ball)
        base = quotient_q(u, prob)
        for c in (0.2, 3.0, 17.0):
            scaled = DiscreteField(c * u.values, ball.mesh)
            assert quotient_q(scaled, prob) == pytest.approx(base, rel=1e-12)

    @given(c=st.floats(0.1, 10.0), q=st.floats(2.0, 4.9))
    @settings(max_examples=15, deadline=None)
    def test_quotient_scale_invariance_property(self, ball, c, q):
        prob = SubcriticalProblem(ball, Weights(1.0, 0.5), q)
        rng = np.random.default_rng(1)
        u = DiscreteField(1.0 + 0.3 * rng.random(ball.mesh.M + 1), ball.mesh)
        scaled = DiscreteField(c * u.values, ball.mesh)
        assert quotient_q(scaled, prob) == pytest.approx(quotient_q(u, prob), rel=1e-11)

    def test_zero_field_rejected(self, ball):
        prob = SubcriticalProblem(ball, Weights(1.0, 1.0), 4.0)
        with pytest.raises(DomainError):
            quotient_q(DiscreteField(np.zeros(ball.mesh.M + 1), ball.mesh), prob)

    def test_exponent_domain(self, ball):
        with pytest.raises(DomainError):
            SubcriticalProblem(ball, Weights(1.0, 1.0), 1.0)
        with pytest.raises(DomainError):
            SubcriticalProblem(ball, Weights(1.0, 1.0), 5.2)


class TestMinimizer:
    def test_against_shooting_oracle(self):
        geom = flat_ball_geometry(2000, Dim(3))
        prob = SubcriticalProblem(geom, Weights(1.0, 0.0), 4.5)
        res = minimize_subcritical(prob, ones(geom))
        assert res.converged
        assert res.el_residual <= 1e-6
        assert res.mu == pytest.approx(MU_SHOOTING_10_Q45, rel=1e-5)

    def test_minimizer_beats_constant_and_normalizes(self, ball):
        prob = SubcriticalProblem(ball, Weights(1.0, 1.0), 4.5)
        res = minimize_subcritical(prob, ones(ball))
        assert res.converged
        assert res.mu < quotient_q(ones(ball), prob)
        from capyamabe.variational import normalization

        N, _, _ = normalization(res.u.values, prob)
        assert N == pytest.approx(1.0, abs=1e-10)
        assert np.all(res.u.values > 0)
        # mu agrees with the quotient at the minimizer up to mesh error
        assert res.mu == pytest.approx(quotient_q(res.u, prob), rel=1e-6)

    def test_boundary_only_weights(self, ball):
        prob = SubcriticalProblem(ball, Weights(0.0, 1.0), 4.5)
        res = minimize_subcritical(prob, ones(ball))
        assert res.converged
        assert res.el_residual <= 1e-6

    def test_seeded_init_reaches_same_minimum(self, ball):
        prob = SubcriticalProblem(ball, Weights(1.0, 1.0), 4.0)
        base = minimize_subcritical(prob, ones(ball))
        rng = np.random.default_rng(11)
        noisy = DiscreteField(1.0 + 0.05 * rng.random(ball.mesh.M + 1), ball.mesh)
        other = minimize_subcritical(prob, noisy)
        assert other.mu == pytest.approx(base.mu, rel=1e-9)

    def test_critical_exponent_rejected(self, ball):
        prob = SubcriticalProblem(ball, Weights(1.0, 1.0), Dim(3).q_critical)
        with pytest.raises(DomainError):
            minimize_subcritical(prob, ones(ball))

    def test_nonpositive_init_rejected(self, ball):
        prob = SubcriticalProblem(ball, Weights(1.0, 1.0), 4.0)
        bad = DiscreteField(np.linspace(-0.1, 1.0, ball.mesh.M + 1), ball.mesh)
        with pytest.raises(DomainError):
            minimize_subcritical(prob, bad)

    def test_el_residual_detects_perturbation(self, ball):
        prob = SubcriticalProblem(ball, Weights(1.0, 1.0), 4.0)
        res = minimize_subcritical(prob, ones(ball))
        bump = 1 + 1e-3 * np.sin(3 * np.pi * ball.mesh.nodes)
        bumped = DiscreteField(res.u.values * bump, ball.mesh)
        assert el_residual(bumped, prob, res.mu) > 10 * res.el_residual


class TestCriticalLimit:
    def test_ball_extrapolates_to_halfspace_invariant(self, ball):
        w = Weights(1.0, 1.0)
        lim = critical_limit(ball, w)
        y = yamabe_halfspace(w, Dim(3))
        assert lim.converged
        assert abs(lim.extrapolated - y) / y <= 0.02
        # mu_q increases toward the critical value from below
        assert all(m2 > m1 for m1, m2 in zip(lim.mus, lim.mus[1:]))
        assert lim.mus[-1] <= lim.extrapolated <= y

    def test_boundary_only_limit(self, ball):
        w = Weights(0.0, 1.0)
        lim = critical_limit(ball, w)
        y = yamabe_halfspace(w, Dim(3))  # 2 sqrt(pi)
        assert abs(lim.extrapolated - y) / y <= 1e-3

    def test_annulus_respects_halfspace_upper_bound(self):
        geom = flat_annulus_geometry(300, Dim(3), 0.5, 1.0)
        w = Weights(1.0, 1.0)
        lim = critical_limit(geom, w)
        assert lim.converged
        assert lim.extrapolated <= yamabe_halfspace(w, Dim(3)) + 1e-6

    def test_default_schedule_shape(self):
        sched = default_schedule(Dim(3))
        assert len(sched) == 7
        assert sched[0] == pytest.approx(4.5)
        assert all(s < Dim(3).q_critical for s in sched)
        assert all(b > a for a, b in zip(sched, sched[1:]))

    def test_bad_schedule_rejected(self, ball):
        from capyamabe import ConfigurationError

        with pytest.raises(ConfigurationError):
            critical_limit(ball, Weights(1.0, 1.0), schedule=[4.5, 4.0])
        with pytest.raises(ConfigurationError):
            critical_limit(ball, Weights(1.0, 1.0), schedule=[4.5, 5.0])


class TestConformalCurvatures:
    def test_positive_constants_on_ball(self, ball):
        w = Weights(1.0, 1.0)
        lim = critical_limit(ball, w)
        R_g, h_g, h_norm = conformal_curvatures(lim.final, w, ball)
        assert R_g > 0 and h_g > 0 and h_norm > 0

    def test_normalized_mean_curvature_ratio(self, ball):
        # h_normalized = (b/sqrt(a)) sqrt(mu) I_M^{1/n} I_B^{-1/(n-1)}
        # is h_g / sqrt(R_g) up to the weight bookkeeping: check consistency
        w = Weights(2.0, 0.5)
        lim = critical_limit(ball, w)
        R_g, h_g, h_norm = conformal_curvatures(lim.final, w, ball)
        assert h_norm == pytest.approx(h_g / math.sqrt(R_g), rel=1e-10)

    def test_undefined_without_interior_weight(self, ball):
        w = Weights(0.0, 1.0)
        lim = critical_limit(ball, w)
        _, h_g, h_norm = conformal_curvatures(lim.final, w, ball)
        assert h_norm is None
        assert h_g > 0


class TestSweep:
    def test_small_sweep_monotone(self):
        geom = flat_ball_geometry(200, Dim(3))
        out = sweep_ab(geom, [1.0, 2.0], [1.0, 2.0])
        assert out["monotone"], out["violations"]
        assert all(not r["error"] for r in out["rows"])

    def test_b0_column_matches_closed_form(self):
        geom = flat_ball_geometry(300, Dim(3))
        out = sweep_ab(geom, [1.0], [0.0, 1.0])
        cell = next(r for r in out["rows"] if r["b"] == 0.0)
        y = yamabe_halfspace(Weights(1.0, 0.0), Dim(3))
        assert abs(cell["Y"] - y) / y <= 0.02
