"""Two-constant boundary curvature invariants on model half-space geometries.

Closed-form spherical-cap invariants, the extremal bubble and its exact
identities, a subcritical variational scheme on radial model manifolds,
pointwise verification of the second-variation tensor identities, and the
mass of asymptotically flat half-space metrics.
"""

from .errors import ConfigurationError, DomainError, NonConvergenceError
from .halfspace import (
    CapSolution,
    Dim,
    Weights,
    cap_A,
    cap_A_quadrature,
    cap_B,
    cap_f,
    cap_identity_residual,
    solve_cap,
    sphere_volume,
    yamabe_halfspace,
)
from .bubble import (
    Bubble,
    bubble_energy,
    bubble_energy_quadrature,
    bubble_eval,
    stereo_lift,
    verify_bubble_pde,
    verify_stereo_conformal,
)
from .numerics import (
    DiscreteField,
    HalfGrid,
    OrderEstimate,
    RadialMesh,
    TensorField,
    estimate_order,
    fd_derivative,
    fd_laplacian,
    make_annulus_mesh,
    make_ball_mesh,
)
from .variational import (
    BackgroundGeometry,
    CriticalLimitResult,
    MinimizerOptions,
    MinimizerResult,
    SubcriticalProblem,
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
)
from .geometry_checks import (
    AdmissibleVectorField,
    KillingPair,
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
from .mass_flux import (
    AsymptoticMetric,
    FluxResult,
    RadialProfile,
    boundary_cross_metric,
    conformally_flat_metric,
    equator_rule,
    flat_metric,
    flux_I,
    hemisphere_rule,
    mass,
)

__version__ = "0.1.0"
