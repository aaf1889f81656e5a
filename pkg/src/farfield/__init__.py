"""Numerical laboratory for far-field expansions of fully nonlinear
uniformly elliptic equations F(D^2 u) = 0 on exterior (box-annulus)
domains: solvers, planted oracles, expansion fitting, decay-rate and
inversion-identity diagnostics.
"""

from .operators import (
    SymMatrix,
    EllipticOperator,
    LinearOp,
    BellmanMaxOp,
    PucciPlusOp,
    PucciMinusOp,
    EllipticityViolation,
    MetricConditionError,
    ellipticity_probe,
    metric_inverse,
    fundamental_value,
    fundamental_values,
    dipole_value,
    dipole_values,
)
from .exact_solutions import (
    PlantedExpansion,
    planted_residual_check,
    pucci_radial_exponent,
    pucci_radial_profile,
    pucci_radial_residual,
)
from .discretization import (
    AnnulusGrid,
    Field,
    AssemblyError,
    hessian_at,
    interior_hessians,
    assemble_residual,
    impose_boundary,
)
from .solver import (
    SolveReport,
    SolveError,
    ProbeReport,
    linear_solve,
    policy_iteration,
    newton_solve,
    solve_dirichlet,
    expanding_domain_probe,
)
from .linearization import (
    CoefficientField,
    linearized_coeffs,
    coeff_decay_rate,
    SubsolutionCertificate,
    CertificateError,
    subsolution_certificate,
    power_profile_hessian,
)
from .asymptotics import (
    ExpansionFit,
    FitError,
    estimate_far_hessian,
    fit_expansion,
    hessian_decay_probe,
    kelvin,
    kelvin_fn,
    kelvin_identity_gap,
)
from .rates import DecayFit, fit_loglog_slope, richardson_orders

__version__ = "0.1.0"
