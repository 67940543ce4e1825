"""Accelerated gradient methods with explicit, auditable linear-rate certificates."""
from .certificates import (
    CertificateSeries,
    FixedStepCertificate,
    c_inf_at,
    c_limit,
    certificate_series,
    comparison_rates,
    d_inf_at,
    d_limit,
    lambda_of,
    rho_at,
    rho_fixed,
)
from .problems import composite_lasso, logistic_problem, quadratic_problem, reference_optimum
from .schedules import RateParams, make_schedule, validate_nesterov_rule
from .solvers import run

__version__ = "0.1.0"
