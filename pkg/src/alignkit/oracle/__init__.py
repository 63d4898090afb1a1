"""Exact oracles: tiny discrete worlds solved by enumeration, and 1D
quadrature for smoothed-divergence checks. Everything here is plain numpy and
independent of the autodiff/loss stack it is used to audit."""

from .discrete import (
    DiscreteWorld,
    VaubResult,
    entropy_cov_check,
    fixed_prior_decomposition_check,
    gjsd_exact,
    mi_reconstruction_check,
    optimal_variational,
    random_world,
    vaub_exact,
    with_variational,
)
from .quadrature import (
    LANDSCAPE_FAMILIES,
    GridCoverageWarning,
    Landscape,
    Quadrature1D,
    count_local_minima,
    default_grid,
    entropy_quadrature,
    gjsd_quadrature,
    jsd_quadrature,
    make_latent_line_world,
    njsd_landscape,
    njsd_quadrature,
    noisy_bound_check,
    nsj,
)
from .suite import (
    CheckResult,
    discrete_identity_checks,
    run_suite,
    smoothed_jsd_checks,
)

__all__ = [
    "LANDSCAPE_FAMILIES",
    "DiscreteWorld",
    "VaubResult",
    "entropy_cov_check",
    "fixed_prior_decomposition_check",
    "gjsd_exact",
    "mi_reconstruction_check",
    "optimal_variational",
    "random_world",
    "vaub_exact",
    "with_variational",
    "GridCoverageWarning",
    "Landscape",
    "Quadrature1D",
    "count_local_minima",
    "default_grid",
    "entropy_quadrature",
    "gjsd_quadrature",
    "jsd_quadrature",
    "make_latent_line_world",
    "njsd_landscape",
    "njsd_quadrature",
    "noisy_bound_check",
    "nsj",
    "CheckResult",
    "discrete_identity_checks",
    "run_suite",
    "smoothed_jsd_checks",
]
