"""Inference engines: MAP, full-data and subsampling MCMC, variational Bayes."""

from .mcmc import (
    ADAPTIVE_RW,
    STATIONARY_RW,
    ChainOutput,
    fulldata_mcmc,
    random_walk_chain,
    subsampling_mcmc,
)
from .posterior import (
    PriorSpec,
    covariance_from_curvature,
    finite_difference_hessian,
    laplace_approximation,
    log_posterior,
    log_prior_phi,
    map_estimate,
)
from .proposals import (
    grad_phi_to_grad_psi,
    jacobian_dpsi_dphi,
    log_det_dpsi_dphi,
    map_covariance_to_psi,
    phi_from_psi,
    psi_from_phi,
    psi_from_theta,
    stationary_constrained_propose,
    theta_from_psi,
)
from .vb import (
    VariationalState,
    elbo_estimate,
    entropy_gradients,
    optimize_gaussian_vb,
    vb_optimize,
)

__all__ = [
    "ADAPTIVE_RW",
    "STATIONARY_RW",
    "ChainOutput",
    "PriorSpec",
    "VariationalState",
    "covariance_from_curvature",
    "elbo_estimate",
    "entropy_gradients",
    "finite_difference_hessian",
    "fulldata_mcmc",
    "grad_phi_to_grad_psi",
    "jacobian_dpsi_dphi",
    "laplace_approximation",
    "log_det_dpsi_dphi",
    "log_posterior",
    "log_prior_phi",
    "map_covariance_to_psi",
    "map_estimate",
    "optimize_gaussian_vb",
    "phi_from_psi",
    "psi_from_phi",
    "psi_from_theta",
    "random_walk_chain",
    "stationary_constrained_propose",
    "subsampling_mcmc",
    "theta_from_psi",
    "vb_optimize",
]
