"""Priors, log-posterior, MAP estimation, and Laplace curvature.

Priors are specified on the original parameters (half-normal scales on the
positive coefficients, a shifted gamma on the degrees of freedom) with an
indicator restricting support to the stationary region; the unconstrained
density adds the change-of-variables terms.  MAP optimisation runs in a
stationarity-respecting parameterisation so the search space has no hard
boundary.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from ..exceptions import (
    NonPositiveVariance,
    OptimizationFailure,
    SingularHessian,
)
from ..models import ParamVector, ReparamMap, default_presample, online_evaluate
from .proposals import grad_phi_to_grad_psi, phi_from_psi, psi_from_phi


@dataclass(frozen=True)
class PriorSpec:
    """Independent marginal priors on the original parameters.

    mu ~ Normal(0, mu_scale^2); omega, alpha_i, gamma_i, beta_j half-normal
    with the given scales; nu - 2 ~ Gamma(nu_shape, nu_rate).  The joint
    prior carries a stationarity indicator (zero density outside).  With
    ``flat=True`` the density is constant on the stationary region of the
    unconstrained space (testing mode; no change-of-variables terms).
    """

    mu_scale: float = 10.0
    omega_scale: float = 1.0
    alpha_scale: float = 0.2
    gamma_scale: float = 0.2
    beta_scale: float = 0.8
    nu_shape: float = 2.0
    nu_rate: float = 1.0
    flat: bool = False


def _halfnormal_logpdf(x, scale):
    return 0.5 * np.log(2.0 / np.pi) - np.log(scale) - x**2 / (2.0 * scale**2)


def log_prior_phi(spec, prior, phi, want_grad=False):
    """Log prior density of the unconstrained parameters (with Jacobian).

    Returns -inf outside the stationary region; the gradient (when
    requested) is only defined at interior points.
    """
    phi = np.asarray(phi, dtype=float)
    rmap = ReparamMap.for_spec(spec)
    theta = rmap.to_theta(phi)
    if spec.stationarity_margin(theta) <= 0:
        return (-np.inf, None) if want_grad else -np.inf
    if prior.flat:
        value = 0.0
        return (value, np.zeros(spec.dim)) if want_grad else value

    mu, omega, alpha, gamma, beta, nu = spec.unpack(theta)
    value = (
        -0.5 * np.log(2.0 * np.pi)
        - np.log(prior.mu_scale)
        - mu**2 / (2.0 * prior.mu_scale**2)
    )
    value += _halfnormal_logpdf(omega, prior.omega_scale)
    value += _halfnormal_logpdf(alpha, prior.alpha_scale).sum()
    if gamma is not None:
        value += _halfnormal_logpdf(gamma, prior.gamma_scale).sum()
    value += _halfnormal_logpdf(beta, prior.beta_scale).sum()
    if nu is not None:
        a, r = prior.nu_shape, prior.nu_rate
        x = nu - 2.0
        value += a * np.log(r) - gammaln(a) + (a - 1.0) * np.log(x) - r * x
    # change of variables: log coordinates contribute phi_i each
    value += float(phi[1:].sum())
    if not want_grad:
        return float(value)

    grad = np.empty(spec.dim)
    grad[0] = -mu / prior.mu_scale**2
    grad[1] = 1.0 - omega**2 / prior.omega_scale**2
    pos = 2
    grad[pos : pos + spec.p] = 1.0 - alpha**2 / prior.alpha_scale**2
    pos += spec.p
    if gamma is not None:
        grad[pos : pos + spec.p] = 1.0 - gamma**2 / prior.gamma_scale**2
        pos += spec.p
    grad[pos : pos + spec.q] = 1.0 - beta**2 / prior.beta_scale**2
    if nu is not None:
        grad[-1] = prior.nu_shape - prior.nu_rate * (nu - 2.0)
    return float(value), grad


def log_posterior(spec, prior, data, presample, phi, want_grad=False,
                  context=None):
    """Unnormalised log posterior of phi: log-likelihood plus log prior.

    Returns -inf for invalid or non-stationary points (never raises on
    them); with ``want_grad`` returns (value, gradient).  ``context`` may
    override the likelihood evaluations (testing hook).
    """
    phi = np.asarray(phi, dtype=float)
    if want_grad:
        lp, gp = log_prior_phi(spec, prior, phi, want_grad=True)
    else:
        lp = log_prior_phi(spec, prior, phi)
    if not np.isfinite(lp):
        return (-np.inf, None) if want_grad else -np.inf
    try:
        if context is not None:
            path = context.eval_upto(phi, context.T, want_derivatives=want_grad)
        else:
            path = online_evaluate(
                spec, ParamVector(phi, "phi"), data, presample,
                want_derivatives=want_grad,
            )
    except NonPositiveVariance:
        return (-np.inf, None) if want_grad else -np.inf
    value = path.total_ell + lp
    if not np.isfinite(value):
        return (-np.inf, None) if want_grad else -np.inf
    if not want_grad:
        return float(value)
    return float(value), path.total_grad + gp


def _moment_start_theta(spec, data):
    """Moment-matched stationary starting point."""
    data = np.asarray(data, dtype=float)
    mu = float(data.mean())
    s2 = float(data.var(ddof=1)) if data.size > 1 else 1.0
    alpha = np.full(spec.p, 0.1 / spec.p)
    beta = np.full(spec.q, 0.8 / spec.q)
    parts = [alpha]
    persistence = alpha.sum() + beta.sum()
    if spec.has_leverage:
        gamma = np.full(spec.p, 0.1 / spec.p)
        parts.append(gamma)
        persistence += 0.5 * gamma.sum()
    parts.append(beta)
    omega = max(s2 * (1.0 - persistence), 1e-6)
    theta = [np.array([mu, omega])] + parts
    if spec.has_nu:
        theta.append(np.array([8.0]))
    return np.concatenate(theta)


def map_estimate(
    spec,
    prior,
    data,
    presample=None,
    n_starts=5,
    seed=0,
    maxiter=500,
    context=None,
):
    """Posterior mode in the unconstrained space via multi-start L-BFGS.

    The search runs in the stationarity-respecting parameterisation, so
    every iterate maps to a valid parameter point; starts are jittered
    around a moment-matched point.  Deterministic given the seed.
    """
    data = np.asarray(data, dtype=float)
    if presample is None:
        presample = default_presample(spec, data)
    rmap = ReparamMap.for_spec(spec)
    theta0 = _moment_start_theta(spec, data)
    psi0 = psi_from_phi(spec, rmap.to_phi(theta0))
    rng = np.random.default_rng(seed)

    def objective(psi):
        phi = phi_from_psi(spec, psi)
        value, grad_phi = log_posterior(
            spec, prior, data, presample, phi, want_grad=True, context=context
        )
        if not np.isfinite(value):
            return 1e100, np.zeros_like(psi)
        return -value, -grad_phi_to_grad_psi(spec, psi, grad_phi)

    best = None
    for k in range(n_starts):
        start = psi0 if k == 0 else psi0 + 0.5 * rng.standard_normal(psi0.size)
        res = minimize(
            objective, start, jac=True, method="L-BFGS-B",
            options={"maxiter": maxiter},
        )
        if np.isfinite(res.fun) and res.fun < 1e99:
            if best is None or res.fun < best.fun:
                best = res
    if best is None:
        raise OptimizationFailure("all MAP starts diverged")
    return ParamVector(phi_from_psi(spec, best.x), "phi")


def finite_difference_hessian(grad_fn, x, rel_step=1e-5):
    """Symmetrised Jacobian of a gradient function by central differences."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    for i in range(n):
        h = rel_step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        H[:, i] = (grad_fn(xp) - grad_fn(xm)) / (2.0 * h)
    return 0.5 * (H + H.T)


def covariance_from_curvature(neg_hess, floor_ratio=1e-8, max_floored_frac=0.1):
    """Invert a negative log-density Hessian into a covariance matrix.

    Eigenvalues below floor_ratio times the maximum are floored there; if
    more than ``max_floored_frac`` of the spectrum needs flooring the
    curvature is declared singular.
    """
    neg_hess = 0.5 * (neg_hess + neg_hess.T)
    w, V = np.linalg.eigh(neg_hess)
    floor = floor_ratio * w.max()
    if floor <= 0:
        raise SingularHessian("curvature has no positive direction")
    n_floored = int(np.sum(w < floor))
    if n_floored > max_floored_frac * w.size:
        raise SingularHessian(
            f"{n_floored}/{w.size} eigenvalues below {floor:g} need repair"
        )
    w = np.maximum(w, floor)
    return (V / w) @ V.T


def laplace_approximation(spec, prior, data, presample, phi_map, rel_step=1e-5,
                          context=None):
    """Inverse curvature of the log posterior at an interior mode."""

    def grad(phi):
        _, g = log_posterior(
            spec, prior, data, presample, phi, want_grad=True, context=context
        )
        return g

    H = finite_difference_hessian(grad, np.asarray(phi_map, dtype=float), rel_step)
    return covariance_from_curvature(-H)
