"""Stationarity-respecting parameterisation and random-walk proposals.

The coefficient block (alpha, gamma, beta) is mapped through a softmax-style
normalisation: raw positives w_i = exp(psi_i) are scaled by 1/(1 + S) with S
their sum, which lands every point strictly inside the stationary region
(gammas carry a factor 2 so the effective persistence sum alpha + gamma/2 +
beta stays below one).  Gaussian random walks in this space therefore never
propose invalid parameters; the move back to the working unconstrained space
costs a tractable log-Jacobian ratio.
"""

import numpy as np

from ..exceptions import DomainError, NonStationary
from ..models import ReparamMap


def _coef_slice(spec):
    """Slice of the normalised coefficient block in the parameter layout."""
    n_coef = spec.p + spec.q + (spec.p if spec.has_leverage else 0)
    return slice(2, 2 + n_coef), n_coef


def _gamma_mask(spec, n_coef):
    mask = np.zeros(n_coef, dtype=bool)
    if spec.has_leverage:
        mask[spec.p : 2 * spec.p] = True
    return mask


def theta_from_psi(spec, psi):
    """Map stationarity-respecting coordinates to original parameters.

    Operates on the last axis, so a batch of points maps in one call.  The
    result always satisfies positivity and strict stationarity.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.shape[-1:] != (spec.dim,):
        raise DomainError(f"expected trailing dimension {spec.dim}")
    sl, n_coef = _coef_slice(spec)
    raw = np.exp(psi[..., sl])
    S = raw.sum(axis=-1, keepdims=True)
    coefs = raw / (1.0 + S)
    coefs[..., _gamma_mask(spec, n_coef)] *= 2.0
    theta = psi.copy()
    theta[..., 1] = np.exp(psi[..., 1])
    theta[..., sl] = coefs
    if spec.has_nu:
        theta[..., -1] = np.exp(psi[..., -1]) + 2.0
    return theta


def psi_from_theta(spec, theta):
    """Inverse of theta_from_psi; requires strictly stationary points."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1:] != (spec.dim,):
        raise DomainError(f"expected trailing dimension {spec.dim}")
    sl, n_coef = _coef_slice(spec)
    mask = _gamma_mask(spec, n_coef)
    weights = np.where(mask, 0.5, 1.0)
    A = (theta[..., sl] * weights).sum(axis=-1, keepdims=True)
    if np.any(A >= 1.0):
        raise NonStationary("psi coordinates exist only inside the stationary region")
    S = A / (1.0 - A)
    raw = theta[..., sl] * (1.0 + S)
    raw[..., mask] /= 2.0
    psi = theta.copy()
    psi[..., 1] = np.log(theta[..., 1])
    psi[..., sl] = np.log(raw)
    if spec.has_nu:
        psi[..., -1] = np.log(theta[..., -1] - 2.0)
    return psi


def phi_from_psi(spec, psi):
    return ReparamMap.for_spec(spec).to_phi(theta_from_psi(spec, psi))


def psi_from_phi(spec, phi):
    return psi_from_theta(spec, ReparamMap.for_spec(spec).to_theta(phi))


def _coef_shares(spec, psi):
    """s_j = exp(psi_j) / (1 + S) over the coefficient block."""
    sl, _ = _coef_slice(spec)
    raw = np.exp(np.asarray(psi, dtype=float)[sl])
    return sl, raw / (1.0 + raw.sum())


def log_det_dpsi_dphi(spec, psi):
    """log |det d psi / d phi| at the point psi.

    Only the normalised coefficient block contributes: the determinant of
    d phi / d psi there is 1/(1 + S), so this is log(1 + S).
    """
    sl, _ = _coef_slice(spec)
    S = np.exp(np.asarray(psi, dtype=float)[sl]).sum()
    return float(np.log1p(S))


def grad_phi_to_grad_psi(spec, psi, grad_phi):
    """Chain rule: gradient w.r.t. psi of any function of phi(psi).

    d phi_i / d psi_j is the identity outside the coefficient block and
    delta_ij - s_j inside it.
    """
    sl, shares = _coef_shares(spec, psi)
    g = np.asarray(grad_phi, dtype=float).copy()
    g[sl] -= shares * g[sl].sum()
    return g


def jacobian_dpsi_dphi(spec, psi):
    """Full matrix d psi / d phi (inverse of the forward Jacobian)."""
    sl, shares = _coef_shares(spec, psi)
    J = np.eye(spec.dim)
    block = np.eye(shares.size) + np.outer(
        np.ones(shares.size), shares
    ) / (1.0 - shares.sum())
    J[sl, sl] = block
    return J


def map_covariance_to_psi(spec, psi, cov_phi):
    """Push a phi-space covariance to psi space at the point psi."""
    J = jacobian_dpsi_dphi(spec, psi)
    return J @ np.asarray(cov_phi, dtype=float) @ J.T


def stationary_constrained_propose(spec, psi, step_chol, rng):
    """Gaussian random-walk step in the stationarity-respecting space.

    ``step_chol`` is the Cholesky factor of the proposal covariance.
    Returns (psi_new, phi_new, log_jacobian_ratio) where the ratio
    log|det d psi/d phi|(psi) - log|det d psi/d phi|(psi_new) is the term
    to add to the log-posterior difference in the acceptance probability.
    The mapped parameters always satisfy positivity and stationarity.
    """
    psi = np.asarray(psi, dtype=float)
    psi_new = psi + step_chol @ rng.standard_normal(psi.size)
    phi_new = phi_from_psi(spec, psi_new)
    log_jac_ratio = log_det_dpsi_dphi(spec, psi) - log_det_dpsi_dphi(spec, psi_new)
    return psi_new, phi_new, log_jac_ratio
