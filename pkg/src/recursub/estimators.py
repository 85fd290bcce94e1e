"""Weighted difference estimators of the log-likelihood and its gradient.

Control variates are second-order Taylor surrogates of the per-observation
log-densities around a centre point in the unconstrained space, built in one
full pass over the data.  After that pass, the control-variate total is O(1)
in the series length, and a subsampled estimate touches the recursion only up
to the largest drawn time index.

All pseudo-marginal arithmetic stays on the log scale.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateResiduals, DomainError, UndefinedVariance
from .models import ParamVector, ReparamMap, online_evaluate


@dataclass(frozen=True)
class LikelihoodContext:
    """Bundles a model with its data so estimators are self-contained.

    Provides per-observation log-densities (and phi-space derivatives) either
    over the full series or truncated at a recursion depth.
    """

    spec: object
    data: np.ndarray
    presample: object

    def __post_init__(self):
        object.__setattr__(self, "data", np.asarray(self.data, dtype=float))
        self.presample.check(self.spec)

    @property
    def T(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.spec.dim

    def rmap(self):
        return ReparamMap.for_spec(self.spec)

    def eval_upto(self, phi, depth, want_derivatives=False):
        """EvalPath of the first ``depth`` observations at phi."""
        return online_evaluate(
            self.spec,
            ParamVector(phi, "phi"),
            self.data,
            self.presample,
            upto=depth,
            want_derivatives=want_derivatives,
        )

    def full_eval(self, phi, want_derivatives=False):
        return self.eval_upto(phi, self.T, want_derivatives=want_derivatives)


@dataclass(frozen=True)
class ControlVariateCache:
    """Per-observation Taylor data at the centre phi_star, plus their sums.

    ``ell``, ``grad`` and ``hess`` hold the per-observation log-density and
    its phi-space derivatives at the centre; the *_sum fields make the
    control-variate total O(1) to evaluate at any phi.
    """

    context: LikelihoodContext
    phi_star: np.ndarray
    ell: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    ell_sum: float
    grad_sum: np.ndarray
    hess_sum: np.ndarray

    @property
    def T(self):
        return self.ell.shape[0]


@dataclass(frozen=True)
class EstimateResult:
    """A subsampled estimate with its single-subsample variance estimate.

    ``variance_hat`` is None when m = 1 (no within-subsample information) and
    for vector-valued estimates.  ``depth`` is the largest sampled time
    index, i.e. the realised recursion cost of this evaluation.
    """

    value: object
    variance_hat: float
    depth: int
    m: int
    indices: np.ndarray


def build_control_variates(context, phi_star):
    """One full derivative pass at the centre; caches per-t Taylor data."""
    phi_star = np.asarray(phi_star, dtype=float)
    path = context.full_eval(phi_star, want_derivatives=True)
    return ControlVariateCache(
        context=context,
        phi_star=phi_star,
        ell=path.ell,
        grad=path.grad,
        hess=path.hess,
        ell_sum=path.total_ell,
        grad_sum=path.total_grad,
        hess_sum=path.total_hess,
    )


def cv_sum(cache, phi):
    """Total control variate and its gradient at phi, from the sums alone.

    Returns (sum_t q_t(phi), sum_t grad q_t(phi)); cost O(dim^2), independent
    of the series length.
    """
    delta = np.asarray(phi, dtype=float) - cache.phi_star
    hd = cache.hess_sum @ delta
    total = cache.ell_sum + cache.grad_sum @ delta + 0.5 * delta @ hd
    return float(total), cache.grad_sum + hd


def cv_at(cache, phi, indices):
    """Per-observation control variates q_t(phi) at the given indices."""
    delta = np.asarray(phi, dtype=float) - cache.phi_star
    ell = cache.ell[indices]
    g = cache.grad[indices]
    H = cache.hess[indices]
    return ell + g @ delta + 0.5 * np.einsum("i,tij,j->t", delta, H, delta)


def cv_grad_at(cache, phi, indices):
    """Per-observation control-variate gradients at the given indices."""
    delta = np.asarray(phi, dtype=float) - cache.phi_star
    return cache.grad[indices] + cache.hess[indices] @ delta


def wde_loglik(cache, scheme, phi, indices):
    """Weighted difference estimate of the total log-likelihood at phi.

    ``indices`` are 0-based positions drawn from ``scheme``; the model is
    evaluated only up to the largest drawn time index.  ``variance_hat`` is
    the m-draw sample-variance estimate of the estimator variance (None when
    m = 1).
    """
    indices = np.asarray(indices, dtype=np.intp)
    m = indices.size
    depth = int(indices.max()) + 1
    path = cache.context.eval_upto(phi, depth)
    ell_u = path.ell[indices]
    q_u = cv_at(cache, phi, indices)
    p_u = scheme.probs[indices]
    terms = (ell_u - q_u) / p_u
    q_total, _ = cv_sum(cache, phi)
    value = q_total + terms.mean()
    variance_hat = float(terms.var(ddof=1) / m) if m >= 2 else None
    return EstimateResult(
        value=float(value), variance_hat=variance_hat, depth=depth, m=m,
        indices=indices,
    )


def wde_grad(cache, scheme, phi, indices, loglik=False):
    """Weighted difference estimate of the log-likelihood gradient at phi.

    Reuses the indices drawn for the log-likelihood estimator.  With
    ``loglik=True`` also returns the scalar estimate from the same pass
    (one recursion, both estimates).
    """
    indices = np.asarray(indices, dtype=np.intp)
    m = indices.size
    depth = int(indices.max()) + 1
    path = cache.context.eval_upto(phi, depth, want_derivatives=True)
    g_u = path.grad[indices]
    gq_u = cv_grad_at(cache, phi, indices)
    p_u = scheme.probs[indices]
    q_total, gq_total = cv_sum(cache, phi)
    value = gq_total + ((g_u - gq_u) / p_u[:, None]).mean(axis=0)
    grad_est = EstimateResult(
        value=value, variance_hat=None, depth=depth, m=m, indices=indices
    )
    if not loglik:
        return grad_est
    ell_u = path.ell[indices]
    q_u = cv_at(cache, phi, indices)
    terms = (ell_u - q_u) / p_u
    ll_est = EstimateResult(
        value=float(q_total + terms.mean()),
        variance_hat=float(terms.var(ddof=1) / m) if m >= 2 else None,
        depth=depth,
        m=m,
        indices=indices,
    )
    return grad_est, ll_est


def residuals_at(cache, phi):
    """All control-variate residuals e_t(phi) in one O(T) pass."""
    path = cache.context.full_eval(phi)
    delta = np.asarray(phi, dtype=float) - cache.phi_star
    q = (
        cache.ell
        + cache.grad @ delta
        + 0.5 * np.einsum("i,tij,j->t", delta, cache.hess, delta)
    )
    return path.ell - q


def exact_variance(residuals, probs, m, gradient_residuals=None):
    """Population variance of the weighted difference estimator.

    Given the full residual vector, returns (1/m) sum_t p_t (e_t/p_t - e)^2.
    When ``gradient_residuals`` (T, d) is supplied, also returns the
    estimator covariance matrix of the gradient (an O(T d^2) computation
    meant for diagnostics and tuning, not hot loops).
    """
    e = np.asarray(residuals, dtype=float)
    p = np.asarray(probs, dtype=float)
    total = e.sum()
    dev = e / p - total
    var = float(np.sum(dev**2 * p) / m)
    if gradient_residuals is None:
        return var
    ge = np.asarray(gradient_residuals, dtype=float)
    gdev = ge / p[:, None] - ge.sum(axis=0)
    cov = np.einsum("t,ti,tj->ij", p, gdev, gdev) / m
    return var, cov


def variance_ratio_bound(residuals, floor_frac):
    """Worst-case variance ratio vs uniform sampling under a tail floor.

    Returns (bound, rho) with bound = (1/floor_frac - rho) / (1 - rho) and
    rho = e^2 / (T sum e_t^2); rho is in [0, 1) for non-degenerate residuals.
    """
    if not 0 < floor_frac <= 1:
        raise DomainError("floor fraction must lie in (0, 1]")
    e = np.asarray(residuals, dtype=float)
    ss = float(np.sum(e**2))
    if ss == 0.0:
        raise DegenerateResiduals("all residuals are zero")
    rho = float(e.sum() ** 2 / (e.size * ss))
    return (1.0 / floor_frac - rho) / (1.0 - rho), rho


def bias_corrected_loglik(est):
    """Log-scale bias correction: value - variance_hat / 2.

    exp() of the result is unbiased for the likelihood under Gaussian
    estimator noise; the exponential is never taken here.
    """
    if est.variance_hat is None:
        raise UndefinedVariance(
            "bias correction needs a variance estimate (m >= 2)"
        )
    return est.value - 0.5 * est.variance_hat
