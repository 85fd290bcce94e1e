"""Random-walk MCMC engines: exact-likelihood and pseudo-marginal subsampling.

Both engines share the same proposal/accept random stream layout (stream 0:
proposal noise and accept uniforms, stream 1: subsample indices), so a
zero-noise estimator reproduces the exact chain draw for draw.  Proposal
covariances adapt during burn-in only and freeze afterwards.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from ..estimators import bias_corrected_loglik, wde_loglik
from ..exceptions import DomainError
from ..models import default_presample
from ..scheme import draw_indices, tpd_scheme
from .posterior import (
    laplace_approximation,
    log_posterior,
    log_prior_phi,
    map_estimate,
)
from .proposals import (
    log_det_dpsi_dphi,
    map_covariance_to_psi,
    phi_from_psi,
    psi_from_phi,
)

ADAPTIVE_RW = "adaptive"
STATIONARY_RW = "stationary_rw"

_ADAPT_EVERY = 100
_ADAPT_JITTER = 1e-10


@dataclass
class ChainOutput:
    """MCMC output: post-burn-in draws plus per-iteration diagnostics.

    ``draws`` live in the unconstrained working space (one row per retained
    iteration); ``moves`` flags acceptance for every iteration including
    burn-in; ``depth_trace`` records the recursion depth consumed per
    iteration for subsampling chains (None otherwise).
    """

    draws: np.ndarray
    logpost_trace: np.ndarray
    moves: np.ndarray
    accepted: int
    iterations: int
    burn_in: int
    seed: int
    depth_trace: np.ndarray = None
    init_depth: int = 0
    timings: dict = field(default_factory=dict)

    @property
    def acceptance_rate(self):
        return self.accepted / self.iterations


def _chol(cov):
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return np.linalg.cholesky(cov + _ADAPT_JITTER * np.eye(cov.shape[0]))


def _adapted_cov(history, d):
    cov = np.cov(np.asarray(history).T)
    cov = np.atleast_2d(cov)
    return (2.38**2 / d) * cov + _ADAPT_JITTER * np.eye(d)


def random_walk_chain(
    log_target,
    x0,
    cov0,
    iterations,
    burn_in,
    rng,
    adapt=True,
    on_state=None,
):
    """Metropolis random walk with optional Haario-style burn-in adaptation.

    ``log_target`` maps a state vector to an unnormalised log density
    (-inf rejects).  The proposal covariance is re-estimated from the chain
    history every 100 burn-in iterations, scaled by 2.38^2/dim, and frozen
    at the end of burn-in.  ``on_state`` is called with (iteration, state)
    after each iteration (used to record mapped coordinates).
    """
    x = np.asarray(x0, dtype=float).copy()
    d = x.size
    lp = log_target(x)
    if not np.isfinite(lp):
        raise DomainError("chain must start at a point of positive density")
    chol = _chol(cov0)
    keep = iterations - burn_in
    draws = np.empty((keep, d))
    trace = np.empty(iterations)
    moves = np.zeros(iterations, dtype=bool)
    accepted = 0
    history = [x.copy()]
    for it in range(iterations):
        prop = x + chol @ rng.standard_normal(d)
        lp_prop = log_target(prop)
        if np.log(rng.random()) < lp_prop - lp:
            x, lp = prop, lp_prop
            moves[it] = True
            accepted += 1
        trace[it] = lp
        if it >= burn_in:
            draws[it - burn_in] = x
        if adapt and it < burn_in:
            history.append(x.copy())
            if (it + 1) % _ADAPT_EVERY == 0 and len(history) > 2 * d:
                chol = _chol(_adapted_cov(history, d))
        if on_state is not None:
            on_state(it, x)
    return draws, trace, moves, accepted


def fulldata_mcmc(
    spec,
    prior,
    data,
    presample=None,
    iterations=12_000,
    burn_in=2_000,
    seed=0,
    proposal=ADAPTIVE_RW,
    init_phi=None,
    init_cov=None,
    context=None,
):
    """Exact-likelihood Metropolis chain over the unconstrained parameters.

    ``proposal`` selects a Haario adaptive random walk directly in the
    working space, or a random walk in the stationarity-respecting space
    (with the appropriate Jacobian correction).  Starts at the MAP estimate
    with a Laplace proposal covariance unless overridden.
    """
    data = np.asarray(data, dtype=float)
    if presample is None:
        presample = default_presample(spec, data)
    t0 = time.perf_counter()
    if init_phi is None:
        init_phi = map_estimate(spec, prior, data, presample, seed=seed,
                                context=context).coords
    init_phi = np.asarray(init_phi, dtype=float)
    if init_cov is None:
        init_cov = laplace_approximation(
            spec, prior, data, presample, init_phi, context=context
        )
    t_setup = time.perf_counter() - t0

    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    d = spec.dim

    t0 = time.perf_counter()
    if proposal == ADAPTIVE_RW:

        def log_target(phi):
            return log_posterior(spec, prior, data, presample, phi,
                                 context=context)

        draws, trace, moves, accepted = random_walk_chain(
            log_target, init_phi, (2.38**2 / d) * init_cov, iterations,
            burn_in, rng,
        )
    elif proposal == STATIONARY_RW:
        psi0 = psi_from_phi(spec, init_phi)
        cov_psi = map_covariance_to_psi(spec, psi0, init_cov)

        def log_target(psi):
            phi = phi_from_psi(spec, psi)
            lp = log_posterior(spec, prior, data, presample, phi,
                               context=context)
            # invariant density in psi space carries |det d phi / d psi|
            return lp - log_det_dpsi_dphi(spec, psi)

        draws_psi, trace, moves, accepted = random_walk_chain(
            log_target, psi0, (2.38**2 / d) * cov_psi, iterations, burn_in,
            rng,
        )
        draws = phi_from_psi(spec, draws_psi)
    else:
        raise DomainError(f"unknown proposal kind {proposal!r}")
    t_sample = time.perf_counter() - t0

    return ChainOutput(
        draws=draws,
        logpost_trace=trace,
        moves=moves,
        accepted=accepted,
        iterations=iterations,
        burn_in=burn_in,
        seed=seed,
        timings={"setup": t_setup, "sampling": t_sample},
    )


def subsampling_mcmc(
    spec,
    prior,
    data,
    tuning,
    cache,
    presample=None,
    iterations=12_000,
    burn_in=2_000,
    seed=0,
    init_phi=None,
    init_cov=None,
    proposal_scale=0.3,
    adapt=True,
):
    """Pseudo-marginal chain driven by the bias-corrected subsampled likelihood.

    At every proposal a fresh subsample of ``tuning.subsample_size`` indices
    is drawn from the tuned decaying scheme; the current state keeps its
    estimate (standard pseudo-marginal on the extended space).  Proposals
    walk the stationarity-respecting space, preconditioned by
    ``proposal_scale`` times the Laplace covariance and adapted during
    burn-in only.  Requires m >= 2 so the bias correction is defined.
    """
    data = np.asarray(data, dtype=float)
    if presample is None:
        presample = default_presample(spec, data)
    if tuning.subsample_size < 2:
        raise DomainError(
            "pseudo-marginal chains need m >= 2 for the variance estimate"
        )
    m = tuning.subsample_size
    scheme = tpd_scheme(tuning.T, tuning.floor_frac, tuning.head_len,
                        tuning.offset)

    t0 = time.perf_counter()
    if init_phi is None:
        init_phi = cache.phi_star
    init_phi = np.asarray(init_phi, dtype=float)
    if init_cov is None:
        init_cov = laplace_approximation(
            spec, prior, data, presample, init_phi, context=cache.context
        )
    t_setup = time.perf_counter() - t0

    ss = np.random.SeedSequence(seed).spawn(2)
    walk_rng = np.random.default_rng(ss[0])
    index_rng = np.random.default_rng(ss[1])

    psi = psi_from_phi(spec, init_phi)
    d = spec.dim
    chol = _chol(proposal_scale * map_covariance_to_psi(spec, psi, init_cov))

    def estimate(phi):
        idx, depth = draw_indices(scheme, m, index_rng)
        est = wde_loglik(cache, scheme, phi, idx)
        return bias_corrected_loglik(est), depth

    def psi_target_terms(psi_vec, phi):
        lp = log_prior_phi(spec, prior, phi)
        return lp - log_det_dpsi_dphi(spec, psi_vec)

    phi = init_phi.copy()
    ll_hat, depth0 = estimate(phi)
    fixed = psi_target_terms(psi, phi)
    lp = ll_hat + fixed
    if not np.isfinite(lp):
        raise DomainError("chain must start at a point of positive density")

    keep = iterations - burn_in
    draws = np.empty((keep, d))
    trace = np.empty(iterations)
    moves = np.zeros(iterations, dtype=bool)
    depth_trace = np.empty(iterations, dtype=np.int64)
    accepted = 0
    history = [psi.copy()]

    t0 = time.perf_counter()
    for it in range(iterations):
        psi_prop = psi + chol @ walk_rng.standard_normal(d)
        phi_prop = phi_from_psi(spec, psi_prop)
        ll_prop, depth = estimate(phi_prop)
        lp_prop = ll_prop + psi_target_terms(psi_prop, phi_prop)
        depth_trace[it] = depth
        if np.log(walk_rng.random()) < lp_prop - lp:
            psi, phi, lp = psi_prop, phi_prop, lp_prop
            moves[it] = True
            accepted += 1
        trace[it] = lp
        if it >= burn_in:
            draws[it - burn_in] = phi
        if adapt and it < burn_in:
            history.append(psi.copy())
            if (it + 1) % _ADAPT_EVERY == 0 and len(history) > 2 * d:
                chol = _chol(_adapted_cov(history, d))
    t_sample = time.perf_counter() - t0

    return ChainOutput(
        draws=draws,
        logpost_trace=trace,
        moves=moves,
        accepted=accepted,
        iterations=iterations,
        burn_in=burn_in,
        seed=seed,
        depth_trace=depth_trace,
        init_depth=depth0,
        timings={"setup": t_setup, "sampling": t_sample},
    )
