"""Out-of-sample log predictive density scoring over a held-out test set."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..exceptions import DomainError
from ..models import (
    ReparamMap,
    default_presample,
    error_logdensity_partials,
    variance_path,
)
from .diagnostics import integrated_autocorr_time


@dataclass(frozen=True)
class LpdsResult:
    lpds: float
    ci_low: float
    ci_high: float
    n_draws_used: int
    n_skipped: int

    def to_dict(self):
        return {
            "lpds": self.lpds,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_draws_used": self.n_draws_used,
            "n_skipped": self.n_skipped,
        }


def lpds_evaluate(spec, draws_phi, train, test, presample=None, level=0.95):
    """Log predictive density score of the test series under posterior draws.

    For each draw, the variance recursion is rolled from the training
    pre-sample through the full training series and then through the test
    set, accumulating the test observations' log predictive densities; the
    per-draw log-products combine in log space as a log-mean.  The
    confidence interval applies the delta method to the log of the sample
    mean, with the Monte Carlo variance inflated by the integrated
    autocorrelation time of the (thinned) chain of per-draw products.

    Non-stationary draws are skipped and counted.  Both series must be on
    the training scale.
    """
    draws_phi = np.atleast_2d(np.asarray(draws_phi, dtype=float))
    train = np.asarray(train, dtype=float)
    test = np.asarray(test, dtype=float)
    if test.size == 0:
        raise DomainError("empty test series")
    if presample is None:
        presample = default_presample(spec, train)
    rmap = ReparamMap.for_spec(spec)
    full = np.concatenate([train, test])
    n_train = train.size

    logprods = []
    skipped = 0
    for phi in draws_phi:
        theta = rmap.to_theta(phi)
        if spec.stationarity_margin(theta) <= 0:
            skipped += 1
            continue
        sigma2 = variance_path(spec, theta, full, presample)
        nu = theta[-1] if spec.has_nu else None
        ell = error_logdensity_partials(
            spec.error, test, theta[0], sigma2[n_train:], nu
        ).ell
        logprods.append(float(ell.sum()))
    if not logprods:
        raise DomainError("all draws were non-stationary")
    s = np.asarray(logprods)
    M = s.size
    lpds = float(logsumexp(s) - np.log(M))

    # delta method on log(mean w), w_m = exp(s_m), computed on shifted scale
    r = np.exp(s - s.max())
    rbar = r.mean()
    if M >= 2 and r.std(ddof=1) > 0:
        tau = integrated_autocorr_time(r)
        var_log_mean = tau * r.var(ddof=1) / (M * rbar**2)
    else:
        var_log_mean = 0.0
    from scipy.stats import norm

    half = float(norm.ppf(0.5 + level / 2.0)) * np.sqrt(var_log_mean)
    return LpdsResult(
        lpds=lpds,
        ci_low=lpds - half,
        ci_high=lpds + half,
        n_draws_used=M,
        n_skipped=skipped,
    )


def thin_draws(draws, count):
    """Evenly strided subset of ``count`` rows (first stride-aligned rows)."""
    draws = np.asarray(draws)
    n = draws.shape[0]
    if count >= n:
        return draws
    idx = np.linspace(0, n - 1, count).round().astype(int)
    return draws[idx]
