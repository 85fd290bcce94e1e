"""Gaussian variational inference with a rank-1 plus isotropic covariance.

The variational family is N(mean, b b^T + d^2 I); draws use the
reparameterisation phi = mean + b z1 + d z2 with scalar z1 and vector z2.
The objective splits the expected log joint (estimated with one draw per
iteration, full-data or subsampled) from the entropy, which is closed form
under the low-rank structure, so only the log-joint gradient is stochastic.
Optimisation uses Adam with Polyak averaging over the tail iterations.
"""

import time
from dataclasses import dataclass

import numpy as np

from ..estimators import wde_grad
from ..exceptions import DomainError
from ..models import default_presample
from ..scheme import draw_indices
from .posterior import log_posterior, log_prior_phi

_ADAM_LR = 0.001
_ADAM_B1 = 0.9
_ADAM_B2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class VariationalState:
    """Variational mean with rank-1 factor b and isotropic scale d.

    ``log_d`` stores log|d| so the implied covariance b b^T + d^2 I stays
    positive definite throughout optimisation.
    """

    mean: np.ndarray
    b: np.ndarray
    log_d: float

    @property
    def dim(self):
        return self.mean.size

    @property
    def d(self):
        return float(np.exp(self.log_d))

    def covariance(self):
        return np.outer(self.b, self.b) + self.d**2 * np.eye(self.dim)

    def _logdet_and_btb(self):
        d2 = self.d**2
        btb = float(self.b @ self.b)
        # matrix determinant lemma: det = d^(2(n-1)) (d^2 + b.b)
        logdet = (self.dim - 1) * np.log(d2) + np.log(d2 + btb)
        return logdet, btb

    def entropy(self):
        """Closed-form Gaussian entropy of the variational density."""
        logdet, _ = self._logdet_and_btb()
        return 0.5 * (self.dim * (1.0 + np.log(2.0 * np.pi)) + logdet)

    def log_density(self, phi):
        """log q(phi) via Sherman-Morrison (no dense inverse)."""
        r = np.asarray(phi, dtype=float) - self.mean
        d2 = self.d**2
        logdet, btb = self._logdet_and_btb()
        br = self.b @ r
        quad = (r @ r - br**2 / (d2 + btb)) / d2
        return -0.5 * (self.dim * np.log(2.0 * np.pi) + logdet + quad)

    def sample(self, rng, size=None):
        """Reparameterised draws phi = mean + b z1 + d z2."""
        if size is None:
            z1 = rng.standard_normal()
            z2 = rng.standard_normal(self.dim)
            return self.mean + self.b * z1 + self.d * z2
        z1 = rng.standard_normal(size)
        z2 = rng.standard_normal((size, self.dim))
        return self.mean + np.outer(z1, self.b) + self.d * z2


class _Adam:
    def __init__(self, n, lr=_ADAM_LR):
        self.lr = lr
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, grad):
        self.t += 1
        self.m = _ADAM_B1 * self.m + (1 - _ADAM_B1) * grad
        self.v = _ADAM_B2 * self.v + (1 - _ADAM_B2) * grad**2
        mhat = self.m / (1 - _ADAM_B1**self.t)
        vhat = self.v / (1 - _ADAM_B2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + _ADAM_EPS)


def entropy_gradients(b, d):
    """Analytic entropy gradients w.r.t. (b, d)."""
    denom = d**2 + b @ b
    gb = b / denom
    gd = (b.size - 1) / d + d / denom
    return gb, gd


def optimize_gaussian_vb(
    logh_grad_fn,
    init,
    iterations,
    rng,
    monitor_fn=None,
    monitor_every=25,
    polyak_window=500,
    adam_lr=_ADAM_LR,
    freeze_b=False,
):
    """Stochastic gradient ascent core for the rank-1 plus isotropic family.

    ``logh_grad_fn(phi, rng)`` returns (log h(phi), grad log h(phi)) where h
    is the (possibly subsampled) unnormalised posterior; a non-finite value
    skips that iteration's update.  ``monitor_fn(state, rng)`` returns an
    objective estimate for the trace.  Returns (polyak-averaged state,
    trace list, skipped count).
    """
    state = init
    dim = state.dim
    adam = _Adam(2 * dim + 1, lr=adam_lr)
    window = min(polyak_window, iterations)
    tail_sum = np.zeros(2 * dim + 1)
    tail_n = 0
    trace = []
    skipped = 0

    def pack(s):
        return np.concatenate([s.mean, s.b, [s.log_d]])

    def unpack(x):
        return VariationalState(
            mean=x[:dim], b=x[dim : 2 * dim], log_d=float(x[-1])
        )

    x = pack(state)
    for it in range(iterations):
        s = unpack(x)
        d = s.d
        z1 = rng.standard_normal()
        z2 = rng.standard_normal(dim)
        phi = s.mean + s.b * z1 + d * z2
        logh, g = logh_grad_fn(phi, rng)
        if logh is None or not np.isfinite(logh) or not np.all(np.isfinite(g)):
            skipped += 1
        else:
            gb_ent, gd_ent = entropy_gradients(s.b, d)
            g_mean = g
            g_b = z1 * g + gb_ent
            g_logd = d * (g @ z2 + gd_ent)
            grad = np.concatenate([g_mean, g_b, [g_logd]])
            if freeze_b:
                grad[dim : 2 * dim] = 0.0
            x = x + adam.step(grad)
        if monitor_fn is not None and (it + 1) % monitor_every == 0:
            trace.append((it + 1, monitor_fn(unpack(x), rng)))
        if it >= iterations - window:
            tail_sum += x
            tail_n += 1
    final = unpack(tail_sum / tail_n)
    return final, trace, skipped


def elbo_estimate(state, logh_fn, n_draws, rng):
    """Monte Carlo objective estimate E_q[log h(phi) - log q(phi)].

    Returns (value, standard error); requires n_draws >= 2.  -inf draws
    propagate to the estimate.
    """
    if n_draws < 2:
        raise DomainError("need at least two draws for a standard error")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    vals = np.empty(n_draws)
    for k in range(n_draws):
        phi = state.sample(rng)
        vals[k] = logh_fn(phi) - state.log_density(phi)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_draws))


def vb_optimize(
    spec,
    prior,
    data,
    presample=None,
    cache=None,
    scheme=None,
    subsample_size=1,
    iterations=5_000,
    mc_draws=1,
    seed=0,
    init_mean=None,
    init_d2=None,
    monitor_every=25,
    monitor_draws=5,
    polyak_window=500,
):
    """Fit the Gaussian variational approximation to a volatility model.

    With ``cache`` and ``scheme`` supplied, the log-likelihood and its
    gradient are estimated by weighted-difference subsampling with
    ``subsample_size`` indices per iteration (doubly stochastic); otherwise
    the full-data quantities are used (singly stochastic).  ``mc_draws``
    fixes the reparameterisation draws per iteration (only a single draw
    per iteration is supported).  Returns (state, elbo trace, info dict).
    """
    data = np.asarray(data, dtype=float)
    if presample is None:
        presample = default_presample(spec, data)
    if init_mean is None:
        raise DomainError("vb_optimize requires an initial mean (e.g. the MAP)")
    if mc_draws != 1:
        raise DomainError("one reparameterisation draw per iteration is supported")
    init_mean = np.asarray(init_mean, dtype=float)
    d2 = 0.01 if init_d2 is None else float(init_d2)
    init = VariationalState(
        mean=init_mean, b=np.zeros(spec.dim), log_d=0.5 * np.log(d2)
    )

    subsampled = cache is not None and scheme is not None
    depth_log = []

    if subsampled:

        def logh_grad_fn(phi, rng):
            lp, gp = log_prior_phi(spec, prior, phi, want_grad=True)
            if not np.isfinite(lp):
                return None, None
            idx, depth = draw_indices(scheme, subsample_size, rng)
            depth_log.append(depth)
            g_est, ll_est = wde_grad(cache, scheme, phi, idx, loglik=True)
            return ll_est.value + lp, g_est.value + gp

        def logh_fn(phi, rng):
            lp = log_prior_phi(spec, prior, phi)
            if not np.isfinite(lp):
                return -np.inf
            idx, depth = draw_indices(scheme, subsample_size, rng)
            depth_log.append(depth)
            from ..estimators import wde_loglik

            return wde_loglik(cache, scheme, phi, idx).value + lp

    else:

        def logh_grad_fn(phi, rng):
            value, grad = log_posterior(
                spec, prior, data, presample, phi, want_grad=True
            )
            if not np.isfinite(value):
                return None, None
            return value, grad

        def logh_fn(phi, rng):
            return log_posterior(spec, prior, data, presample, phi)

    def monitor_fn(state, rng):
        vals = []
        for _ in range(monitor_draws):
            phi = state.sample(rng)
            vals.append(logh_fn(phi, rng) - state.log_density(phi))
        return float(np.mean(vals))

    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    final, trace, skipped = optimize_gaussian_vb(
        logh_grad_fn,
        init,
        iterations,
        rng,
        monitor_fn=monitor_fn,
        monitor_every=monitor_every,
        polyak_window=polyak_window,
    )
    info = {
        "skipped_updates": skipped,
        "seconds": time.perf_counter() - t0,
        "depths": np.asarray(depth_log, dtype=np.int64),
        "subsampled": subsampled,
    }
    return final, trace, info
