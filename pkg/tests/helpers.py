"""Shared oracles and fixtures for the test suite.

The finite-difference helpers here are the independent oracles used to check
the recursive derivative computations; they only ever call scalar function
evaluations, never the analytic-derivative code paths they verify.
"""

import numpy as np

from recursub.models import (
    ModelSpec,
    ParamVector,
    PreSample,
    ReparamMap,
    online_evaluate,
)


def fd_gradient(f, x, rel_step=1e-5):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_hessian(f, x, rel_step=1e-4):
    """Central finite-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    H = np.zeros((n, n))
    h = rel_step * (1.0 + np.abs(x))
    f0 = f(x)
    for i in range(n):
        for j in range(i, n):
            if i == j:
                xp, xm = x.copy(), x.copy()
                xp[i] += h[i]
                xm[i] -= h[i]
                H[i, i] = (f(xp) - 2.0 * f0 + f(xm)) / h[i] ** 2
            else:
                xpp, xpm, xmp, xmm = x.copy(), x.copy(), x.copy(), x.copy()
                xpp[[i, j]] += [h[i], h[j]]
                xpm[i] += h[i]
                xpm[j] -= h[j]
                xmp[i] -= h[i]
                xmp[j] += h[j]
                xmm[[i, j]] -= [h[i], h[j]]
                H[i, j] = H[j, i] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (
                    4.0 * h[i] * h[j]
                )
    return H


def random_stationary_theta(spec, rng, persistence=(0.3, 0.9)):
    """Draw a theta point strictly inside the stationary region."""
    target = rng.uniform(*persistence)
    n_coef = spec.p + spec.q + (spec.p if spec.has_leverage else 0)
    raw = rng.uniform(0.2, 1.0, size=n_coef)
    # effective persistence weights: gammas count at 1/2
    weights = np.ones(n_coef)
    if spec.has_leverage:
        weights[spec.p : 2 * spec.p] = 0.5
    raw *= target / (raw @ weights)
    mu = rng.normal(0.0, 0.2)
    omega = rng.uniform(0.05, 0.5)
    parts = [np.array([mu, omega]), raw]
    if spec.has_nu:
        parts.append(np.array([rng.uniform(4.0, 12.0)]))
    return np.concatenate(parts)


def sample_model_data(spec, rng, n=40):
    """Simulated data plus a pre-sample at a random stationary point."""
    theta = random_stationary_theta(spec, rng)
    from recursub.models import simulate

    data = simulate(spec, theta, n, seed=rng)
    presample = PreSample(
        y_init=np.full(spec.p, data.mean()),
        sigma2_init=np.full(spec.q, max(data.var(), 0.1)),
    )
    return theta, data, presample


def ell_t_of_phi(spec, data, presample, t):
    """Scalar function phi -> ell_t(phi), for finite-difference oracles."""

    def f(phi):
        path = online_evaluate(
            spec, ParamVector(phi, "phi"), data, presample, upto=t + 1
        )
        return path.ell[t]

    return f


def total_ell_of_phi(spec, data, presample, upto=None):
    def f(phi):
        path = online_evaluate(spec, ParamVector(phi, "phi"), data, presample, upto)
        return path.total_ell

    return f


def phi_of(spec, theta):
    return ReparamMap.for_spec(spec).to_phi(theta)


ALL_SPECS = [
    ModelSpec("garch", 1, 1, "normal"),
    ModelSpec("garch", 1, 1, "student_t"),
    ModelSpec("garch", 2, 2, "normal"),
    ModelSpec("garch", 2, 2, "student_t"),
    ModelSpec("tgarch", 1, 1, "normal"),
    ModelSpec("tgarch", 1, 1, "student_t"),
]


class StubContext:
    """Likelihood context with prescribed per-observation values.

    ``ell_values`` are constant in phi; optional ``grad_values`` (T, d) are
    likewise constant.  Used to drive estimators with hand-set numbers.
    """

    def __init__(self, ell_values, grad_values=None, dim=1):
        self.ell_values = np.asarray(ell_values, dtype=float)
        self.grad_values = (
            None if grad_values is None else np.asarray(grad_values, dtype=float)
        )
        self.dim = dim if grad_values is None else self.grad_values.shape[1]
        self.T = self.ell_values.size

    def eval_upto(self, phi, depth, want_derivatives=False):
        from recursub.models import EvalPath

        ell = self.ell_values[:depth]
        grad = hess = None
        if want_derivatives:
            if self.grad_values is not None:
                grad = self.grad_values[:depth]
            else:
                grad = np.zeros((depth, self.dim))
            hess = np.zeros((depth, self.dim, self.dim))
        return EvalPath(sigma2=np.ones(depth), ell=ell, grad=grad, hess=hess)

    def full_eval(self, phi, want_derivatives=False):
        return self.eval_upto(phi, self.T, want_derivatives)


class QuadraticContext:
    """Exactly quadratic per-observation log-densities.

    ell_t(phi) = a_t + b_t . phi + 0.5 phi . C_t phi, so a second-order
    Taylor control variate is exact and all residuals vanish.
    """

    def __init__(self, a, b, C):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.C = np.asarray(C, dtype=float)
        self.T = self.a.size
        self.dim = self.b.shape[1]

    def eval_upto(self, phi, depth, want_derivatives=False):
        from recursub.models import EvalPath

        phi = np.asarray(phi, dtype=float)
        a, b, C = self.a[:depth], self.b[:depth], self.C[:depth]
        ell = a + b @ phi + 0.5 * np.einsum("i,tij,j->t", phi, C, phi)
        grad = hess = None
        if want_derivatives:
            grad = b + C @ phi
            hess = C.copy()
        return EvalPath(sigma2=np.ones(depth), ell=ell, grad=grad, hess=hess)

    def full_eval(self, phi, want_derivatives=False):
        return self.eval_upto(phi, self.T, want_derivatives)


def stub_cache(context, phi_star=None):
    """Build a ControlVariateCache directly from a stub/quadratic context."""
    from recursub.estimators import build_control_variates

    if phi_star is None:
        phi_star = np.zeros(context.dim)
    return build_control_variates(context, phi_star)


def scheme_from_probs(probs):
    """Wrap a raw probability vector in a SamplingScheme."""
    from recursub.scheme import SamplingScheme, SchemeSpec

    probs = np.asarray(probs, dtype=float)
    return SamplingScheme(
        probs=probs, spec=SchemeSpec(kind="uniform", T=probs.size)
    )
