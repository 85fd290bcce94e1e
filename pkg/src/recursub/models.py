"""GARCH-family volatility models: recursions, log-densities, exact derivatives.

The conditional variance of the observed series follows either a GARCH(p, q)
or a threshold GARCH(p, q) recursion, with Gaussian or standardised Student-t
measurement errors.  All derivative computations are exact recursions (no
automatic differentiation): per-observation gradients and Hessians of the
log-density are propagated forward in a single pass, in both the original
(theta) and unconstrained (phi) parameterisations.

The forward recursions are expressed as linear filters in the beta lags and
evaluated with ``scipy.signal.lfilter``, so a full path with derivatives costs
O(n * max(p, q)) with C-speed inner loops.

Parameter layout (theta space), always in this order:

    mu, omega, alpha_1..alpha_p, [gamma_1..gamma_p], beta_1..beta_q, [nu]

where the gamma block exists only for TGARCH and nu only for Student-t
errors.  The threshold indicator 1(y < mu) is replaced by a smooth logistic
surrogate in the likelihood itself (not only in derivatives), so analytic
derivatives and finite differences target the same function.
"""

import threading
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfiltic
from scipy.special import gammaln, polygamma

from .exceptions import (
    DimensionMismatch,
    DomainError,
    NonPositiveVariance,
    NonStationary,
)

GARCH = "garch"
TGARCH = "tgarch"
NORMAL = "normal"
STUDENT_T = "student_t"

#: Variance values at or below this are treated as invalid parameter states.
VARIANCE_FLOOR = 1e-300

_step_lock = threading.Lock()
_step_count = 0


def recursion_steps():
    """Total variance-recursion steps executed since the last reset."""
    return _step_count


def reset_recursion_steps():
    """Reset the global recursion-step counter (used for cost accounting)."""
    global _step_count
    with _step_lock:
        _step_count = 0


def _count_steps(n):
    global _step_count
    with _step_lock:
        _step_count += n


@dataclass(frozen=True)
class ModelSpec:
    """Volatility family, orders, error law, and threshold smoothing.

    Parameters
    ----------
    family : str
        ``"garch"`` or ``"tgarch"``.
    p : int
        ARCH order (lags of squared shocks), >= 1.
    q : int
        Variance-lag order, >= 1.
    error : str
        ``"normal"`` or ``"student_t"``.
    logistic_steepness : float
        Steepness k of the logistic surrogate for the TGARCH threshold
        indicator; larger k means a sharper transition.  Used only when
        ``family == "tgarch"``.
    """

    family: str = GARCH
    p: int = 1
    q: int = 1
    error: str = NORMAL
    logistic_steepness: float = 100.0

    def __post_init__(self):
        if self.family not in (GARCH, TGARCH):
            raise DomainError(f"unknown family {self.family!r}")
        if self.error not in (NORMAL, STUDENT_T):
            raise DomainError(f"unknown error law {self.error!r}")
        if self.p < 1 or self.q < 1:
            raise DomainError("orders p and q must be >= 1")
        if self.logistic_steepness <= 0:
            raise DomainError("logistic_steepness must be > 0")

    @property
    def has_leverage(self):
        return self.family == TGARCH

    @property
    def has_nu(self):
        return self.error == STUDENT_T

    @property
    def var_dim(self):
        """Dimension of the variance parameter block (excludes nu)."""
        return 2 + self.p + self.q + (self.p if self.has_leverage else 0)

    @property
    def dim(self):
        return self.var_dim + (1 if self.has_nu else 0)

    @property
    def param_names(self):
        names = ["mu", "omega"]
        names += [f"alpha{i}" for i in range(1, self.p + 1)]
        if self.has_leverage:
            names += [f"gamma{i}" for i in range(1, self.p + 1)]
        names += [f"beta{j}" for j in range(1, self.q + 1)]
        if self.has_nu:
            names.append("nu")
        return names

    def unpack(self, theta):
        """Split a theta vector into (mu, omega, alpha, gamma, beta, nu)."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise DimensionMismatch(
                f"expected parameter vector of length {self.dim}, got {theta.shape}"
            )
        p, q = self.p, self.q
        mu, omega = theta[0], theta[1]
        alpha = theta[2 : 2 + p]
        pos = 2 + p
        if self.has_leverage:
            gamma = theta[pos : pos + p]
            pos += p
        else:
            gamma = None
        beta = theta[pos : pos + q]
        nu = theta[pos + q] if self.has_nu else None
        return mu, omega, alpha, gamma, beta, nu

    def stationarity_margin(self, theta):
        """1 - (sum alpha + 0.5 sum gamma + sum beta); positive iff stationary."""
        _, _, alpha, gamma, beta, _ = self.unpack(theta)
        s = alpha.sum() + beta.sum()
        if gamma is not None:
            s += 0.5 * gamma.sum()
        return 1.0 - s


@dataclass(frozen=True)
class ParamVector:
    """A parameter point in either the original or unconstrained space.

    ``space`` is ``"theta"`` (original, constrained) or ``"phi"``
    (unconstrained reals).  ``coords`` follows the layout documented in the
    module docstring.
    """

    coords: np.ndarray
    space: str = "theta"

    def __post_init__(self):
        object.__setattr__(
            self, "coords", np.asarray(self.coords, dtype=float).copy()
        )
        if self.space not in ("theta", "phi"):
            raise DomainError(f"unknown parameter space {self.space!r}")


# Transform kinds used by ReparamMap.
IDENTITY = "identity"
LOG = "log"
LOG_SHIFT2 = "log_shift2"


@dataclass(frozen=True)
class ReparamMap:
    """Elementwise map between theta and phi coordinates.

    Kinds per coordinate: identity (mu), log (omega, alpha, gamma, beta)
    and log(theta - 2) for the degrees of freedom.
    """

    kinds: tuple

    @classmethod
    def for_spec(cls, spec):
        kinds = [IDENTITY, LOG]
        kinds += [LOG] * spec.p
        if spec.has_leverage:
            kinds += [LOG] * spec.p
        kinds += [LOG] * spec.q
        if spec.has_nu:
            kinds.append(LOG_SHIFT2)
        return cls(kinds=tuple(kinds))

    @property
    def dim(self):
        return len(self.kinds)

    def _check(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape[-1:] != (self.dim,):
            raise DimensionMismatch(
                f"expected trailing dimension {self.dim}, got {vec.shape}"
            )
        return vec

    def to_phi(self, theta):
        """Map theta to phi; operates on the last axis (batches allowed)."""
        theta = self._check(theta)
        phi = np.empty_like(theta)
        for i, kind in enumerate(self.kinds):
            x = theta[..., i]
            if kind == IDENTITY:
                phi[..., i] = x
            elif kind == LOG:
                if np.any(x <= 0):
                    raise DomainError(f"coordinate {i} must be > 0 for log map")
                phi[..., i] = np.log(x)
            else:
                if np.any(x <= 2):
                    raise DomainError(f"coordinate {i} must be > 2 for shifted log map")
                phi[..., i] = np.log(x - 2.0)
        return phi

    def to_theta(self, phi):
        """Map phi to theta; operates on the last axis (batches allowed)."""
        phi = self._check(phi)
        theta = np.empty_like(phi)
        for i, kind in enumerate(self.kinds):
            x = phi[..., i]
            if kind == IDENTITY:
                theta[..., i] = x
            elif kind == LOG:
                theta[..., i] = np.exp(x)
            else:
                theta[..., i] = np.exp(x) + 2.0
        return theta

    def inv_derivs(self, phi):
        """First and second derivatives of theta_i = h_i^{-1}(phi_i)."""
        phi = self._check(phi)
        if phi.ndim != 1:
            raise DimensionMismatch("inv_derivs expects a single point")
        d1 = np.ones_like(phi)
        d2 = np.zeros_like(phi)
        for i, kind in enumerate(self.kinds):
            if kind != IDENTITY:
                e = np.exp(phi[i])
                d1[i] = e
                d2[i] = e
        return d1, d2

    def log_jacobian(self, phi):
        """log |det d theta / d phi| (sum of log first derivatives)."""
        d1, _ = self.inv_derivs(phi)
        return float(np.sum(np.log(d1)))


@dataclass(frozen=True)
class PreSample:
    """Known pre-sample values, most recent first.

    ``y_init[j]`` is y_{-j} and ``sigma2_init[j]`` is sigma^2_{-j}, so the
    first entries are y_0 and sigma^2_0.
    """

    y_init: np.ndarray
    sigma2_init: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y_init", np.asarray(self.y_init, dtype=float))
        object.__setattr__(
            self, "sigma2_init", np.asarray(self.sigma2_init, dtype=float)
        )
        if np.any(self.sigma2_init <= 0):
            raise DomainError("pre-sample variances must be positive")

    def check(self, spec):
        if self.y_init.shape != (spec.p,) or self.sigma2_init.shape != (spec.q,):
            raise DimensionMismatch(
                f"pre-sample lengths {self.y_init.shape[0]}/{self.sigma2_init.shape[0]} "
                f"do not match orders (p={spec.p}, q={spec.q})"
            )
        return self


def default_presample(spec, data):
    """Neutral pre-sample: series mean for y, series variance for sigma^2."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise DomainError("cannot build a default pre-sample from an empty series")
    ybar = float(data.mean())
    s2 = float(data.var(ddof=1)) if data.size > 1 else 1.0
    if s2 <= 0:
        s2 = 1.0
    return PreSample(
        y_init=np.full(spec.p, ybar), sigma2_init=np.full(spec.q, s2)
    )


@dataclass(frozen=True)
class ObsDerivatives:
    """Log-density value with gradient and Hessian at one observation."""

    ell: float
    grad: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True)
class LogDensityPartials:
    """Partial derivatives of the per-observation log-density.

    All fields are arrays over observations.  The nu-block fields are None
    for Gaussian errors.
    """

    ell: np.ndarray
    d_mu: np.ndarray
    d_s2: np.ndarray
    d_mumu: np.ndarray
    d_s2s2: np.ndarray
    d_mus2: np.ndarray
    d_nu: np.ndarray = None
    d_nunu: np.ndarray = None
    d_munu: np.ndarray = None
    d_s2nu: np.ndarray = None


@dataclass(frozen=True)
class EvalPath:
    """Per-observation log-densities and (optionally) phi-space derivatives.

    ``ell`` has one entry per evaluated time step; ``grad``/``hess`` are
    stacked per-step arrays or None when derivatives were not requested.
    """

    sigma2: np.ndarray
    ell: np.ndarray
    grad: np.ndarray = None
    hess: np.ndarray = None

    @property
    def total_ell(self):
        return float(self.ell.sum())

    @property
    def total_grad(self):
        return None if self.grad is None else self.grad.sum(axis=0)

    @property
    def total_hess(self):
        return None if self.hess is None else self.hess.sum(axis=0)

    def obs(self, t):
        """ObsDerivatives for step t (0-based)."""
        g = None if self.grad is None else self.grad[t]
        h = None if self.hess is None else self.hess[t]
        return ObsDerivatives(ell=float(self.ell[t]), grad=g, hess=h)

    @property
    def totals(self):
        return ObsDerivatives(
            ell=self.total_ell, grad=self.total_grad, hess=self.total_hess
        )


def _logistic_terms(spec, z):
    """Smoothed threshold indicator and its first two mu-derivatives.

    The indicator 1(y_{t-i} < mu) = H(mu - y_{t-i}) is replaced by the
    logistic Lambda_k(mu - y) = Lambda_k(-z).  Returns (G, G1, G2), each with
    the shape of ``z``.
    """
    k = spec.logistic_steepness
    lam = 1.0 / (1.0 + np.exp(np.clip(k * z, -700.0, 700.0)))
    g1 = k * lam * (1.0 - lam)
    g2 = k * g1 * (1.0 - 2.0 * lam)
    return lam, g1, g2


def _lagged(ext, order, n):
    """Matrix of lagged values: column i-1 holds x_{t-i} for t = 1..n.

    ``ext`` is the extended series [x_{1-order}, ..., x_0, x_1, ..., x_n].
    """
    return np.stack(
        [ext[order - i : order - i + n] for i in range(1, order + 1)], axis=1
    )


def _variance_inputs(spec, theta, data, presample, upto):
    """Shared setup for the variance recursions.

    Returns (mu, omega, alpha, gamma, beta, nu, Z, G, G1, G2, a_poly) where Z
    is the (upto, p) matrix of lagged shocks and G* are the logistic terms
    (None for plain GARCH).
    """
    mu, omega, alpha, gamma, beta, nu = spec.unpack(theta)
    data = np.asarray(data, dtype=float)
    if upto is None:
        upto = data.shape[0]
    if upto < 0 or upto > data.shape[0]:
        raise DimensionMismatch(f"upto={upto} outside [0, {data.shape[0]}]")
    presample.check(spec)
    y_ext = np.concatenate([presample.y_init[::-1], data[:upto]])
    Z = _lagged(y_ext - mu, spec.p, upto)
    if spec.has_leverage:
        G, G1, G2 = _logistic_terms(spec, Z)
    else:
        G = G1 = G2 = None
    a_poly = np.concatenate([[1.0], -beta])
    return mu, omega, alpha, gamma, beta, nu, Z, G, a_poly, G1, G2, upto


def variance_path(spec, theta, data, presample, upto=None):
    """Conditional variance path sigma^2_t for t = 1..upto.

    Raises NonPositiveVariance if the recursion leaves the valid region,
    signalling an invalid parameter proposal.
    """
    (_, omega, alpha, gamma, beta, _, Z, G, a_poly, _, _, upto) = _variance_inputs(
        spec, theta, data, presample, upto
    )
    _count_steps(upto)
    if upto == 0:
        return np.empty(0)
    x = omega + (Z**2) @ alpha
    if spec.has_leverage:
        x += (Z**2 * G) @ gamma
    zi = lfiltic([1.0], a_poly, y=presample.sigma2_init)
    sigma2, _ = lfilter([1.0], a_poly, x, zi=zi)
    if not np.all(sigma2 > VARIANCE_FLOOR):
        raise NonPositiveVariance(
            f"sigma^2 fell to {sigma2.min():g}; invalid parameter state"
        )
    return sigma2


def variance_path_with_derivatives(spec, theta, data, presample, upto=None):
    """Variance path with exact per-step gradient and Hessian w.r.t. theta_v.

    Returns (sigma2, grad, hess) with shapes (n,), (n, dv), (n, dv, dv) where
    dv is the variance-block dimension.  Derivative recursions are
    initialised at zero for t <= 0 (pre-sample variances are known
    constants), while pre-sample shocks contribute to the mu derivative like
    ordinary observations.
    """
    (mu, omega, alpha, gamma, beta, nu, Z, G, a_poly, G1, G2, upto) = (
        _variance_inputs(spec, theta, data, presample, upto)
    )
    _count_steps(upto)
    p, q, dv = spec.p, spec.q, spec.var_dim
    if upto == 0:
        return np.empty(0), np.empty((0, dv)), np.empty((0, dv, dv))

    Z2 = Z**2
    x = omega + Z2 @ alpha
    if spec.has_leverage:
        ZG = Z * G
        Z2G1 = Z2 * G1
        x += (Z2 * G) @ gamma
    zi = lfiltic([1.0], a_poly, y=presample.sigma2_init)
    sigma2, _ = lfilter([1.0], a_poly, x, zi=zi)
    if not np.all(sigma2 > VARIANCE_FLOOR):
        raise NonPositiveVariance(
            f"sigma^2 fell to {sigma2.min():g}; invalid parameter state"
        )

    s_ext = np.concatenate([presample.sigma2_init[::-1], sigma2])
    S_lag = _lagged(s_ext, q, upto)

    i_beta = 2 + p + (p if spec.has_leverage else 0)

    base = np.zeros((upto, dv))
    base[:, 0] = -2.0 * (Z @ alpha)
    if spec.has_leverage:
        base[:, 0] -= (2.0 * ZG - Z2G1) @ gamma
    base[:, 1] = 1.0
    base[:, 2 : 2 + p] = Z2
    if spec.has_leverage:
        base[:, 2 + p : 2 + 2 * p] = Z2 * G
    base[:, i_beta : i_beta + q] = S_lag
    grad = lfilter([1.0], a_poly, base, axis=0)

    hbase = np.zeros((upto, dv, dv))
    hbase[:, 0, 0] = 2.0 * alpha.sum()
    hbase[:, 0, 2 : 2 + p] = -2.0 * Z
    hbase[:, 2 : 2 + p, 0] = -2.0 * Z
    if spec.has_leverage:
        hbase[:, 0, 0] += (2.0 * G - 4.0 * Z * G1 + Z2 * G2) @ gamma
        cross = -(2.0 * ZG - Z2G1)
        hbase[:, 0, 2 + p : 2 + 2 * p] = cross
        hbase[:, 2 + p : 2 + 2 * p, 0] = cross
    g_ext = np.concatenate([np.zeros((q, dv)), grad], axis=0)
    for j in range(1, q + 1):
        g_lag = g_ext[q - j : q - j + upto]
        hbase[:, i_beta + j - 1, :] += g_lag
        hbase[:, :, i_beta + j - 1] += g_lag
    hess = lfilter([1.0], a_poly, hbase.reshape(upto, dv * dv), axis=0)
    return sigma2, grad, hess.reshape(upto, dv, dv)


def error_logdensity_partials(error, y, mu, sigma2, nu=None):
    """Per-observation log-density and its partials in (mu, sigma^2, nu).

    ``y`` and ``sigma2`` may be arrays (broadcast together); ``mu`` and
    ``nu`` are scalars.  Raises DomainError for sigma2 <= 0 or nu <= 2.
    """
    y = np.asarray(y, dtype=float)
    s2 = np.asarray(sigma2, dtype=float)
    if np.any(s2 <= 0):
        raise DomainError("sigma^2 must be positive")
    r = y - mu
    w = r**2
    if error == NORMAL:
        ell = -0.5 * np.log(2.0 * np.pi) - 0.5 * np.log(s2) - w / (2.0 * s2)
        return LogDensityPartials(
            ell=ell,
            d_mu=r / s2,
            d_s2=-0.5 / s2 + w / (2.0 * s2**2),
            d_mumu=-1.0 / s2,
            d_s2s2=0.5 / s2**2 - w / s2**3,
            d_mus2=-r / s2**2,
        )
    if error != STUDENT_T:
        raise DomainError(f"unknown error law {error!r}")
    if nu is None or nu <= 2:
        raise DomainError("Student-t requires nu > 2")
    # Standardised Student-t: unit variance, scale sqrt((nu-2)/nu) absorbed.
    D = s2 * (nu - 2.0) + w
    ell = (
        gammaln((nu + 1.0) / 2.0)
        - gammaln(nu / 2.0)
        - 0.5 * np.log(np.pi * (nu - 2.0))
        - 0.5 * np.log(s2)
        - 0.5 * (nu + 1.0) * np.log1p(w / (s2 * (nu - 2.0)))
    )
    psi = lambda z: polygamma(0, z)
    psi1 = lambda z: polygamma(1, z)
    d_nu = (
        0.5 * psi((nu + 1.0) / 2.0)
        - 0.5 * psi(nu / 2.0)
        - 0.5 / (nu - 2.0)
        - 0.5 * np.log1p(w / (s2 * (nu - 2.0)))
        + 0.5 * (nu + 1.0) * w / ((nu - 2.0) * D)
    )
    d_nunu = (
        0.25 * psi1((nu + 1.0) / 2.0)
        - 0.25 * psi1(nu / 2.0)
        + 0.5 / (nu - 2.0) ** 2
        + w / ((nu - 2.0) * D)
        - 0.5 * (nu + 1.0) * w * (2.0 * s2 * (nu - 2.0) + w) / ((nu - 2.0) * D) ** 2
    )
    return LogDensityPartials(
        ell=ell,
        d_mu=(nu + 1.0) * r / D,
        d_s2=-0.5 / s2 + 0.5 * (nu + 1.0) * w / (s2 * D),
        d_mumu=(nu + 1.0) * (2.0 * w / D**2 - 1.0 / D),
        d_s2s2=0.5 / s2**2
        - 0.5 * (nu + 1.0) * w * (2.0 * s2 * (nu - 2.0) + w) / (s2 * D) ** 2,
        d_mus2=-(nu + 1.0) * (nu - 2.0) * r / D**2,
        d_nu=d_nu,
        d_nunu=d_nunu,
        d_munu=r / D - s2 * (nu + 1.0) * r / D**2,
        d_s2nu=0.5 * w / (s2 * D) - 0.5 * (nu + 1.0) * w / D**2,
    )


def assemble_obs_derivatives(spec, partials, grad_sigma2, hess_sigma2):
    """Chain-rule assembly of theta-space log-density derivatives.

    Combines the (mu, sigma^2, nu) partials with the variance-path
    derivatives into stacked per-observation gradients (n, d) and symmetric
    Hessians (n, d, d) for the full theta layout.
    """
    n = partials.ell.shape[0]
    dv, d = spec.var_dim, spec.dim
    gs2 = grad_sigma2
    grad = np.zeros((n, d))
    grad[:, :dv] = partials.d_s2[:, None] * gs2
    grad[:, 0] += partials.d_mu

    hess = np.zeros((n, d, d))
    hess[:, :dv, :dv] = (
        partials.d_s2s2[:, None, None] * gs2[:, :, None] * gs2[:, None, :]
        + partials.d_s2[:, None, None] * hess_sigma2
    )
    hess[:, 0, :dv] += partials.d_mus2[:, None] * gs2
    hess[:, :dv, 0] += partials.d_mus2[:, None] * gs2
    hess[:, 0, 0] += partials.d_mumu
    if spec.has_nu:
        grad[:, dv] = partials.d_nu
        cross = partials.d_s2nu[:, None] * gs2
        cross[:, 0] += partials.d_munu
        hess[:, :dv, dv] = cross
        hess[:, dv, :dv] = cross
        hess[:, dv, dv] = partials.d_nunu
    return partials.ell, grad, hess


def reparam_derivatives(rmap, grad_theta, hess_theta, phi):
    """Map stacked theta-space derivatives to phi space.

    With an elementwise transform, the Jacobian is diagonal; the phi-space
    Hessian gains a diagonal correction from the transform curvature.
    Accepts (n, d)/(n, d, d) stacks or single (d,)/(d, d) arrays.
    """
    d1, d2 = rmap.inv_derivs(phi)
    grad_theta = np.asarray(grad_theta, dtype=float)
    hess_theta = np.asarray(hess_theta, dtype=float)
    single = grad_theta.ndim == 1
    if single:
        grad_theta = grad_theta[None, :]
        hess_theta = hess_theta[None, :, :]
    grad_phi = grad_theta * d1
    hess_phi = hess_theta * d1[None, :, None] * d1[None, None, :]
    idx = np.arange(rmap.dim)
    hess_phi[:, idx, idx] += grad_theta * d2
    if single:
        return grad_phi[0], hess_phi[0]
    return grad_phi, hess_phi


def online_evaluate(spec, param, data, presample, upto=None, want_derivatives=False):
    """Single forward pass over t = 1..upto: log-densities and derivatives.

    ``param`` is a ParamVector in either space; when it lives in phi space,
    returned derivatives are in phi space (theta space otherwise).  The
    global recursion-step counter advances by exactly ``upto``.
    """
    data = np.asarray(data, dtype=float)
    if upto is None:
        upto = data.shape[0]
    rmap = ReparamMap.for_spec(spec)
    if param.space == "phi":
        theta = rmap.to_theta(param.coords)
    else:
        theta = np.asarray(param.coords, dtype=float)

    mu = theta[0]
    nu = theta[-1] if spec.has_nu else None

    if not want_derivatives:
        sigma2 = variance_path(spec, theta, data, presample, upto)
        if upto == 0:
            return EvalPath(sigma2=sigma2, ell=np.empty(0))
        partials = error_logdensity_partials(spec.error, data[:upto], mu, sigma2, nu)
        return EvalPath(sigma2=sigma2, ell=partials.ell)

    sigma2, gs2, hs2 = variance_path_with_derivatives(
        spec, theta, data, presample, upto
    )
    if upto == 0:
        d = spec.dim
        return EvalPath(
            sigma2=sigma2,
            ell=np.empty(0),
            grad=np.empty((0, d)),
            hess=np.empty((0, d, d)),
        )
    partials = error_logdensity_partials(spec.error, data[:upto], mu, sigma2, nu)
    ell, grad, hess = assemble_obs_derivatives(spec, partials, gs2, hs2)
    if param.space == "phi":
        grad, hess = reparam_derivatives(rmap, grad, hess, param.coords)
    return EvalPath(sigma2=sigma2, ell=ell, grad=grad, hess=hess)


def unconditional_variance(spec, theta):
    """Stationary variance of the observed series.

    omega / (1 - sum alpha - sum beta) for GARCH, with an extra
    -0.5 * sum gamma in the denominator for TGARCH (symmetric errors).
    """
    _, omega, _, _, _, _ = spec.unpack(theta)
    margin = spec.stationarity_margin(theta)
    if margin <= 0:
        raise NonStationary(f"stationarity margin {margin:g} <= 0")
    return float(omega / margin)


def simulate(spec, theta, n, presample=None, seed=None):
    """Simulate a series of length n from the model; deterministic given seed.

    Errors are standardised to unit variance (Student-t uses scale
    sqrt((nu-2)/nu)).  The threshold indicator uses the same logistic
    surrogate as evaluation, so simulated and fitted models agree exactly.
    """
    mu, omega, alpha, gamma, beta, nu = spec.unpack(theta)
    if spec.stationarity_margin(theta) <= 0:
        raise NonStationary("simulation requires a stationary parameter point")
    if presample is None:
        v = unconditional_variance(spec, theta)
        presample = PreSample(
            y_init=np.full(spec.p, mu), sigma2_init=np.full(spec.q, v)
        )
    presample.check(spec)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if spec.has_nu:
        eps = rng.standard_t(nu, size=n) * np.sqrt((nu - 2.0) / nu)
    else:
        eps = rng.standard_normal(n)

    p, q = spec.p, spec.q
    k = spec.logistic_steepness
    y_hist = list(presample.y_init[::-1])
    s_hist = list(presample.sigma2_init[::-1])
    out = np.empty(n)
    for t in range(n):
        s2 = omega
        for i in range(1, p + 1):
            z = y_hist[-i] - mu
            s2 += alpha[i - 1] * z * z
            if gamma is not None:
                lam = 1.0 / (1.0 + np.exp(min(max(k * z, -700.0), 700.0)))
                s2 += gamma[i - 1] * z * z * lam
        for j in range(1, q + 1):
            s2 += beta[j - 1] * s_hist[-j]
        y = mu + np.sqrt(s2) * eps[t]
        out[t] = y
        y_hist.append(y)
        s_hist.append(s2)
    return out
