"""Expected-cost formulas and the constrained tuner for (floor, subsample size).

The tuner minimises the expected recursion depth of one estimator evaluation
subject to a variance tolerance and a lower bound on the tail floor fraction.
For a fixed floor the variance constraint pins the smallest feasible
subsample size, which reduces the search to one dimension; the objective is
evaluated on a geometric floor grid with a golden-section refinement pass.
"""

import math
from dataclasses import dataclass

import numpy as np

from .estimators import exact_variance, residuals_at
from .exceptions import DomainError, Infeasible
from .scheme import tpd_scheme

VARIANCE_BINDING = "variance_constraint"
SAFEGUARD_BINDING = "safeguard_bound"
NO_BINDING = "none"

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class CostProfile:
    """Expected recursion depth of one estimator evaluation."""

    expected_depth: float
    bound: float
    m: int
    scheme: object


@dataclass(frozen=True)
class TuningResult:
    """Outcome of the constrained cost-variance tuner.

    ``floor_frac`` is the tuned tail floor fraction, ``subsample_size`` the
    smallest feasible subsample size at that floor, and ``binding`` reports
    which constraint pins the solution: the variance tolerance, the
    safeguard lower bound, or neither.
    """

    floor_frac: float
    subsample_size: int
    decay: float
    tail_mass: float
    tolerance: float
    expected_depth: float
    ref_phi: np.ndarray
    binding: str
    sigma2_at_optimum: float
    head_len: int
    offset: float
    T: int

    def to_dict(self):
        return {
            "floor_frac": self.floor_frac,
            "subsample_size": self.subsample_size,
            "decay": self.decay,
            "tail_mass": self.tail_mass,
            "tolerance": self.tolerance,
            "expected_depth": self.expected_depth,
            "ref_phi": list(map(float, np.atleast_1d(self.ref_phi))),
            "binding": self.binding,
            "sigma2_at_optimum": self.sigma2_at_optimum,
            "head_len": self.head_len,
            "offset": self.offset,
            "T": self.T,
        }


def expected_umax(probs, m):
    """Exact expected value of the largest of m i.i.d. index draws.

    Uses the tail-sum formula over cumulative probabilities; the power is
    taken in log space so near-unit cumulative sums stay accurate.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    probs = np.asarray(probs, dtype=float)
    T = probs.size
    cum = np.clip(np.cumsum(probs)[:-1], 0.0, 1.0)
    with np.errstate(divide="ignore"):
        powers = np.where(cum > 0.0, np.exp(m * np.log(cum)), 0.0)
    return float(T - powers.sum())


def expected_umax_scheme(scheme, m):
    """CostProfile for a SamplingScheme (bound only defined for TPD)."""
    value = expected_umax(scheme.probs, m)
    if scheme.tail_mass is not None:
        bound = expected_umax_bound(scheme.head_len, scheme.T, scheme.tail_mass, m)
    else:
        bound = float(scheme.T)
    return CostProfile(expected_depth=value, bound=bound, m=m, scheme=scheme)


def expected_umax_bound(head_len, T, eps, m):
    """Closed-form upper bound: head_len + (T - head_len)(1 - (1 - eps)^m)."""
    if not 0 < eps < 1:
        raise DomainError("tail mass must lie in (0, 1)")
    if m < 1:
        raise DomainError("m must be >= 1")
    return float(head_len - (T - head_len) * np.expm1(m * np.log1p(-eps)))


def calibrate_tolerance(cache, pilot_phis, r_max, m_ref=1):
    """Pilot-based variance tolerance and tuning reference point.

    For each pilot draw, the intrinsic estimator variance under uniform
    sampling with ``m_ref`` draws is scaled by the allowed inflation factor
    ``r_max``; the tolerance is the lower median of these candidates and the
    reference point is the draw attaining it (so the tolerance is always an
    attained value and the reference is well-defined).

    A candidate of exactly zero means the pilot draw coincides with the
    control-variate centre (residuals vanish there by construction) and
    carries no scale information, so zero candidates are excluded from the
    median.  If every candidate is zero the tolerance is unconstrained
    (infinite) and the first draw is the reference.

    Returns (tolerance, ref_phi, per-draw candidates).
    """
    if r_max < 1:
        raise DomainError("r_max must be >= 1")
    if m_ref < 1:
        raise DomainError("m_ref must be >= 1")
    pilot_phis = [np.asarray(p, dtype=float) for p in pilot_phis]
    if not pilot_phis:
        raise DomainError("need at least one pilot draw")
    T = cache.T
    uniform = np.full(T, 1.0 / T)
    candidates = np.array(
        [
            r_max * exact_variance(residuals_at(cache, phi), uniform, m_ref)
            for phi in pilot_phis
        ]
    )
    informative = np.flatnonzero(candidates > 0.0)
    if informative.size == 0:
        return np.inf, pilot_phis[0], candidates
    order = informative[np.argsort(candidates[informative], kind="stable")]
    j_star = order[(order.size - 1) // 2]  # lower median, ties -> lowest index
    return float(candidates[j_star]), pilot_phis[j_star], candidates


def _sigma2_of_floor(residuals, T, head_len, offset):
    """sigma^2(floor) evaluator reusing one residual vector across floors."""

    def sigma2(floor_frac):
        scheme = tpd_scheme(T, floor_frac, head_len, offset)
        return exact_variance(residuals, scheme.probs, 1), scheme

    return sigma2


def tune(
    residuals,
    T,
    head_len,
    offset,
    r_max,
    tolerance,
    ref_phi=None,
    m_floor=1,
    n_grid=60,
):
    """Minimise expected recursion depth subject to the variance tolerance.

    ``residuals`` is the control-variate residual vector at the tuning
    reference point.  The floor grid is geometric on [1/r_max, 1] with a
    golden-section refinement around the grid optimum; infeasible floors
    (those needing more than T subsample draws) are excluded.  Ties prefer
    the smallest floor.
    """
    if m_floor not in (1, 2):
        raise DomainError("m_floor must be 1 or 2")
    if tolerance <= 0:
        raise DomainError("tolerance must be positive")
    residuals = np.asarray(residuals, dtype=float)
    if residuals.shape != (T,):
        raise DomainError("residual vector length must equal T")
    c_min = 1.0 / r_max
    if not 0 < c_min <= 1:
        raise DomainError("r_max must be >= 1")
    sigma2 = _sigma2_of_floor(residuals, T, head_len, offset)

    def evaluate(floor_frac):
        s2, scheme = sigma2(floor_frac)
        m_needed = max(1, math.ceil(s2 / tolerance)) if s2 > 0 else 0
        if m_needed > T:
            return None
        m = max(m_needed, m_floor)
        return expected_umax(scheme.probs, m), m, s2, scheme

    grid = np.geomspace(c_min, 1.0, n_grid)
    grid[0], grid[-1] = c_min, 1.0
    results = [(c, evaluate(c)) for c in grid]
    feasible = [(c, r) for c, r in results if r is not None]
    if not feasible:
        raise Infeasible(
            "no floor in [1/r_max, 1] meets the variance tolerance even at m = T"
        )
    best_i = min(
        range(len(feasible)), key=lambda i: (feasible[i][1][0], feasible[i][0])
    )
    c_best = feasible[best_i][0]

    # golden-section refinement inside the bracket around the grid optimum
    grid_pos = int(np.searchsorted(grid, c_best))
    lo = grid[max(grid_pos - 1, 0)]
    hi = grid[min(grid_pos + 1, n_grid - 1)]
    a, b = lo, hi
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1, f2 = evaluate(x1), evaluate(x2)
    for _ in range(40):
        v1 = f1[0] if f1 is not None else np.inf
        v2 = f2[0] if f2 is not None else np.inf
        if v1 <= v2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = evaluate(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = evaluate(x2)
    candidates = [(c_best, feasible[best_i][1])]
    for c, f in [(x1, f1), (x2, f2)]:
        if f is not None:
            candidates.append((c, f))
    c_star, best = min(candidates, key=lambda cr: (cr[1][0], cr[0]))
    cost, m_star, s2_star, scheme = best

    m_needed = max(1, math.ceil(s2_star / tolerance)) if s2_star > 0 else 0
    if m_needed == m_star:
        binding = VARIANCE_BINDING
    elif abs(c_star - c_min) <= 1e-12 * max(1.0, c_min):
        binding = SAFEGUARD_BINDING
    else:
        binding = NO_BINDING

    return TuningResult(
        floor_frac=float(c_star),
        subsample_size=int(m_star),
        decay=float(scheme.spec.decay) if scheme.spec.kind == "tpd" else 0.0,
        tail_mass=float(scheme.tail_mass)
        if scheme.tail_mass is not None
        else (T - head_len) / T,
        tolerance=float(tolerance),
        expected_depth=float(cost),
        ref_phi=np.asarray(ref_phi) if ref_phi is not None else np.empty(0),
        binding=binding,
        sigma2_at_optimum=float(s2_star),
        head_len=head_len,
        offset=offset,
        T=T,
    )


def tune_uniform(residuals, T, tolerance, m_floor=1):
    """Smallest feasible subsample size under uniform probabilities.

    The uniform analogue of the tuner: no floor to choose, the variance
    tolerance alone pins m.
    """
    residuals = np.asarray(residuals, dtype=float)
    uniform = np.full(T, 1.0 / T)
    s2 = exact_variance(residuals, uniform, 1)
    m_needed = max(1, math.ceil(s2 / tolerance)) if s2 > 0 else 0
    if m_needed > T:
        raise Infeasible("even m = T violates the variance tolerance")
    m = max(m_needed, m_floor)
    return m, s2
