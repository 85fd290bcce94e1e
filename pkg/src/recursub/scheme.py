"""Subsampling probability schemes over time indices 1..T.

The central scheme gives truncated power-law decaying probabilities: the
head indices t <= head_len get weights proportional to (t + offset)^(-decay),
the tail indices share a constant per-element probability, and the tail mass
is pinned by requiring the last head probability to equal the per-element
tail probability.  Uniform, pure power-law, and exponential schemes are kept
for comparison.

Head weights are computed in log space throughout, so aggressive decay rates
do not underflow.  Index draws use an alias table, O(1) per draw after an
O(T) build.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exceptions import DomainError

UNIFORM = "uniform"
POWER_LAW = "power_law"
EXPONENTIAL = "exponential"
TPD = "tpd"


@dataclass(frozen=True)
class SchemeSpec:
    """Hyperparameters generating a probability vector over 1..T.

    kind:
      - "uniform": p_t = 1/T
      - "power_law": p_t proportional to t^(-rate), rate > 1
      - "exponential": p_t proportional to exp(-rate * t), rate > 0
      - "tpd": truncated power-law decay with (decay >= 0, head_len, offset)
    """

    kind: str
    T: int
    rate: float = None
    decay: float = None
    head_len: int = None
    offset: float = 0.0

    def __post_init__(self):
        if self.T < 1:
            raise DomainError("T must be >= 1")
        if self.kind == UNIFORM:
            return
        if self.kind == POWER_LAW:
            if self.rate is None or self.rate <= 1:
                raise DomainError("power-law rate must be > 1")
        elif self.kind == EXPONENTIAL:
            if self.rate is None or self.rate <= 0:
                raise DomainError("exponential rate must be > 0")
        elif self.kind == TPD:
            if self.decay is None or self.decay < 0:
                raise DomainError("decay must be >= 0")
            if self.head_len is None or not 2 <= self.head_len < self.T:
                raise DomainError("head_len must satisfy 2 <= head_len < T")
            if self.offset < 0:
                raise DomainError("offset must be >= 0")
        else:
            raise DomainError(f"unknown scheme kind {self.kind!r}")


def _log_head_weights(decay, head_len, offset):
    """log (t + offset)^(-decay) for t = 1..head_len."""
    t = np.arange(1, head_len + 1, dtype=float)
    return -decay * np.log(t + offset)


def tail_mass(decay, head_len, offset, T):
    """Tail probability mass of the TPD scheme.

    Determined by matching the last head probability to the per-element tail
    probability; strictly decreasing in the decay rate for head_len >= 2.
    """
    if not 1 <= head_len < T:
        raise DomainError("head_len must satisfy 1 <= head_len < T")
    if decay < 0 or offset < 0:
        raise DomainError("decay and offset must be >= 0")
    log_w = _log_head_weights(decay, head_len, offset)
    log_num = log_w[-1] + np.log(T - head_len)
    log_den = np.logaddexp(log_num, logsumexp(log_w))
    return float(np.exp(log_num - log_den))


class AliasTable:
    """Walker/Vose alias method for O(1) draws from a finite distribution."""

    def __init__(self, probs):
        probs = np.asarray(probs, dtype=float)
        n = probs.size
        scaled = probs * n / probs.sum()
        self.prob = np.ones(n)
        self.alias = np.arange(n)
        small = [i for i in range(n) if scaled[i] < 1.0]
        large = [i for i in range(n) if scaled[i] >= 1.0]
        while small and large:
            s = small.pop()
            l = large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = l
            scaled[l] -= 1.0 - scaled[s]
            if scaled[l] < 1.0:
                small.append(l)
            else:
                large.append(l)
        for i in small + large:
            self.prob[i] = 1.0

    def draw(self, rng, size):
        k = rng.integers(0, self.prob.size, size=size)
        accept = rng.random(size) < self.prob[k]
        return np.where(accept, k, self.alias[k])


@dataclass(frozen=True)
class SamplingScheme:
    """A normalised probability vector with head/tail structure.

    ``probs[k]`` is the probability of time index t = k + 1.  ``head_len``
    is 0 for non-TPD kinds; ``tail_mass`` is None unless the scheme is TPD.
    The alias table is built once at construction.
    """

    probs: np.ndarray
    spec: SchemeSpec
    head_len: int = 0
    tail_mass: float = None
    _alias: AliasTable = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "probs", np.asarray(self.probs, dtype=float))
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise DomainError("probabilities must sum to 1")
        if np.any(self.probs <= 0):
            raise DomainError("all probabilities must be positive")
        object.__setattr__(self, "_alias", AliasTable(self.probs))

    @property
    def T(self):
        return self.probs.size


def build_scheme(spec):
    """Construct the normalised SamplingScheme for a SchemeSpec."""
    T = spec.T
    if spec.kind == UNIFORM:
        return SamplingScheme(probs=np.full(T, 1.0 / T), spec=spec)
    if spec.kind == POWER_LAW:
        log_w = -spec.rate * np.log(np.arange(1, T + 1, dtype=float))
        probs = np.exp(log_w - logsumexp(log_w))
        return SamplingScheme(probs=probs / probs.sum(), spec=spec)
    if spec.kind == EXPONENTIAL:
        log_w = -spec.rate * np.arange(1, T + 1, dtype=float)
        probs = np.exp(log_w - logsumexp(log_w))
        return SamplingScheme(probs=probs / probs.sum(), spec=spec)

    eps = tail_mass(spec.decay, spec.head_len, spec.offset, T)
    log_w = _log_head_weights(spec.decay, spec.head_len, spec.offset)
    head = np.exp(log_w - logsumexp(log_w)) * (1.0 - eps)
    tail = np.full(T - spec.head_len, eps / (T - spec.head_len))
    probs = np.concatenate([head, tail])
    probs = probs / probs.sum()
    return SamplingScheme(
        probs=probs, spec=spec, head_len=spec.head_len, tail_mass=eps
    )


def tpd_scheme(T, floor_frac, head_len, offset):
    """TPD scheme at the most aggressive decay allowed by a tail floor.

    ``floor_frac`` in (0, 1] is the per-element tail probability floor
    relative to uniform sampling; the decay rate is set to its safeguarded
    maximum.  floor_frac = 1 gives exactly uniform probabilities.
    """
    decay = max_decay(floor_frac, head_len, offset, T)
    return build_scheme(
        SchemeSpec(kind=TPD, T=T, decay=decay, head_len=head_len, offset=offset)
    )


def max_decay(floor_frac, head_len, offset, T, tol=1e-10):
    """Largest decay rate whose tail mass still meets the safeguard floor.

    Solves tail_mass(decay) = floor_frac * (T - head_len) / T by bisection;
    the tolerance is on the tail mass (the contractual quantity), not on the
    decay rate.  Returns 0 for floor_frac = 1.
    """
    if not 0 < floor_frac <= 1:
        raise DomainError("floor fraction must lie in (0, 1]")
    if not 2 <= head_len < T:
        raise DomainError(
            "head_len must satisfy 2 <= head_len < T (tail mass is constant "
            "in the decay rate for a single-element head)"
        )
    target = floor_frac * (T - head_len) / T
    if floor_frac == 1.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while tail_mass(hi, head_len, offset, T) > target:
        lo, hi = hi, hi * 2.0
        if hi > 1e6:
            raise DomainError("bracketing failed; tail mass does not reach target")
    while True:
        mid = 0.5 * (lo + hi)
        e = tail_mass(mid, head_len, offset, T)
        if abs(e - target) <= tol:
            return mid
        if e > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15 * max(1.0, hi):
            return mid


def decay_for_tail_mass(eps_target, head_len, offset, T, tol=1e-10):
    """Decay rate whose tail mass equals ``eps_target`` (by bisection)."""
    floor_frac = eps_target * T / (T - head_len)
    return max_decay(floor_frac, head_len, offset, T, tol=tol)


def draw_indices(scheme, m, rng):
    """Draw m i.i.d. time indices (with replacement) from the scheme.

    Returns (indices, depth): ``indices`` are 0-based positions into the data
    array (time index t corresponds to position t - 1) and ``depth`` is the
    largest sampled time index, i.e. the number of recursion steps needed to
    evaluate the drawn observations.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    idx = scheme._alias.draw(rng, m)
    return idx, int(idx.max()) + 1
