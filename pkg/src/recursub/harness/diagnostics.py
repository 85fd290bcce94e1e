"""Chain diagnostics: effective sample size and immobility streaks."""

from dataclasses import dataclass, field

import numpy as np


def integrated_autocorr_time(x):
    """IACT by Geyer's initial-positive-sequence truncation.

    Sums lag-pair autocorrelations while the pair sums stay positive;
    deterministic and >= 1 up to estimation noise.  Constant series return
    the series length (a single effective sample).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    if np.all(xc == 0.0):
        return float(n)
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    rho = acov / acov[0]
    tau = -1.0  # the k = 0 term is counted twice by the pair sum below
    for j in range(n // 2):
        pair = rho[2 * j] + (rho[2 * j + 1] if 2 * j + 1 < n else 0.0)
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return float(max(tau, 1.0))


def effective_sample_size(x):
    """Per-series ESS = n / IACT, in (0, n]."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if x.ndim == 1:
        return float(min(n / integrated_autocorr_time(x), n))
    return np.array(
        [min(n / integrated_autocorr_time(x[:, j]), n) for j in range(x.shape[1])]
    )


def longest_immobility_streak(values):
    """Longest run of consecutive iterations with no change of state.

    An iteration is a non-move when its value equals the previous
    iteration's value exactly; e.g. [1, 1, 1, 2, 2] has streak 2.
    """
    values = np.asarray(values)
    if values.shape[0] < 2:
        return 0
    if values.ndim == 1:
        same = values[1:] == values[:-1]
    else:
        same = np.all(values[1:] == values[:-1], axis=1)
    longest = run = 0
    for s in same:
        run = run + 1 if s else 0
        longest = max(longest, run)
    return int(longest)


def lis_from_moves(moves):
    """Longest run of consecutive rejections in a move-indicator array."""
    longest = run = 0
    for m in np.asarray(moves, dtype=bool):
        run = 0 if m else run + 1
        longest = max(longest, run)
    return int(longest)


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-chain summary used in run outputs."""

    ess: dict
    lis: int
    acceptance_rate: float
    compute_fraction: float = None
    timings: dict = field(default_factory=dict)
    mean_depth: float = None

    def to_dict(self):
        out = {
            "ess": {k: float(v) for k, v in self.ess.items()},
            "lis": self.lis,
            "acceptance_rate": self.acceptance_rate,
            "timings": self.timings,
        }
        if self.compute_fraction is not None:
            out["compute_fraction"] = self.compute_fraction
        if self.mean_depth is not None:
            out["mean_depth"] = self.mean_depth
        return out


def chain_diagnostics(chain, param_names=None, compute_fraction=None):
    """DiagnosticsReport for a ChainOutput.

    ESS is computed per parameter from the retained draws; the immobility
    streak uses the full move record (burn-in included) when available.
    """
    draws = chain.draws
    names = param_names or [f"param{j}" for j in range(draws.shape[1])]
    ess = dict(zip(names, effective_sample_size(draws)))
    if chain.moves is not None and chain.moves.size:
        lis = lis_from_moves(chain.moves)
    else:
        lis = longest_immobility_streak(draws)
    mean_depth = (
        float(chain.depth_trace.mean()) if chain.depth_trace is not None else None
    )
    return DiagnosticsReport(
        ess=ess,
        lis=lis,
        acceptance_rate=chain.acceptance_rate,
        compute_fraction=compute_fraction,
        timings=dict(chain.timings),
        mean_depth=mean_depth,
    )
