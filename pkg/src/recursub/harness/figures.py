"""Machine-readable plot data for the cost and scheme figures.

Every emitter writes a long-format CSV; heatmap and curve values come from
the exact expected-cost formula, never from simulation.
"""

import numpy as np

from ..exceptions import DomainError
from ..models import ReparamMap
from ..scheme import tpd_scheme
from ..tuning import expected_umax, expected_umax_bound
from .io import write_csv

FIGURE_KINDS = ("umax_vs_m", "cost_heatmap", "tpd_profile", "umax_trace",
                "kde_inputs")


def umax_vs_m_rows(T, head_len, offset, floors, m_values):
    """Expected depth vs subsample size for uniform and decaying schemes.

    Pass 1.0 among the floors to include the uniform curve.
    """
    schemes = [(floor, tpd_scheme(T, floor, head_len, offset)) for floor in floors]
    rows = []
    for m in m_values:
        for floor, scheme in schemes:
            eps = scheme.tail_mass
            rows.append(
                (
                    "uniform" if floor == 1.0 else "tpd",
                    floor,
                    eps,
                    int(m),
                    expected_umax(scheme.probs, m),
                    expected_umax_bound(head_len, T, eps, m),
                )
            )
    return rows


def emit_umax_vs_m(path, T, head_len, offset, floors, m_values):
    rows = umax_vs_m_rows(T, head_len, offset, floors, m_values)
    write_csv(
        path,
        ["scheme", "floor_frac", "tail_mass", "m", "expected_umax", "bound"],
        rows,
        comment=f"T={T} head_len={head_len} offset={offset}",
    )


def emit_cost_heatmap(path, T, head_len, offset, floors, m_values):
    """Expected-cost ratio over a (floor, m) grid, exact formula."""
    rows = []
    for floor in floors:
        scheme = tpd_scheme(T, floor, head_len, offset)
        for m in m_values:
            value = expected_umax(scheme.probs, m)
            rows.append((floor, int(m), value, value / T))
    write_csv(
        path,
        ["floor_frac", "m", "expected_umax", "cost_ratio"],
        rows,
        comment=f"T={T} head_len={head_len} offset={offset}",
    )


def emit_tpd_profile(path, T, head_len, offset, tail_mass_target):
    """Per-index sampling probabilities at a target tail mass."""
    from ..scheme import SchemeSpec, build_scheme, decay_for_tail_mass

    decay = decay_for_tail_mass(tail_mass_target, head_len, offset, T)
    scheme = build_scheme(
        SchemeSpec(kind="tpd", T=T, decay=decay, head_len=head_len,
                   offset=offset)
    )
    rows = [
        (t + 1, scheme.probs[t], "head" if t < head_len else "tail")
        for t in range(T)
    ]
    write_csv(
        path,
        ["t", "probability", "segment"],
        rows,
        comment=(
            f"T={T} head_len={head_len} offset={offset} "
            f"decay={decay!r} tail_mass={scheme.tail_mass!r}"
        ),
    )
    return scheme


def emit_umax_trace(path, chain):
    if chain.depth_trace is None:
        raise DomainError("chain has no recursion-depth trace")
    rows = [(it + 1, int(d)) for it, d in enumerate(chain.depth_trace)]
    write_csv(path, ["iteration", "depth"], rows)


def emit_kde_inputs(path, spec, draws_phi):
    """Posterior draws mapped to the original parameters, one column each."""
    rmap = ReparamMap.for_spec(spec)
    thetas = rmap.to_theta(np.atleast_2d(np.asarray(draws_phi, dtype=float)))
    write_csv(path, spec.param_names, thetas)
