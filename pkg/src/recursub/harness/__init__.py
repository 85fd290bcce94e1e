"""Experiment harness: data ingestion, orchestration, diagnostics, outputs."""

from .diagnostics import (
    DiagnosticsReport,
    chain_diagnostics,
    effective_sample_size,
    integrated_autocorr_time,
    lis_from_moves,
    longest_immobility_streak,
)
from .figures import (
    FIGURE_KINDS,
    emit_cost_heatmap,
    emit_kde_inputs,
    emit_tpd_profile,
    emit_umax_trace,
    emit_umax_vs_m,
    umax_vs_m_rows,
)
from .io import (
    load_returns,
    read_draws_csv,
    read_json,
    write_csv,
    write_draws_csv,
    write_json,
)
from .lpds import LpdsResult, lpds_evaluate, thin_draws
from .runner import ENGINES, RunConfig, run_experiment

__all__ = [
    "ENGINES",
    "DiagnosticsReport",
    "FIGURE_KINDS",
    "LpdsResult",
    "RunConfig",
    "chain_diagnostics",
    "effective_sample_size",
    "emit_cost_heatmap",
    "emit_kde_inputs",
    "emit_tpd_profile",
    "emit_umax_trace",
    "emit_umax_vs_m",
    "integrated_autocorr_time",
    "lis_from_moves",
    "load_returns",
    "longest_immobility_streak",
    "lpds_evaluate",
    "read_draws_csv",
    "read_json",
    "run_experiment",
    "thin_draws",
    "umax_vs_m_rows",
    "write_csv",
    "write_draws_csv",
    "write_json",
]
