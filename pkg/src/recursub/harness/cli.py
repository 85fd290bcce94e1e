"""Command-line entry point.

Subcommands cover the pipeline stages: ``simulate`` writes a series,
``tune`` stops after hyperparameter tuning, ``fit`` runs the configured
engine end to end, ``lpds`` scores a held-out test set against a finished
run, ``diagnostics`` recomputes chain summaries, and ``figure-data`` emits
plot-ready CSVs.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from ..exceptions import ConfigError, EmptySeries, ParseError, RecursubError
from ..models import ModelSpec, default_presample
from .diagnostics import effective_sample_size, longest_immobility_streak
from .figures import (
    FIGURE_KINDS,
    emit_cost_heatmap,
    emit_kde_inputs,
    emit_tpd_profile,
    emit_umax_vs_m,
)
from .io import load_returns, read_draws_csv, read_json, write_json
from .lpds import lpds_evaluate, thin_draws
from .runner import RunConfig, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _load_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        blob = fh.read()
    if path.endswith((".toml", ".tml")):
        try:
            import tomllib as toml
        except ImportError:
            import tomli as toml
        try:
            return toml.loads(blob.decode("utf-8"))
        except toml.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML: {exc}") from exc
    try:
        return json.loads(blob)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc


def _config_from_args(args, engine_required=True):
    raw = _load_config_file(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    cfg = RunConfig.from_dict(raw)
    if engine_required and cfg.engine is None:
        raise ConfigError("this command requires an 'engine' in the config")
    return cfg


def _cmd_simulate(args):
    cfg = _config_from_args(args, engine_required=False)
    cfg = dataclasses.replace(cfg, engine=None)
    outdir = run_experiment(cfg)
    print(f"wrote {outdir}/series.csv")
    return EXIT_OK


def _cmd_tune(args):
    cfg = _config_from_args(args, engine_required=False)
    engine = cfg.engine or "mcmc-sub"
    if not engine.endswith("-sub"):
        raise ConfigError("tuning applies to the subsampling engines")
    cfg = dataclasses.replace(cfg, engine=engine)
    outdir = run_experiment(cfg, stop_after_tuning=True)
    manifest = read_json(os.path.join(outdir, "manifest.json"))
    print(json.dumps(manifest["tuning"], indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_fit(args):
    cfg = _config_from_args(args)
    outdir = run_experiment(cfg)
    print(f"run complete: {outdir}")
    return EXIT_OK


def _run_model_spec(manifest):
    m = manifest["config"]["model"]
    return ModelSpec(
        family=m.get("family", "garch"),
        p=int(m.get("p", 1)),
        q=int(m.get("q", 1)),
        error=m.get("error", "normal"),
        logistic_steepness=float(m.get("logistic_steepness", 100.0)),
    )


def _training_series(manifest, run_dir):
    source = manifest["data_source"]
    if "simulate" in source:
        _, series = read_draws_csv(os.path.join(run_dir, "series.csv"))
        return series[:, 0], 1.0
    cfgdata = manifest["config"]["data"]
    series, scale = load_returns(
        cfgdata["csv"],
        column=cfgdata.get("column", "return"),
        log_diff=bool(cfgdata.get("log_diff", False)),
    )
    return series, source["scale"]


def _cmd_lpds(args):
    manifest = read_json(os.path.join(args.run, "manifest.json"))
    spec = _run_model_spec(manifest)
    train, scale = _training_series(manifest, args.run)
    test, _ = load_returns(args.test, column=args.column, scale=scale)
    _, draws = read_draws_csv(os.path.join(args.run, f"draws_rep{args.rep}.csv"))
    draws = thin_draws(draws, args.draws)
    result = lpds_evaluate(
        spec, draws, train, test, presample=default_presample(spec, train)
    )
    payload = result.to_dict()
    write_json(os.path.join(args.run, "lpds.json"), payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_diagnostics(args):
    names, draws = read_draws_csv(
        os.path.join(args.run, f"draws_rep{args.rep}.csv")
    )
    ess = effective_sample_size(draws)
    payload = {
        "ess": dict(zip(names, map(float, np.atleast_1d(ess)))),
        "lis_post_burnin": longest_immobility_streak(draws),
        "n_draws": int(draws.shape[0]),
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_figure_data(args):
    raw = _load_config_file(args.config) if args.config else {}
    fig = raw.get("figure", raw)
    T = int(fig.get("T", 10_000))
    head_len = int(fig.get("head_len", 1_000))
    offset = float(fig.get("offset", 100.0))
    out = args.out or f"{args.kind}.csv"
    if args.kind == "umax_vs_m":
        floors = [float(c) for c in fig.get("floors", [0.001, 0.01, 0.1, 1.0])]
        m_values = [int(m) for m in fig.get("m_values", [1, 2, 5, 10, 20, 50, 100])]
        emit_umax_vs_m(out, T, head_len, offset, floors, m_values)
    elif args.kind == "cost_heatmap":
        floors = [float(c) for c in fig.get(
            "floors", list(np.geomspace(0.001, 1.0, 25))
        )]
        m_values = [int(m) for m in fig.get("m_values", [1, 2, 5, 10, 20, 50, 100])]
        emit_cost_heatmap(out, T, head_len, offset, floors, m_values)
    elif args.kind == "tpd_profile":
        emit_tpd_profile(out, T, head_len, offset,
                         float(fig.get("tail_mass", 0.1)))
    elif args.kind == "kde_inputs":
        if args.run is None:
            raise ConfigError("kde_inputs needs --run pointing at a fit run")
        manifest = read_json(os.path.join(args.run, "manifest.json"))
        _, draws = read_draws_csv(
            os.path.join(args.run, f"draws_rep{args.rep}.csv")
        )
        emit_kde_inputs(out, _run_model_spec(manifest), draws)
    else:
        raise ConfigError(
            "umax_trace is emitted into plotdata/ by 'fit' runs; standalone "
            "kinds: umax_vs_m, cost_heatmap, tpd_profile, kde_inputs"
        )
    print(f"wrote {out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="recursub",
        description="Weighted-subsampling inference for recursive likelihoods",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_args(p):
        p.add_argument("--config", required=True, help="TOML or JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    add_config_args(sub.add_parser("simulate", help="write a simulated series"))
    add_config_args(sub.add_parser("tune", help="run tuning only"))
    add_config_args(sub.add_parser("fit", help="run the configured engine"))

    p = sub.add_parser("lpds", help="score a test set against a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--test", required=True, help="test-set CSV")
    p.add_argument("--column", default="return")
    p.add_argument("--rep", type=int, default=0)
    p.add_argument("--draws", type=int, default=100)

    p = sub.add_parser("diagnostics", help="recompute chain diagnostics")
    p.add_argument("--run", required=True)
    p.add_argument("--rep", type=int, default=0)

    p = sub.add_parser("figure-data", help="emit plot-ready CSV data")
    p.add_argument("--kind", required=True, choices=FIGURE_KINDS)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--run", default=None, help="finished run dir (kde_inputs)")
    p.add_argument("--rep", type=int, default=0)
    return parser


_COMMANDS = {
    "simulate": _cmd_simulate,
    "tune": _cmd_tune,
    "fit": _cmd_fit,
    "lpds": _cmd_lpds,
    "diagnostics": _cmd_diagnostics,
    "figure-data": _cmd_figure_data,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParseError, EmptySeries, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RecursubError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
