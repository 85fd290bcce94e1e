"""Config-driven experiment orchestration with reproducible outputs.

A run directory holds a versioned manifest (config echo, seeds, tuning
outcome, timing and compute ledgers), per-replicate draw files, diagnostics,
and plot-data CSVs.  Re-running the same config and seed reproduces the draw
files byte for byte.

Compute accounting: the compute fraction (CF) of a subsampling engine counts
every variance-recursion step it triggers (pilot chain, tolerance
calibration, control-variate build, tuning reference pass, and the sampling
or optimisation phase including monitoring) divided by the full-data
equivalent iterations * T.  Full-data engines define the benchmark, CF = 1.
MAP initialisation and its Laplace curvature are common to both methods and
sit outside CF (they are still metered in the ledger).
"""

import concurrent.futures
import dataclasses
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .. import models
from ..estimators import LikelihoodContext, build_control_variates, residuals_at
from ..exceptions import ConfigError
from ..inference import (
    PriorSpec,
    fulldata_mcmc,
    laplace_approximation,
    map_estimate,
    subsampling_mcmc,
    vb_optimize,
)
from ..models import ModelSpec, default_presample, simulate
from ..scheme import tpd_scheme
from ..tuning import calibrate_tolerance, tune, tune_uniform
from .diagnostics import chain_diagnostics
from .figures import emit_kde_inputs, emit_umax_trace
from .io import load_returns, write_csv, write_draws_csv, write_json

SCHEMA_VERSION = 1

ENGINES = ("mcmc-sub", "mcmc-full", "vb-sub", "vb-full")

_MODEL_KEYS = {"family", "p", "q", "error", "logistic_steepness"}
_DATA_KEYS = {"csv", "column", "log_diff", "simulate"}
_SIM_KEYS = {"n", "theta", "seed"}
_SCHEME_KEYS = {"head_len", "offset", "r_max", "uniform"}
_TOP_KEYS = {
    "model", "data", "scheme", "engine", "iterations", "burn_in", "n_rep",
    "seed", "out", "n_starts", "pilot_length", "n_tune", "vb_subsample_size",
    "proposal_scale",
}


def _check_keys(mapping, allowed, where):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment configuration.

    ``engine`` may be None for simulate-only runs.  ``scheme`` applies to
    the subsampling engines; ``r_max`` is the allowed worst-case variance
    inflation (its inverse is the tail floor bound).
    """

    model: dict
    data: dict
    engine: str = None
    scheme: dict = field(
        default_factory=lambda: {"head_len": 1000, "offset": 100.0, "r_max": 100.0}
    )
    iterations: int = 12_000
    burn_in: int = 2_000
    n_rep: int = 1
    seed: int = 0
    out: str = "run"
    n_starts: int = 5
    pilot_length: int = 100
    n_tune: int = 20
    vb_subsample_size: int = 0
    proposal_scale: float = 0.3

    @classmethod
    def from_dict(cls, raw):
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a mapping")
        _check_keys(raw, _TOP_KEYS, "top-level")
        if "model" not in raw or "data" not in raw:
            raise ConfigError("config requires 'model' and 'data' sections")
        _check_keys(raw["model"], _MODEL_KEYS, "model")
        _check_keys(raw["data"], _DATA_KEYS, "data")
        if "simulate" in raw["data"]:
            _check_keys(raw["data"]["simulate"], _SIM_KEYS, "data.simulate")
        if "scheme" in raw:
            _check_keys(raw["scheme"], _SCHEME_KEYS, "scheme")
        cfg = cls(**{k: raw[k] for k in raw})
        cfg.validate()
        return cfg

    def validate(self):
        if self.engine is not None and self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        if self.iterations <= self.burn_in:
            raise ConfigError("iterations must exceed burn_in")
        if self.n_rep < 1:
            raise ConfigError("n_rep must be >= 1")
        if ("csv" in self.data) == ("simulate" in self.data):
            raise ConfigError("data needs exactly one of 'csv' or 'simulate'")
        try:
            self.model_spec()
        except Exception as exc:
            raise ConfigError(f"invalid model section: {exc}") from exc
        return self

    def model_spec(self):
        kw = dict(self.model)
        return ModelSpec(
            family=kw.get("family", "garch"),
            p=int(kw.get("p", 1)),
            q=int(kw.get("q", 1)),
            error=kw.get("error", "normal"),
            logistic_steepness=float(kw.get("logistic_steepness", 100.0)),
        )

    def to_dict(self):
        return dataclasses.asdict(self)

    @property
    def uniform_scheme(self):
        return bool(self.scheme.get("uniform", False))


def _worker_count():
    try:
        return max(1, int(os.environ.get("RECURSUB_THREADS", "1")))
    except ValueError:
        return 1


class _Meter:
    """Attributes global recursion-step counts to named phases."""

    def __init__(self):
        models.reset_recursion_steps()
        self.sections = {}
        self._mark = 0

    def take(self, name):
        now = models.recursion_steps()
        self.sections[name] = self.sections.get(name, 0) + (now - self._mark)
        self._mark = now

    def total(self, names=None):
        names = self.sections if names is None else names
        return sum(self.sections.get(n, 0) for n in names)


def _obtain_data(config, outdir):
    if "csv" in config.data:
        series, scale = load_returns(
            config.data["csv"],
            column=config.data.get("column", "return"),
            log_diff=bool(config.data.get("log_diff", False)),
        )
        source = {"csv": config.data["csv"], "scale": scale}
        return series, source
    sim = config.data["simulate"]
    spec = config.model_spec()
    theta = np.asarray(sim["theta"], dtype=float)
    seed = int(sim.get("seed", config.seed))
    series = simulate(spec, theta, int(sim["n"]), seed=seed)
    write_csv(
        os.path.join(outdir, "series.csv"), ["y"], [(x,) for x in series]
    )
    source = {"simulate": {"n": int(sim["n"]), "seed": seed,
                           "theta": [float(x) for x in theta]}, "scale": 1.0}
    return series, source


def _pilot_draws(spec, prior, data, presample, phi_map, cov_map, config):
    """Short full-data chain thinned to the tuning draws."""
    chain = fulldata_mcmc(
        spec, prior, data, presample,
        iterations=config.pilot_length, burn_in=0,
        seed=config.seed + 104729, init_phi=phi_map, init_cov=cov_map,
    )
    n = chain.draws.shape[0]
    take = min(config.n_tune, n)
    idx = np.linspace(0, n - 1, take).round().astype(int)
    return [chain.draws[i] for i in idx]


def run_experiment(config, prior=None, stop_after_tuning=False):
    """Execute a configured run end to end; returns the run directory.

    With ``stop_after_tuning`` the manifest (including the tuning outcome)
    is written and the sampling/optimisation phase is skipped.
    """
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    config.validate()
    prior = prior or PriorSpec()
    outdir = config.out
    os.makedirs(outdir, exist_ok=True)
    plotdir = os.path.join(outdir, "plotdata")
    os.makedirs(plotdir, exist_ok=True)

    spec = config.model_spec()
    meter = _Meter()
    wall = {}
    t_all = time.perf_counter()

    series, source = _obtain_data(config, outdir)
    T = series.size

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config": config.to_dict(),
        "data_source": source,
        "T": int(T),
        "param_names": spec.param_names,
    }

    if config.engine is None:
        manifest["timing"] = {"total": time.perf_counter() - t_all}
        write_json(os.path.join(outdir, "manifest.json"), manifest)
        return outdir

    presample = default_presample(spec, series)
    manifest["presample"] = {
        "y_init": [float(x) for x in presample.y_init],
        "sigma2_init": [float(x) for x in presample.sigma2_init],
    }
    context = LikelihoodContext(spec, series, presample)

    t0 = time.perf_counter()
    phi_map = map_estimate(
        spec, prior, series, presample, n_starts=config.n_starts,
        seed=config.seed,
    ).coords
    cov_map = laplace_approximation(spec, prior, series, presample, phi_map)
    meter.take("map")
    wall["map"] = time.perf_counter() - t0
    manifest["phi_map"] = [float(x) for x in phi_map]

    subsampled = config.engine.endswith("-sub")
    tuning_result = cache = scheme = None
    if subsampled:
        is_mcmc = config.engine == "mcmc-sub"
        t0 = time.perf_counter()
        pilot = _pilot_draws(
            spec, prior, series, presample, phi_map, cov_map, config
        )
        meter.take("pilot")
        cache = build_control_variates(context, phi_map)
        meter.take("cache")
        r_max = 1.0 if config.uniform_scheme else float(
            config.scheme.get("r_max", 100.0)
        )
        m_ref = 2 if is_mcmc else 1
        tolerance, ref_phi, _ = calibrate_tolerance(
            cache, pilot, r_max, m_ref=m_ref
        )
        meter.take("calibrate")
        head_len = int(config.scheme.get("head_len", 1000))
        offset = float(config.scheme.get("offset", 100.0))
        if head_len >= T:
            raise ConfigError(
                f"scheme head_len={head_len} must be smaller than T={T}"
            )
        ref_residuals = residuals_at(cache, ref_phi)
        meter.take("tune_ref")
        m_floor = 2 if is_mcmc else 1
        if config.uniform_scheme:
            m_star, s2 = tune_uniform(
                ref_residuals, T, tolerance, m_floor=m_floor
            )
            scheme = tpd_scheme(T, 1.0, head_len, offset)
            from ..tuning import TuningResult, expected_umax

            tuning_result = TuningResult(
                floor_frac=1.0, subsample_size=m_star, decay=0.0,
                tail_mass=scheme.tail_mass, tolerance=tolerance,
                expected_depth=expected_umax(scheme.probs, m_star),
                ref_phi=ref_phi, binding="variance_constraint",
                sigma2_at_optimum=s2, head_len=head_len, offset=offset, T=T,
            )
        else:
            tuning_result = tune(
                ref_residuals, T, head_len, offset, r_max, tolerance,
                ref_phi=ref_phi, m_floor=m_floor,
            )
            scheme = tpd_scheme(
                T, tuning_result.floor_frac, head_len, offset
            )
        wall["tuning"] = time.perf_counter() - t0
        manifest["tuning"] = tuning_result.to_dict()

    if stop_after_tuning:
        manifest["step_ledger"] = dict(meter.sections)
        wall["total"] = time.perf_counter() - t_all
        manifest["timing"] = wall
        write_json(os.path.join(outdir, "manifest.json"), manifest)
        return outdir

    overhead_steps = meter.total(["pilot", "cache", "calibrate", "tune_ref"])
    root_ss = np.random.SeedSequence(config.seed)
    rep_seeds = [int(s.generate_state(1)[0]) for s in root_ss.spawn(config.n_rep)]
    manifest["seeds"] = {"root": config.seed, "replicates": rep_seeds}

    def run_rep(rep_seed):
        if config.engine == "mcmc-full":
            return fulldata_mcmc(
                spec, prior, series, presample,
                iterations=config.iterations, burn_in=config.burn_in,
                seed=rep_seed, init_phi=phi_map, init_cov=cov_map,
            )
        if config.engine == "mcmc-sub":
            return subsampling_mcmc(
                spec, prior, series, tuning_result, cache,
                presample=presample, iterations=config.iterations,
                burn_in=config.burn_in, seed=rep_seed, init_phi=phi_map,
                init_cov=cov_map, proposal_scale=config.proposal_scale,
            )
        kwargs = dict(
            presample=presample, iterations=config.iterations, seed=rep_seed,
            init_mean=phi_map,
            init_d2=0.1 * float(np.median(np.diag(cov_map))),
        )
        if config.engine == "vb-sub":
            m = config.vb_subsample_size or tuning_result.subsample_size
            return vb_optimize(
                spec, prior, series, cache=cache, scheme=scheme,
                subsample_size=m, **kwargs,
            )
        return vb_optimize(spec, prior, series, **kwargs)

    t0 = time.perf_counter()
    workers = min(_worker_count(), config.n_rep)
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run_rep, rep_seeds))
    else:
        results = [run_rep(s) for s in rep_seeds]
    meter.take("engine")
    wall["engine"] = time.perf_counter() - t0

    full_equiv = config.iterations * T
    diagnostics = []
    cfs = []
    for rep, result in enumerate(results):
        if config.engine.startswith("mcmc"):
            chain = result
            if subsampled:
                rep_steps = int(chain.depth_trace.sum()) + chain.init_depth
                cf = (overhead_steps + rep_steps) / full_equiv
            else:
                cf = 1.0
            cfs.append(cf)
            report = chain_diagnostics(
                chain, param_names=spec.param_names, compute_fraction=cf
            )
            diagnostics.append(report.to_dict())
            write_draws_csv(
                os.path.join(outdir, f"draws_rep{rep}.csv"),
                chain.draws,
                spec.param_names,
            )
            if chain.depth_trace is not None:
                emit_umax_trace(
                    os.path.join(plotdir, f"umax_trace_rep{rep}.csv"), chain
                )
            emit_kde_inputs(
                os.path.join(plotdir, f"kde_inputs_rep{rep}.csv"), spec,
                chain.draws,
            )
        else:
            state, trace, info = result
            if subsampled:
                rep_steps = int(info["depths"].sum())
                cf = (overhead_steps + rep_steps) / full_equiv
            else:
                cf = 1.0
            cfs.append(cf)
            diagnostics.append(
                {
                    "elbo_trace_tail": trace[-1][1] if trace else None,
                    "skipped_updates": info["skipped_updates"],
                    "compute_fraction": cf,
                    "seconds": info["seconds"],
                }
            )
            write_json(
                os.path.join(outdir, f"vb_state_rep{rep}.json"),
                {
                    "mean": [float(x) for x in state.mean],
                    "b": [float(x) for x in state.b],
                    "log_d": float(state.log_d),
                    "param_names": spec.param_names,
                },
            )
            write_csv(
                os.path.join(plotdir, f"elbo_trace_rep{rep}.csv"),
                ["iteration", "elbo_estimate"],
                [(it, v) for it, v in trace],
            )

    manifest["compute_fraction"] = {
        "per_rep": cfs,
        "mean": float(np.mean(cfs)),
    }
    manifest["step_ledger"] = dict(meter.sections)
    wall["total"] = time.perf_counter() - t_all
    manifest["timing"] = wall
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    write_json(os.path.join(outdir, "diagnostics.json"), diagnostics)
    return outdir
