"""Experiment orchestration: data, ground truth, replicated runs at equal budget, metrics.

Every algorithm in a comparison spends the same number of likelihood
simulations (``budget``): MCMC chains run ``budget`` iterations and SMC
runs use ``P * T = budget``. Replicate r of every algorithm shares one
seed, so results are paired across algorithms.
"""
import csv
import dataclasses
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import rng as rngs
from .mcmc import abc_mcmc, exchange_mcmc, sav_mcmc, tune_proposal_sd
from .model import (MAX_ENUMERATION_SITES, InvalidInputError, IsingModel, IsingSpec, Order,
                    brute_force_log_z, gibbs_sweeps, load_lattice, random_state, suff_stats)
from .priors import PriorSpec
from .smc import DegenerateWeightsError, SMCConfig, run_path_msmc, run_sav_msmc

SCHEMA_VERSION = 1
ALGORITHMS = ("exchange", "sav-mcmc", "abc-mcmc", "sav-msmc", "path-msmc")
SMC_ALGORITHMS = ("sav-msmc", "path-msmc")
OUTPUT_DIR_ENV = "PATHMSMC_OUTPUT_DIR"
EXECUTION_KEYS = ("workers", "output_dir")

_DEFAULT_THETA = {"first": (0.28,), "second": (0.36, 0.08)}
_DEFAULT_PRIOR = {
    "first": {"kind": "uniform", "low": [0.0], "high": [1.0]},
    "second": {"kind": "uniform", "low": [-1.0, -1.0], "high": [1.0, 1.0]},
}


@dataclass
class ExperimentConfig:
    """One comparison experiment.

    Parameters
    ----------
    width, height, order : lattice and model order (``"first"`` or ``"second"``).
    prior : dict accepted by ``PriorSpec.from_dict``; defaults by order.
    algorithms : subset of ``ALGORITHMS``.
    budget : likelihood simulations per run, shared by every algorithm.
    P : SMC population size; ``T = budget / P`` targets.
    proposal_sd : MCMC random-walk sd; ``None`` tunes it by pilot runs.
    window : SMC path history window in iterations (``None`` = all).
    theta_true, data_sweeps : how synthetic data are generated when
        ``data_file`` is not given.
    truth_method : ``"auto"``, ``"enumeration"`` or ``"exchange"``.
    workers : replicate worker processes (``0`` = one per CPU).
    """

    width: int = 10
    height: int = 10
    order: str = "first"
    prior: dict = None
    algorithms: tuple = ALGORITHMS
    budget: int = 2000
    P: int = 200
    schedule_exponent: float = 2.0
    sweeps: int = 100
    burn_in: int = 500
    proposal_sd: float = None
    M: int = 1
    window: int = None
    anchor_policy: str = "refresh"
    extra_early_targets: int = 0
    replicates: int = 40
    seed: int = 0
    theta_true: tuple = None
    data_sweeps: int = 10000
    data_file: str = None
    truth_method: str = "auto"
    truth_iters: int = 100000
    truth_burn_in: int = 1000
    grid_size: int = 200
    workers: int = 1
    output_dir: str = "results"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.order = Order(self.order).value
        if self.prior is None:
            self.prior = dict(_DEFAULT_PRIOR[self.order])
        if self.theta_true is None:
            self.theta_true = _DEFAULT_THETA[self.order]
        self.theta_true = tuple(float(v) for v in np.atleast_1d(self.theta_true))
        self.algorithms = tuple(self.algorithms)
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad:
            raise InvalidInputError(f"unknown algorithms {bad}")
        if self.schema_version != SCHEMA_VERSION:
            raise InvalidInputError(f"unsupported schema_version {self.schema_version}")
        if self.P < 2 or self.budget % self.P:
            raise InvalidInputError("budget must be a multiple of P (P * T = budget)")
        if not 0 <= self.burn_in < self.budget:
            raise InvalidInputError("need 0 <= burn_in < budget")
        if self.M != 1:
            raise InvalidInputError("only M = 1 keeps the simulation budget exact")
        if self.replicates < 1:
            raise InvalidInputError("replicates must be >= 1")
        if len(self.theta_true) != self.spec.dim or self.prior_spec.dim != self.spec.dim:
            raise InvalidInputError("theta_true / prior dimension does not match the model order")

    @property
    def T(self):
        return self.budget // self.P

    @property
    def spec(self):
        return IsingSpec(self.width, self.height, self.order)

    @property
    def prior_spec(self):
        return PriorSpec.from_dict(self.prior)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["algorithms"] = list(self.algorithms)
        d["theta_true"] = list(self.theta_true)
        return d

    def provenance_dict(self):
        """Settings that determine the results; worker count and output location do not."""
        d = self.to_dict()
        for key in EXECUTION_KEYS:
            d.pop(key)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidInputError(f"unknown config keys {unknown}")
        return cls(**d)

    @classmethod
    def from_file(cls, path):
        """Load YAML or JSON (JSON is valid YAML)."""
        with open(path) as fh:
            d = yaml.safe_load(fh) or {}
        return cls.from_dict(d)

    def resolved_output_dir(self, override=None):
        """Explicit override, then the environment variable, then the config value."""
        return Path(override or os.environ.get(OUTPUT_DIR_ENV) or self.output_dir)


class CountingModel(IsingModel):
    """Ising model that counts likelihood simulations."""

    def __init__(self, spec, sweeps=100):
        super().__init__(spec, sweeps)
        self.n_calls = 0

    def simulate(self, theta, rng):
        self.n_calls += 1
        return super().simulate(theta, rng)


# --- data and ground truth -------------------------------------------------


def generate_data(spec, theta_true, sweeps_long, rng):
    """One lattice from a long Gibbs run at ``theta_true`` started uniformly at random."""
    if sweeps_long < 10_000:
        raise InvalidInputError("sweeps_long must be >= 10000 for a near-equilibrium draw")
    gen = rngs.as_generator(rng)
    return gibbs_sweeps(spec, theta_true, random_state(spec, gen), sweeps_long, gen)


def load_or_generate_data(cfg):
    spec = cfg.spec
    if cfg.data_file:
        state = load_lattice(cfg.data_file)
        if state.shape != spec.shape:
            raise InvalidInputError(f"data lattice {state.shape} does not match {spec.shape}")
        return state
    return generate_data(spec, cfg.theta_true, cfg.data_sweeps, rngs.stream(cfg.seed, rngs.DATA))


def prior_grid(prior, n):
    """Tensor-product midpoint grid over the prior support and the cell volume."""
    if prior.kind == "point":
        return np.asarray(prior.mean, dtype=float)[None, :], 1.0
    if prior.kind == "uniform":
        lo, hi = np.asarray(prior.low), np.asarray(prior.high)
    else:
        mu, sd = np.asarray(prior.mean), np.asarray(prior.sd)
        lo, hi = mu - 8 * sd, mu + 8 * sd
    axes = [l + (np.arange(n) + 0.5) * (h - l) / n for l, h in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    return grid, float(np.prod((hi - lo) / n))


@dataclass
class GroundTruth:
    mean: np.ndarray
    cov: np.ndarray
    method: str
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {"mean": [float(v) for v in self.mean],
                "cov": [[float(v) for v in row] for row in np.atleast_2d(self.cov)],
                "method": self.method, "details": self.details}


def ground_truth(spec, prior, y_stats, method="auto", seed=0, n_iters=100_000, burn_in=1_000,
                 sweeps=100, grid_size=200, proposal_sd=None):
    """Reference posterior mean and covariance.

    Enumerable lattices use grid quadrature with exact log Z; larger ones a
    long exchange run (``n_iters`` iterations including ``burn_in``).
    """
    y = np.atleast_1d(np.asarray(y_stats, dtype=float))
    if method == "auto":
        method = "enumeration" if spec.n_sites <= MAX_ENUMERATION_SITES else "exchange"
    if method == "enumeration":
        grid, _ = prior_grid(prior, grid_size if spec.dim == 1 else min(grid_size, 100))
        log_z = np.array([brute_force_log_z(spec, th) for th in grid])
        lw = np.atleast_1d(prior.log_density(grid)) + grid @ y - log_z
        w = np.exp(lw - np.max(lw))
        w /= w.sum()
        mean = w @ grid
        c = grid - mean
        return GroundTruth(mean, (w[:, None] * c).T @ c, method, {"grid_points": len(grid)})
    if method != "exchange":
        raise InvalidInputError(f"unknown ground-truth method {method!r}")
    model = IsingModel(spec, sweeps)
    if proposal_sd is None:
        proposal_sd = tune_proposal_sd(y, prior, model, rngs.stream(seed, rngs.TRUTH, rngs.PILOT))
    tr = exchange_mcmc(y, prior, model, n_iters, burn_in, proposal_sd, rngs.stream(seed, rngs.TRUTH, rngs.CHAIN))
    return GroundTruth(tr.mean, np.atleast_2d(np.cov(tr.samples, rowvar=False)), method,
                       {"n_iters": n_iters, "burn_in": burn_in, "proposal_sd": float(proposal_sd),
                        "acceptance_rate": tr.acceptance_rate})


# --- replicated runs -------------------------------------------------------


def replicate_seed(master_seed, r):
    """Seed of replicate r, shared by every algorithm for pairing."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(rngs.REPLICATE, int(r)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class ReplicateOutcome:
    algorithm: str
    replicate: int
    seed: int
    estimate: list
    n_simulations: int
    final_ess: float = math.nan
    acceptance_rate: float = math.nan
    ess_trace: list = field(default_factory=list)
    nu_trace: list = field(default_factory=list)
    flagged: bool = False
    message: str = ""


def run_algorithm(cfg, algorithm, y_stats, seed, proposal_sd=None, model=None):
    """One run of ``algorithm`` at the configured budget.

    Returns the raw result (``SMCResult`` or ``MCMCTrace``) and the number
    of likelihood simulations it made.
    """
    model = model or CountingModel(cfg.spec, cfg.sweeps)
    prior = cfg.prior_spec
    y = np.atleast_1d(np.asarray(y_stats, dtype=float))
    before = getattr(model, "n_calls", 0)
    if algorithm in SMC_ALGORITHMS:
        smc_cfg = SMCConfig(model=model, prior=prior, y_stats=y, P=cfg.P, T=cfg.T,
                            schedule_exponent=cfg.schedule_exponent, seed=seed, window=cfg.window,
                            extra_early_targets=cfg.extra_early_targets, record_history=algorithm == "path-msmc")
        res = (run_path_msmc if algorithm == "path-msmc" else run_sav_msmc)(smc_cfg)
    else:
        sd = cfg.proposal_sd if proposal_sd is None else proposal_sd
        if sd is None:
            raise InvalidInputError("MCMC runs need a proposal_sd")
        chain_rng = rngs.stream(seed, rngs.CHAIN)
        if algorithm == "exchange":
            res = exchange_mcmc(y, prior, model, cfg.budget, cfg.burn_in, sd, chain_rng)
        elif algorithm == "sav-mcmc":
            res = sav_mcmc(y, prior, model, cfg.budget, cfg.burn_in, sd, chain_rng, anchor_policy=cfg.anchor_policy)
        else:
            res = abc_mcmc(y, prior, model, cfg.budget, cfg.burn_in, sd, chain_rng)
    used = getattr(model, "n_calls", before) - before
    return res, used


def _replicate_job(job):
    cfg_dict, algorithm, r, y_stats, proposal_sd = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seed = replicate_seed(cfg.seed, r)
    out = ReplicateOutcome(algorithm, r, seed, [math.nan] * cfg.spec.dim, 0)
    try:
        res, used = run_algorithm(cfg, algorithm, y_stats, seed, proposal_sd)
    except (DegenerateWeightsError, FloatingPointError, np.linalg.LinAlgError) as exc:
        out.flagged, out.message = True, f"{type(exc).__name__}: {exc}"
        return out
    out.n_simulations = used
    if algorithm in SMC_ALGORITHMS:
        out.estimate = [float(v) for v in res.posterior_mean]
        out.final_ess = float(res.ess_trace[-1])
        out.ess_trace = [float(v) for v in res.ess_trace]
        out.nu_trace = [float(d.nu) for d in res.diagnostics]
    else:
        out.estimate = [float(v) for v in res.mean]
        out.acceptance_rate = float(res.acceptance_rate)
    if used != cfg.budget:
        out.flagged, out.message = True, f"used {used} simulations, budget is {cfg.budget}"
    elif not np.all(np.isfinite(out.estimate)):
        out.flagged, out.message = True, "non-finite estimate"
    return out


def tuned_proposal_sd(cfg, y_stats):
    """Configured MCMC proposal sd, or one tuned by pilot exchange runs (not counted in the budget)."""
    if cfg.proposal_sd is not None:
        return float(cfg.proposal_sd)
    model = IsingModel(cfg.spec, cfg.sweeps)
    return tune_proposal_sd(y_stats, cfg.prior_spec, model, rngs.stream(cfg.seed, rngs.PILOT))


def run_replicates(cfg, y_stats, proposal_sd=None, workers=None):
    """All (algorithm, replicate) jobs, in a fixed order independent of scheduling."""
    y = [float(v) for v in np.atleast_1d(y_stats)]
    if proposal_sd is None and any(a not in SMC_ALGORITHMS for a in cfg.algorithms):
        proposal_sd = tuned_proposal_sd(cfg, y)
    cfg_dict = cfg.to_dict()
    jobs = [(cfg_dict, a, r, y, proposal_sd) for a in cfg.algorithms for r in range(cfg.replicates)]
    workers = cfg.workers if workers is None else workers
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers == 1:
        return [_replicate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_replicate_job, jobs, chunksize=1))


@dataclass
class MetricsRow:
    algorithm: str
    component: int  # 1-based index into theta
    truth: float
    mean_estimate: float
    bias: float
    sd: float  # population sd across replicates
    rmse: float
    n_replicates: int
    n_flagged: int
    mean_final_ess: float = math.nan

    @property
    def flagged(self):
        return self.n_flagged > 0


def error_metrics(estimates, truth):
    """Bias, population sd and rmse of replicate estimates; rmse^2 = bias^2 + sd^2."""
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        return math.nan, math.nan, math.nan
    bias = float(e.mean() - truth)
    sd = float(e.std())
    rmse = float(np.sqrt(np.mean((e - truth) ** 2)))
    return bias, sd, rmse


def metrics_rows(outcomes, truth_mean, algorithms):
    truth_mean = np.atleast_1d(truth_mean)
    rows = []
    for a in algorithms:
        mine = [o for o in outcomes if o.algorithm == a]
        ok = [o for o in mine if not o.flagged]
        ess_vals = [o.final_ess for o in ok if not math.isnan(o.final_ess)]
        mean_ess = float(np.mean(ess_vals)) if ess_vals else math.nan
        for k, tk in enumerate(truth_mean):
            est = [o.estimate[k] for o in ok]
            bias, sd, rmse = error_metrics(est, tk)
            rows.append(MetricsRow(a, k + 1, float(tk), float(np.mean(est)) if est else math.nan,
                                   bias, sd, rmse, len(ok), len(mine) - len(ok), mean_ess))
    return rows


@dataclass
class Comparison:
    config: ExperimentConfig
    y_stats: list
    truth: GroundTruth
    proposal_sd: float
    outcomes: list
    rows: list

    @property
    def n_flagged(self):
        return sum(o.flagged for o in self.outcomes)

    def row(self, algorithm, component=1):
        return next(r for r in self.rows if r.algorithm == algorithm and r.component == component)

    def paired_final_ess(self, a="path-msmc", b="sav-msmc"):
        ea = {o.replicate: o.final_ess for o in self.outcomes if o.algorithm == a and not o.flagged}
        eb = {o.replicate: o.final_ess for o in self.outcomes if o.algorithm == b and not o.flagged}
        common = sorted(set(ea) & set(eb))
        return np.array([ea[r] for r in common]), np.array([eb[r] for r in common])


def run_comparison(cfg, y_stats=None, truth=None, workers=None):
    """Data (if needed), ground truth (if needed), all replicates, and the metric table."""
    if y_stats is None:
        y_stats = suff_stats(cfg.spec, load_or_generate_data(cfg))
    y = [float(v) for v in np.atleast_1d(y_stats)]
    if truth is None:
        truth = ground_truth(cfg.spec, cfg.prior_spec, y, method=cfg.truth_method, seed=cfg.seed,
                             n_iters=cfg.truth_iters, burn_in=cfg.truth_burn_in, sweeps=cfg.sweeps,
                             grid_size=cfg.grid_size)
    sd = None
    if any(a not in SMC_ALGORITHMS for a in cfg.algorithms):
        sd = tuned_proposal_sd(cfg, y)
    outcomes = run_replicates(cfg, y, sd, workers)
    counts = {o.n_simulations for o in outcomes if not o.flagged}
    if len(counts) > 1:
        raise AssertionError(f"budget parity violated: simulation counts {sorted(counts)}")
    return Comparison(cfg, y, truth, sd, outcomes, metrics_rows(outcomes, truth.mean, cfg.algorithms))


# --- output files ------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _provenance(cfg, extra=None):
    lines = [f"# schema_version: {SCHEMA_VERSION}",
             "# config: " + json.dumps(cfg.provenance_dict(), sort_keys=True)]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: " + json.dumps(v, sort_keys=True))
    return "\n".join(lines) + "\n"


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_comparison(comp, out_dir):
    """Write metrics.csv, metrics.json, replicates.csv and ess.csv; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = comp.config
    extra = {"y_stats": comp.y_stats, "ground_truth": comp.truth.to_dict(),
             "proposal_sd": comp.proposal_sd}
    head = _provenance(cfg, extra)
    fields = [f.name for f in dataclasses.fields(MetricsRow)]
    paths = {}

    paths["metrics_csv"] = out / "metrics.csv"
    paths["metrics_csv"].write_text(
        head + _csv_text(fields + ["flagged"], [[getattr(r, f) for f in fields] + [r.flagged] for r in comp.rows]))

    payload = {"schema_version": SCHEMA_VERSION, "config": cfg.provenance_dict(), **extra,
               "metrics": [{k: _json_safe(v) for k, v in dataclasses.asdict(r).items()} for r in comp.rows],
               "n_flagged": comp.n_flagged}
    paths["metrics_json"] = out / "metrics.json"
    paths["metrics_json"].write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    d = cfg.spec.dim
    rep_rows = [[o.algorithm, o.replicate, o.seed] + list(o.estimate)
                + [o.n_simulations, o.final_ess, o.acceptance_rate, o.flagged, o.message]
                for o in comp.outcomes]
    paths["replicates_csv"] = out / "replicates.csv"
    paths["replicates_csv"].write_text(head + _csv_text(
        ["algorithm", "replicate", "seed"] + [f"theta{k + 1}" for k in range(d)]
        + ["n_simulations", "final_ess", "acceptance_rate", "flagged", "message"], rep_rows))

    ess_rows = [[o.algorithm, o.replicate, t + 1, nu, e]
                for o in comp.outcomes for t, (nu, e) in enumerate(zip(o.nu_trace, o.ess_trace))]
    paths["ess_csv"] = out / "ess.csv"
    paths["ess_csv"].write_text(head + _csv_text(["algorithm", "replicate", "t", "nu", "ess"], ess_rows))
    return paths


def write_smc_diagnostics(result, path, cfg=None):
    """Per-iteration SMC diagnostics: nu, ESS, theta-hat, weighted mean/cov, hop-count histogram."""
    d = len(result.final_theta_hat)
    header = (["t", "nu", "ess"] + [f"theta_hat{k + 1}" for k in range(d)] + [f"mean{k + 1}" for k in range(d)]
              + [f"cov{i + 1}{j + 1}" for i in range(d) for j in range(d)] + ["hops", "mean_candidates"])
    rows = []
    for dg in result.diagnostics:
        hops = ";".join(f"{k}:{v}" for k, v in dg.hop_counts.items())
        rows.append([dg.t, dg.nu, dg.ess] + list(dg.theta_hat) + list(dg.mean)
                    + list(np.ravel(dg.cov)) + [hops, dg.mean_candidates])
    head = _provenance(cfg) if cfg is not None else ""
    Path(path).write_text(head + _csv_text(header, rows))
