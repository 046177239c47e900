"""Marginal SMC with estimated likelihoods.

At target t every particle is proposed from the weighted Gaussian mixture
fitted to the population at t-1, and weighted by

    p(theta) * [gamma(y|theta) * R-hat]^nu_t / sum_r w_r K_t(theta | theta_r)

where R-hat estimates Z(theta_hat_t) / Z(theta), either directly from one
auxiliary draw at theta (SAV) or as a product of hops along a path through
earlier parameters and their stored statistics (path). The 1/Z(theta_hat_t)
factor is common to all particles and is dropped.
"""
import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from . import rng as rngs
from .estimators import path_log_ratio_single
from .kdtree import HistoryIndex
from .model import InvalidInputError, brute_force_log_z
from .paths import build_path, estimate_v

log = logging.getLogger(__name__)

JITTER = 1e-8


class DegenerateWeightsError(RuntimeError):
    """Every particle received zero weight."""

    def __init__(self, t, diagnostics):
        super().__init__(f"all log-weights are -inf at iteration {t}")
        self.t = t
        self.diagnostics = diagnostics


@dataclass
class ParticleSet:
    thetas: np.ndarray  # (P, d)
    log_weights: np.ndarray  # (P,), normalised
    stats: np.ndarray  # (P, d); NaN where no auxiliary draw was made

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        self.stats = np.atleast_2d(np.asarray(self.stats, dtype=float))
        if len(self.thetas) < 2:
            raise InvalidInputError("need at least two particles")
        if len(self.log_weights) != len(self.thetas):
            raise InvalidInputError("one log-weight per particle")

    @property
    def size(self):
        return len(self.thetas)

    @property
    def weights(self):
        return np.exp(self.log_weights)


def normalise_log_weights(log_w):
    log_w = np.asarray(log_w, dtype=float)
    top = logsumexp(log_w)
    if not np.isfinite(top):
        raise FloatingPointError("cannot normalise: no finite log-weight")
    return log_w - top


@dataclass(frozen=True)
class AnnealSchedule:
    exponents: tuple

    def __post_init__(self):
        nu = np.asarray(self.exponents, dtype=float)
        if nu.size == 0:
            raise InvalidInputError("empty schedule")
        if nu[-1] != 1.0:
            raise InvalidInputError("final exponent must be exactly 1")
        if np.any(nu <= 0) or np.any(nu > 1) or np.any(np.diff(nu) < 0):
            raise InvalidInputError("exponents must be nondecreasing in (0, 1]")
        object.__setattr__(self, "exponents", tuple(float(v) for v in nu))

    @classmethod
    def power(cls, T, exponent=2.0):
        """nu_t = (t / T) ** exponent for t = 1 .. T."""
        if T < 1:
            raise InvalidInputError("T must be >= 1")
        nu = (np.arange(1, T + 1) / T) ** exponent
        nu[-1] = 1.0
        return cls(tuple(nu))

    def with_extra_early(self, k):
        """Insert k geometrically spaced targets between 0 and the first exponent."""
        if k <= 0:
            return self
        first = self.exponents[0]
        extra = first * 2.0 ** -np.arange(k, 0, -1)
        return AnnealSchedule(tuple(extra) + self.exponents)

    def __len__(self):
        return len(self.exponents)


@dataclass(frozen=True)
class ProposalKernel:
    covariance: np.ndarray
    chol: np.ndarray

    @classmethod
    def from_covariance(cls, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        cov = 0.5 * (cov + cov.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            cov = cov + JITTER * np.eye(len(cov))
            chol = np.linalg.cholesky(cov)
        return cls(cov, chol)


def init_particles(P, prior, model, rng, simulate=True):
    """Draw P parameters from the prior with uniform weights.

    With ``simulate`` each particle also gets statistics of x ~ f(.|theta);
    otherwise ``stats`` is NaN.
    """
    if P < 2:
        raise InvalidInputError("P must be >= 2")
    gen = rngs.as_generator(rng)
    thetas = prior.sample(gen, P)
    if not np.all(np.isfinite(thetas)):
        raise InvalidInputError("prior sampling produced non-finite values")
    stats = np.full((P, model.dim), np.nan)
    if simulate:
        for p in range(P):
            stats[p] = model.simulate(thetas[p], gen)[1]
    return ParticleSet(thetas, np.full(P, -np.log(P)), stats)


def theta_hat(particles):
    return particles.weights @ particles.thetas


def weighted_covariance(particles):
    w = particles.weights
    mu = w @ particles.thetas
    c = particles.thetas - mu
    return (w[:, None] * c).T @ c


def fit_proposal(particles):
    """Gaussian random-walk kernel with twice the weighted sample covariance."""
    cov = 2.0 * weighted_covariance(particles)
    d = cov.shape[0]
    try:
        np.linalg.cholesky(cov)
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = cov + JITTER * np.eye(d)
    return ProposalKernel.from_covariance(cov)


def gaussian_log_density(x, mean, kernel):
    diff = np.atleast_2d(x) - np.atleast_2d(mean)
    z = np.linalg.solve(kernel.chol, diff.T)
    d = kernel.chol.shape[0]
    return (-0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(kernel.chol)))
            - 0.5 * d * np.log(2 * np.pi))


def mixture_log_density(particles_prev, kernel, theta_new):
    """log sum_r w_r N(theta_new; theta_r, K); theta_new may be (d,) or (n, d)."""
    theta_new = np.asarray(theta_new, dtype=float)
    single = theta_new.ndim == 1
    tn = np.atleast_2d(theta_new)
    linv = np.linalg.inv(kernel.chol)
    diff = tn[:, None, :] - particles_prev.thetas[None, :, :]
    z = diff @ linv.T
    d = tn.shape[1]
    log_norm = -np.sum(np.log(np.diag(kernel.chol))) - 0.5 * d * np.log(2 * np.pi)
    comp = -0.5 * np.sum(z * z, axis=2) + log_norm + particles_prev.log_weights[None, :]
    out = logsumexp(comp, axis=1)
    return float(out[0]) if single else out


def marginal_log_weight(theta_new, stats_new, log_ratio, prior, nu_t, mixture_log_density_value, y_stats):
    """log p(theta) + nu_t * (theta . S(y) + log R-hat) - log q(theta).

    ``stats_new`` is carried for interface symmetry; its information enters
    through ``log_ratio``. Non-finite results become -inf.
    """
    if not 0.0 < nu_t <= 1.0:
        raise InvalidInputError("nu_t must lie in (0, 1]")
    theta_new = np.atleast_2d(np.asarray(theta_new, dtype=float))
    y = np.asarray(y_stats, dtype=float)
    lp = np.atleast_1d(prior.log_density(theta_new))
    with np.errstate(invalid="ignore"):
        lw = lp + nu_t * (theta_new @ y + np.asarray(log_ratio, dtype=float)) - mixture_log_density_value
    lw = np.where(np.isfinite(lw), lw, -np.inf)
    return float(lw[0]) if np.ndim(log_ratio) == 0 and lw.size == 1 else lw


def ess_from_log_weights(log_w):
    w = np.exp(normalise_log_weights(log_w))
    return float(1.0 / np.sum(w * w))


def ess(particles):
    return ess_from_log_weights(particles.log_weights)


def systematic_indices(weights, u):
    """Systematic resampling with offset u in [0, 1)."""
    P = len(weights)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    positions = (u + np.arange(P)) / P
    return np.searchsorted(cum, positions, side="right")


def resample(particles, rng):
    gen = rngs.as_generator(rng)
    idx = systematic_indices(particles.weights, gen.random())
    return ParticleSet(particles.thetas[idx], np.full(particles.size, -np.log(particles.size)),
                       particles.stats[idx])


@dataclass
class SMCConfig:
    """Settings for one marginal SMC run.

    ``window`` limits path candidates to points from the last ``window``
    iterations (None = whole history, 0 = none). ``estimator`` is ``"sav"``,
    ``"path"`` or ``"oracle"`` (exact ratios by enumeration, for testing).
    ``first_proposal="prior"`` draws the first population straight from the
    prior with q = prior.
    """

    model: object
    prior: object
    y_stats: np.ndarray
    P: int = 200
    T: int = 10
    schedule_exponent: float = 2.0
    schedule: AnnealSchedule = None
    seed: int = 0
    estimator: str = "sav"
    window: int = None
    extra_early_targets: int = 0
    ess_warn_fraction: float = 0.05
    first_proposal: str = "mixture"
    record_history: bool = True
    leaf_size: int = 8

    @property
    def targets(self):
        return self.schedule.with_extra_early(self.extra_early_targets)

    def __post_init__(self):
        if self.schedule is None:
            self.schedule = AnnealSchedule.power(self.T, self.schedule_exponent)
        self.y_stats = np.atleast_1d(np.asarray(self.y_stats, dtype=float))
        if self.estimator not in ("sav", "path", "oracle"):
            raise InvalidInputError(f"unknown estimator {self.estimator!r}")
        if self.P < 2:
            raise InvalidInputError("P must be >= 2")
        if self.first_proposal not in ("mixture", "prior"):
            raise InvalidInputError("first_proposal must be 'mixture' or 'prior'")


@dataclass
class IterationDiagnostics:
    t: int
    nu: float
    ess: float
    theta_hat: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    hop_counts: dict = field(default_factory=dict)
    mean_candidates: float = 0.0


@dataclass
class SMCResult:
    particles: ParticleSet  # final weighted population (pre-resampling)
    history: HistoryIndex
    diagnostics: list
    final_log_weights: np.ndarray  # unnormalised, last target
    final_theta_hat: np.ndarray
    n_simulations: int

    @property
    def posterior_mean(self):
        return self.particles.weights @ self.particles.thetas

    @property
    def posterior_cov(self):
        return weighted_covariance(self.particles)

    @property
    def ess_trace(self):
        return np.array([d.ess for d in self.diagnostics])


def _propose(prev, kernel, t, seed, config):
    P, d = config.P, prev.thetas.shape[1]
    if t == 1 and config.first_proposal == "prior":
        thetas = np.vstack([config.prior.sample(rngs.stream(seed, t, p, rngs.PROPOSE), 1)[0]
                            for p in range(P)])
        return thetas, np.atleast_1d(config.prior.log_density(thetas))
    anc = systematic_indices(prev.weights, rngs.stream(seed, t, rngs.RESAMPLE).random())
    z = np.vstack([rngs.stream(seed, t, p, rngs.PROPOSE).standard_normal(d) for p in range(P)])
    thetas = prev.thetas[anc] + z @ kernel.chol.T
    return thetas, mixture_log_density(prev, kernel, thetas)


def _run(config):
    model, prior, seed = config.model, config.prior, config.seed
    if prior.dim != model.dim:
        raise InvalidInputError("prior and model dimensions differ")
    if config.y_stats.shape != (model.dim,):
        raise InvalidInputError("y_stats dimension does not match the model")
    P = config.P
    particles = init_particles(P, prior, model, rngs.stream(seed, 0, rngs.INIT), simulate=False)
    history = HistoryIndex(model.dim, leaf_size=config.leaf_size)
    diagnostics = []
    n_sims = 0
    log_w_unnorm = None
    th_hat = theta_hat(particles)

    for t, nu in enumerate(config.targets.exponents, start=1):
        prev = particles
        th_hat = theta_hat(prev)
        kernel = fit_proposal(prev)
        thetas, log_q = _propose(prev, kernel, t, seed, config)
        stats = np.empty_like(thetas)
        for p in range(P):
            stats[p] = model.simulate(thetas[p], rngs.stream(seed, t, p, rngs.SIMULATE))[1]
        n_sims += P
        if config.record_history:
            history.insert_many(thetas, stats, t)

        hop_counts = {}
        mean_cand = 0.0
        if config.estimator == "sav":
            log_ratio = np.sum((th_hat - thetas) * stats, axis=1)
        elif config.estimator == "oracle":
            lz_hat = brute_force_log_z(model.spec, th_hat)
            log_ratio = np.array([lz_hat - brute_force_log_z(model.spec, th) for th in thetas])
        else:
            v_hat = estimate_v(stats)
            min_tag = None if config.window is None else t - config.window + 1
            log_ratio = np.empty(P)
            for p in range(P):
                choice = build_path(history, thetas[p], stats[p], th_hat, v_hat, min_tag=min_tag)
                log_ratio[p] = path_log_ratio_single(choice.thetas, choice.stats)
                hop_counts[choice.n_hops] = hop_counts.get(choice.n_hops, 0) + 1
                mean_cand += choice.n_candidates / P

        log_w_unnorm = marginal_log_weight(thetas, stats, log_ratio, prior, nu, log_q, config.y_stats)
        if not np.any(np.isfinite(log_w_unnorm)):
            raise DegenerateWeightsError(t, diagnostics)
        particles = ParticleSet(thetas, normalise_log_weights(log_w_unnorm), stats)
        e = ess(particles)
        diagnostics.append(IterationDiagnostics(
            t=t, nu=nu, ess=e, theta_hat=th_hat, mean=theta_hat(particles),
            cov=weighted_covariance(particles), hop_counts=dict(sorted(hop_counts.items())),
            mean_candidates=mean_cand))
        if t == 1 and e < config.ess_warn_fraction * P:
            warnings.warn(f"ESS {e:.2f} at the first target is below {config.ess_warn_fraction:.0%} of P; "
                          "consider extra_early_targets", RuntimeWarning, stacklevel=3)
        log.debug("t=%d nu=%.4f ess=%.2f", t, nu, e)

    return SMCResult(particles, history, diagnostics, log_w_unnorm, th_hat, n_sims)


def run_msmc(config):
    """Run with the estimator named in ``config`` (``"sav"``, ``"path"`` or ``"oracle"``)."""
    return _run(config)


def run_sav_msmc(config):
    """Auxiliary-variable marginal SMC (one draw per particle, direct ratio)."""
    return _run(replace(config, estimator="sav") if config.estimator != "sav" else config)


def run_path_msmc(config):
    """Path marginal SMC: ratios along greedy paths through the run's history."""
    return _run(replace(config, estimator="path") if config.estimator != "path" else config)


@dataclass(frozen=True)
class Evidence:
    log_value: float
    corrected: bool  # False: missing 1/Z(theta_hat) factor, only relative comparisons valid


def evidence_estimate(final_unnormalised_log_weights, log_inv_z_hat=None):
    """log (1/P) sum_p w-tilde_p, plus log 1/Z(theta_hat) when supplied."""
    lw = np.asarray(final_unnormalised_log_weights, dtype=float)
    val = float(logsumexp(lw) - np.log(lw.size))
    if log_inv_z_hat is None:
        return Evidence(val, False)
    return Evidence(val + float(log_inv_z_hat), True)
