"""Partition-function ratio estimators.

All estimators return log-ratios. For the exponential family,
``log gamma(x|a) - log gamma(x|b) = (a - b) . S(x)``, so every estimator is
a function of stored sufficient statistics only, apart from the annealed
(MAV) estimator, which needs to run bridge kernels.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .model import InvalidInputError, check_state, sweep_log_density
from .rng import as_generator


@dataclass(frozen=True)
class AuxDraw:
    """Statistics of M >= 1 draws x ~ f(.|theta)."""

    theta: np.ndarray
    stats: np.ndarray  # shape (M, d)

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        stats = np.asarray(self.stats, dtype=float)
        if stats.ndim == 1:
            stats = stats[None, :]
        if stats.shape[0] < 1:
            raise InvalidInputError("AuxDraw needs at least one replicate")
        if stats.shape[1] != theta.shape[0]:
            raise InvalidInputError("stats and theta dimensions differ")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "stats", stats)


@dataclass(frozen=True)
class Path:
    """Parameter sequence Pi_0 .. Pi_l; every point but the last carries draws."""

    thetas: np.ndarray  # (l + 1, d)
    draws: list = field(default_factory=list)  # l AuxDraw, one per non-final point

    def __post_init__(self):
        thetas = np.asarray(self.thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        if len(thetas) < 2:
            raise InvalidInputError("a path needs at least two points")
        if len(self.draws) != len(thetas) - 1:
            raise InvalidInputError("need one AuxDraw per non-final path point")
        for th, dr in zip(thetas[:-1], self.draws):
            if not np.array_equal(th, dr.theta):
                raise InvalidInputError("AuxDraw theta does not match its path point")
        object.__setattr__(self, "thetas", thetas)

    @property
    def n_hops(self):
        return len(self.thetas) - 1

    @classmethod
    def from_stats(cls, thetas, stats):
        """Build from (l+1, d) thetas and (l, d) single-replicate statistics."""
        thetas = np.asarray(thetas, dtype=float)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        stats = np.asarray(stats, dtype=float).reshape(len(thetas) - 1, -1)
        return cls(thetas, [AuxDraw(th, s) for th, s in zip(thetas[:-1], stats)])


def _log_mean_exp(v):
    v = np.asarray(v, dtype=float)
    return float(logsumexp(v) - np.log(v.size))


def sav_log_ratio(theta_hat, theta, draw):
    """log of (1/M) sum_m gamma(x_m|theta_hat) / gamma(x_m|theta), x_m ~ f(.|theta).

    Estimates log Z(theta_hat) / Z(theta).
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if theta.shape != theta_hat.shape or theta.shape != draw.theta.shape:
        raise InvalidInputError("dimension mismatch")
    if not np.array_equal(draw.theta, theta):
        raise InvalidInputError("draw was not made at theta")
    return _log_mean_exp(draw.stats @ (theta_hat - theta))


def exchange_log_ratio(theta, theta_star, draw_at_star):
    """(theta - theta*) . S(x) with x ~ f(.|theta*); estimates log Z(theta)/Z(theta*)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_star = np.atleast_1d(np.asarray(theta_star, dtype=float))
    if theta.shape != theta_star.shape or theta.shape != draw_at_star.theta.shape:
        raise InvalidInputError("dimension mismatch")
    if not np.array_equal(draw_at_star.theta, theta_star):
        raise InvalidInputError("draw was not made at theta_star")
    return float(draw_at_star.stats[0] @ (theta - theta_star))


def path_log_ratio(path):
    """Sum over hops of log (1/M) sum_m exp((theta_{i+1} - theta_i) . S(x_i^m)).

    Estimates log Z(theta_l) / Z(theta_0).
    """
    total = 0.0
    steps = np.diff(path.thetas, axis=0)
    for step, draw in zip(steps, path.draws):
        total += _log_mean_exp(draw.stats @ step)
    return total


def path_log_ratio_single(thetas, stats):
    """M = 1 fast path: ``thetas`` (l+1, d), ``stats`` (l, d)."""
    return float(np.sum(np.diff(thetas, axis=0) * stats))


def bridge_thetas(theta, theta_hat, a):
    """Natural parameters of the geometric bridge targets f_1 .. f_a.

    ``gamma_i = gamma(.|theta)^((i-1)/(a-1)) gamma(.|theta_hat)^((a-i)/(a-1))``
    is itself an Ising density with the linearly interpolated parameter, so
    f_1 = f(.|theta_hat) and f_a = f(.|theta). Row i-1 holds f_i.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if a < 2:
        raise InvalidInputError("need a >= 2 bridge targets")
    frac = np.arange(a) / (a - 1)
    return frac[:, None] * theta + (1.0 - frac[:, None]) * theta_hat


def _mav_chain(theta_hat, theta, a, model, sweeps_per_kernel, rng, down_to=2):
    # x_a ~ f(.|theta), then x_i ~ K_i(.|x_{i+1}) for i = a-1 .. down_to
    bridge = bridge_thetas(theta, theta_hat, a)
    x, _ = model.simulate(theta, rng)
    chain = {a: x}
    for i in range(a - 1, down_to - 1, -1):
        x = model.sweep(bridge[i - 1], x, rng, sweeps_per_kernel)
        chain[i] = x
    return bridge, chain


def mav_log_ratio(theta_hat, theta, a, M, model, sweeps_per_kernel, rng):
    """Annealed importance sampling estimate of log Z(theta_hat) / Z(theta).

    Each replicate starts from ``model.simulate(theta)``, then moves down the
    bridge with ``sweeps_per_kernel`` Gibbs sweeps targeting each f_i, and
    accumulates log gamma_{i-1}(x_i) - log gamma_i(x_i) for i = a .. 2.
    """
    if M < 1:
        raise InvalidInputError("M must be >= 1")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    theta_hat = np.atleast_1d(np.asarray(theta_hat, dtype=float))
    if theta.shape != theta_hat.shape:
        raise InvalidInputError("dimension mismatch")
    rng = as_generator(rng)
    logs = np.empty(M)
    for m in range(M):
        bridge, chain = _mav_chain(theta_hat, theta, a, model, sweeps_per_kernel, rng)
        logs[m] = mav_log_weight_from_chain(model, bridge, chain, a)
    return _log_mean_exp(logs)


def mav_log_weight_from_chain(model, bridge, chain, a):
    total = 0.0
    for i in range(2, a + 1):
        s = model.suff_stats(chain[i])
        total += (bridge[i - 2] - bridge[i - 1]) @ s
    return float(total)


@dataclass(frozen=True)
class AbcMavWeights:
    w_forward: float  # kernel-density form
    w_reverse_chain: float  # unnormalised-density form
    log_mav: float  # MAV estimate on the same chain (states x_2 .. x_a)
    boundary_log: float  # log gamma_a(x_a) - log gamma_1(x_1)


def abc_mav_weight(theta, theta_hat, a, model, rng):
    """The ABC importance weight of an annealed reverse chain, computed two ways.

    A chain ``x_a ~ f(.|theta)``, ``x_i ~ S_i(.|x_{i+1})`` for i = a-1 .. 1 is
    drawn, where S_i is one raster Gibbs sweep targeting the bridge f_i. The
    importance weight of the reverse chain against the forward chain built
    from the time-reversed sweeps S*_i (reverse raster order) is

        w_forward       = prod_i S*_i(x_{i+1} | x_i) / S_i(x_i | x_{i+1})
        w_reverse_chain = prod_i gamma_i(x_{i+1}) / gamma_i(x_i)

    and the two agree pointwise because S*_i is the f_i-adjoint of S_i. The
    normalised f_1(x_1) factor common to both is left out. The unnormalised
    form equals ``exp(log_mav + boundary_log)``.
    """
    rng = as_generator(rng)
    spec = model.spec
    bridge, chain = _mav_chain(theta_hat, theta, a, model, 1, rng, down_to=1)
    log_k = 0.0
    log_g = 0.0
    for i in range(1, a):
        th = bridge[i - 1]
        lo, hi = check_state(spec, chain[i]), check_state(spec, chain[i + 1])
        log_k += (sweep_log_density(spec, th, lo, hi, reverse=True)
                  - sweep_log_density(spec, th, hi, lo, reverse=False))
        log_g += th @ (model.suff_stats(hi) - model.suff_stats(lo))
    log_mav = mav_log_weight_from_chain(model, bridge, chain, a)
    boundary = float(bridge[a - 1] @ model.suff_stats(chain[a]) - bridge[0] @ model.suff_stats(chain[1]))
    return AbcMavWeights(float(np.exp(log_k)), float(np.exp(log_g)), log_mav, boundary)
