"""MCMC baselines: approximate exchange, SAV pseudo-marginal MCMC, ABC-MCMC.

Every sampler makes exactly one likelihood simulation per iteration, so an
``n_iters`` chain costs ``n_iters`` simulations. All use an isotropic
Gaussian random walk with standard deviation ``proposal_sd``.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .estimators import AuxDraw, exchange_log_ratio, sav_log_ratio
from .model import InvalidInputError
from .rng import as_generator


@dataclass
class MCMCTrace:
    samples: np.ndarray  # (n_iters - burn_in, d) chain states after burn-in
    accepted: np.ndarray  # (n_iters - burn_in,) accept flag of the move into each state
    log_ratio: np.ndarray  # (n_iters - burn_in,) ratio-estimate diagnostic per iteration
    burn_in: int
    n_simulations: int
    acceptance_rate: float  # over all iterations, burn-in included
    extras: dict = field(default_factory=dict)

    @property
    def mean(self):
        return self.samples.mean(axis=0)

    def max_rejection_run(self):
        longest = run = 0
        for a in self.accepted:
            run = 0 if a else run + 1
            longest = max(longest, run)
        return longest

    def to_csv(self, path):
        d = self.samples.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration"] + [f"theta{k + 1}" for k in range(d)] + ["accepted", "log_ratio"])
            for i, (th, a, lr) in enumerate(zip(self.samples, self.accepted, self.log_ratio)):
                w.writerow([self.burn_in + i + 1] + [repr(float(v)) for v in th] + [int(a), repr(float(lr))])


def _check(n_iters, burn_in, proposal_sd):
    if n_iters <= burn_in or burn_in < 0:
        raise InvalidInputError("need n_iters > burn_in >= 0")
    if proposal_sd < 0:
        raise InvalidInputError("proposal_sd must be >= 0")


def _initial(prior, theta0, gen):
    if theta0 is None:
        return prior.sample(gen, 1)[0]
    return np.atleast_1d(np.asarray(theta0, dtype=float))


def _finish(states, accepted, log_ratio, burn_in, n_sims, extras=None):
    states = np.asarray(states)
    accepted = np.asarray(accepted, dtype=bool)
    return MCMCTrace(states[burn_in:], accepted[burn_in:], np.asarray(log_ratio)[burn_in:], burn_in,
                     n_sims, float(accepted.mean()), extras or {})


def exchange_mcmc(y_stats, prior, model, n_iters, burn_in, proposal_sd, rng, theta0=None):
    """Approximate exchange algorithm.

    Each iteration draws x ~ f(.|theta*) by Gibbs simulation and accepts with
    probability p(theta*) gamma(y|theta*) gamma(x|theta) / (p(theta) gamma(y|theta) gamma(x|theta*)).
    """
    _check(n_iters, burn_in, proposal_sd)
    gen = as_generator(rng)
    y = np.atleast_1d(np.asarray(y_stats, dtype=float))
    theta = _initial(prior, theta0, gen)
    lp = prior.log_density(theta)
    d = len(theta)
    states, accepted, log_ratios = [], [], []
    for _ in range(n_iters):
        prop = theta + proposal_sd * gen.standard_normal(d)
        _, s = model.simulate(prop, gen)
        lr = exchange_log_ratio(theta, prop, AuxDraw(prop, s))
        lp_prop = prior.log_density(prop)
        log_alpha = lp_prop - lp + (prop - theta) @ y + lr
        u = gen.random()
        ok = bool(np.isfinite(lp_prop) and np.log(u) < log_alpha)
        if ok:
            theta, lp = prop, lp_prop
        states.append(theta.copy())
        accepted.append(ok)
        log_ratios.append(lr)
    return _finish(states, accepted, log_ratios, burn_in, n_iters)


def sav_mcmc(y_stats, prior, model, n_iters, burn_in, proposal_sd, rng, anchor_policy="refresh",
             anchor_init=None, warmup=500, window=250, theta0=None):
    """Single auxiliary variable pseudo-marginal MCMC.

    The state is (theta, S(x)) with x ~ f(.|theta); the cached statistics are
    replaced only when a move is accepted. The anchor theta-hat of the SAV
    estimate is ``anchor_init`` (default 0) for the first ``warmup``
    iterations. After that it is the mean of the previous ``window`` states,
    recomputed every iteration (``"refresh"``) or frozen at its first value
    (``"fixed"``). When the anchor moves, the cached estimate is re-evaluated
    against the new anchor from the cached statistics, so numerator and
    denominator of every acceptance ratio share one anchor.

    The first iteration spends its simulation on the initial state.
    """
    _check(n_iters, burn_in, proposal_sd)
    if anchor_policy not in ("refresh", "fixed"):
        raise InvalidInputError("anchor_policy must be 'refresh' or 'fixed'")
    gen = as_generator(rng)
    y = np.atleast_1d(np.asarray(y_stats, dtype=float))
    theta = _initial(prior, theta0, gen)
    d = len(theta)
    anchor = np.zeros(d) if anchor_init is None else np.atleast_1d(np.asarray(anchor_init, dtype=float))
    lp = prior.log_density(theta)
    _, cached = model.simulate(theta, gen)
    cache_changes = 0
    states = np.empty((n_iters, d))
    states[0] = theta
    accepted = np.zeros(n_iters, dtype=bool)
    accepted[0] = True
    log_ratios = np.empty(n_iters)
    log_ratios[0] = sav_log_ratio(anchor, theta, AuxDraw(theta, cached))
    anchors = np.empty((n_iters, d))
    anchors[0] = anchor
    frozen = False
    for i in range(1, n_iters):
        # i is the 0-based iteration; states[:i] are the previous states
        if i >= warmup and not frozen:
            anchor = states[max(0, i - window):i].mean(axis=0)
            frozen = anchor_policy == "fixed"
        prop = theta + proposal_sd * gen.standard_normal(d)
        _, s = model.simulate(prop, gen)
        # M = 1 SAV estimates against the shared anchor, the cached one rebuilt from cached stats
        lr_prop = float((anchor - prop) @ s)
        lr_cur = float((anchor - theta) @ cached)
        lp_prop = prior.log_density(prop)
        log_alpha = lp_prop + prop @ y + lr_prop - (lp + theta @ y + lr_cur)
        u = gen.random()
        ok = bool(np.isfinite(lp_prop) and np.log(u) < log_alpha)
        if ok:
            theta, lp, cached = prop, lp_prop, s
            cache_changes += 1
        states[i] = theta
        accepted[i] = ok
        log_ratios[i] = lr_prop
        anchors[i] = anchor
    extras = {"cache_changes": cache_changes, "anchors": anchors[burn_in:]}
    return _finish(states, accepted, log_ratios, burn_in, n_iters, extras)


def abc_mcmc(y_stats, prior, model, n_iters, burn_in, proposal_sd, rng, theta0=None):
    """ABC-MCMC with zero tolerance on the (integer-valued) statistics.

    A proposal can only be accepted if its simulated statistics equal
    ``y_stats`` exactly; it is then accepted with the prior-ratio probability.
    """
    _check(n_iters, burn_in, proposal_sd)
    gen = as_generator(rng)
    y = np.atleast_1d(np.asarray(y_stats, dtype=float))
    theta = _initial(prior, theta0, gen)
    lp = prior.log_density(theta)
    d = len(theta)
    states, accepted, dist = [], [], []
    for _ in range(n_iters):
        prop = theta + proposal_sd * gen.standard_normal(d)
        _, s = model.simulate(prop, gen)
        match = bool(np.array_equal(s, y))
        lp_prop = prior.log_density(prop)
        u = gen.random()
        ok = match and bool(np.isfinite(lp_prop) and np.log(u) < lp_prop - lp)
        if ok:
            theta, lp = prop, lp_prop
        states.append(theta.copy())
        accepted.append(ok)
        dist.append(float(np.abs(s - y).sum()))
    return _finish(states, accepted, dist, burn_in, n_iters)


def tune_proposal_sd(y_stats, prior, model, rng, sd0=0.1, target=(0.25, 0.40), n_pilot=300,
                     max_rounds=12, theta0=None):
    """Pilot exchange runs adjusting the random-walk sd towards the target acceptance band."""
    gen = as_generator(rng)
    sd = float(sd0)
    theta = theta0
    for _ in range(max_rounds):
        tr = exchange_mcmc(y_stats, prior, model, n_pilot, n_pilot // 2, sd, gen, theta0=theta)
        theta = tr.samples[-1]
        rate = tr.acceptance_rate
        if target[0] <= rate <= target[1]:
            break
        sd *= 1.6 if rate > target[1] else 1 / 1.6
    return sd
