"""Ising models on a free-boundary grid, Gibbs simulation and enumeration oracles.

A lattice state is a ``(height, width)`` ``int8`` array of +1/-1 spins. The
first-order model uses the horizontal/vertical neighbour pairs N1; the
second-order model adds the diagonal pairs N2. The unnormalised density is
``exp(theta . S(x))`` with ``S = (S1,)`` or ``(S1, S2)``.
"""
import enum
import functools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from . import _backend
from .rng import as_generator

MAX_ENUMERATION_SITES = 20


class InvalidInputError(ValueError):
    pass


class Order(enum.Enum):
    FIRST = "first"
    SECOND = "second"


@dataclass(frozen=True)
class IsingSpec:
    width: int
    height: int
    order: Order = Order.FIRST

    def __post_init__(self):
        if not isinstance(self.order, Order):
            object.__setattr__(self, "order", Order(self.order))
        if int(self.width) < 2 or int(self.height) < 2:
            raise InvalidInputError("lattice must be at least 2x2")

    @property
    def n_sites(self):
        return self.width * self.height

    @property
    def dim(self):
        return 1 if self.order is Order.FIRST else 2

    @property
    def shape(self):
        return (self.height, self.width)

    @functools.cached_property
    def pairs(self):
        """Neighbour pairs as flat raster indices: ``(N1, N2)``, each (m, 2)."""
        idx = np.arange(self.n_sites).reshape(self.shape)
        horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
        vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
        n1 = np.concatenate([horiz, vert])
        if self.order is Order.FIRST:
            n2 = np.empty((0, 2), dtype=int)
        else:
            diag = np.stack([idx[:-1, :-1].ravel(), idx[1:, 1:].ravel()], axis=1)
            anti = np.stack([idx[:-1, 1:].ravel(), idx[1:, :-1].ravel()], axis=1)
            n2 = np.concatenate([diag, anti])
        return n1, n2

    def to_dict(self):
        return {"width": self.width, "height": self.height, "order": self.order.value}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["width"]), int(d["height"]), Order(d.get("order", "first")))


def check_state(spec, state):
    state = np.asarray(state)
    if state.shape != spec.shape:
        raise InvalidInputError(f"state shape {state.shape} does not match lattice {spec.shape}")
    if not np.all((state == 1) | (state == -1)):
        raise InvalidInputError("spins must be exactly -1 or +1")
    return np.ascontiguousarray(state, dtype=np.int8)


def suff_stats(spec, state):
    """Sufficient statistics ``(S1,)`` or ``(S1, S2)`` as a float vector."""
    x = check_state(spec, state).astype(np.int64)
    s1 = np.sum(x[:, :-1] * x[:, 1:]) + np.sum(x[:-1, :] * x[1:, :])
    if spec.order is Order.FIRST:
        return np.array([s1], dtype=float)
    s2 = np.sum(x[:-1, :-1] * x[1:, 1:]) + np.sum(x[:-1, 1:] * x[1:, :-1])
    return np.array([s1, s2], dtype=float)


def log_gamma(theta, stats):
    """Unnormalised log-density ``theta . S(x)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    stats = np.atleast_1d(np.asarray(stats, dtype=float))
    if theta.shape[-1] != stats.shape[-1]:
        raise InvalidInputError(f"theta has dimension {theta.shape[-1]}, stats {stats.shape[-1]}")
    return float(theta @ stats) if stats.ndim == 1 else stats @ theta


def _check_theta(spec, theta):
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (spec.dim,):
        raise InvalidInputError(f"theta must have dimension {spec.dim}")
    if not np.all(np.isfinite(theta)):
        raise InvalidInputError("theta must be finite")
    return theta


def conditional_table(spec, theta):
    """P(spin = +1 | neighbours) indexed by ``[n1 + 4, n2 + 4]``.

    n1 and n2 are the sums of the first- and second-order neighbour spins.
    """
    theta = _check_theta(spec, theta)
    n = np.arange(-4, 5, dtype=float)
    t2 = theta[1] if spec.dim == 2 else 0.0
    field = theta[0] * n[:, None] + t2 * n[None, :]
    return np.ascontiguousarray(expit(2.0 * field))


def gibbs_sweeps(spec, theta, state, n_sweeps, rng):
    """Run ``n_sweeps`` raster-order single-site Gibbs sweeps; returns a new state."""
    x = check_state(spec, state).copy()
    if n_sweeps < 1:
        return x
    rng = as_generator(rng)
    table = conditional_table(spec, theta)
    u = rng.random(n_sweeps * spec.n_sites)
    _backend.gibbs_sweeps(x, table, u, int(n_sweeps), spec.order is Order.SECOND)
    return x


def gibbs_sweep(spec, theta, state, rng):
    return gibbs_sweeps(spec, theta, state, 1, rng)


def random_state(spec, rng):
    rng = as_generator(rng)
    return (2 * rng.integers(0, 2, size=spec.shape) - 1).astype(np.int8)


def simulate_x(spec, theta, sweeps, init, rng):
    """Gibbs-simulate from the likelihood; returns ``(final state, its statistics)``."""
    if sweeps < 1:
        raise InvalidInputError("sweeps must be >= 1")
    x = gibbs_sweeps(spec, theta, init, sweeps, rng)
    return x, suff_stats(spec, x)


def neighbour_sums(spec, state, i, j):
    h, w = spec.shape
    n1 = 0
    for di, dj in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        a, b = i + di, j + dj
        if 0 <= a < h and 0 <= b < w:
            n1 += int(state[a, b])
    n2 = 0
    if spec.order is Order.SECOND:
        for di, dj in ((-1, -1), (-1, 1), (1, -1), (1, 1)):
            a, b = i + di, j + dj
            if 0 <= a < h and 0 <= b < w:
                n2 += int(state[a, b])
    return n1, n2


def site_conditional(spec, theta, state, i, j, value):
    """Full-conditional probability that site (i, j) takes ``value``."""
    n1, n2 = neighbour_sums(spec, state, i, j)
    p_up = conditional_table(spec, theta)[n1 + 4, n2 + 4]
    return p_up if value == 1 else 1.0 - p_up


def sweep_log_density(spec, theta, x_from, x_to, reverse=False):
    """Log transition density of one Gibbs sweep taking ``x_from`` to ``x_to``.

    The forward sweep visits sites in raster order; ``reverse=True`` gives the
    sweep visiting them in reverse raster order (the time-reversal of the
    forward sweep with respect to the target).
    """
    table = conditional_table(spec, theta)
    x = check_state(spec, x_from).copy()
    target = check_state(spec, x_to)
    h, w = spec.shape
    sites = [(i, j) for i in range(h) for j in range(w)]
    if reverse:
        sites.reverse()
    total = 0.0
    for i, j in sites:
        n1, n2 = neighbour_sums(spec, x, i, j)
        p_up = table[n1 + 4, n2 + 4]
        v = target[i, j]
        total += np.log(p_up if v == 1 else 1.0 - p_up)
        x[i, j] = v
    return total


# --- enumeration oracles -------------------------------------------------


@functools.lru_cache(maxsize=8)
def _enumerate(spec):
    n = spec.n_sites
    if n > MAX_ENUMERATION_SITES:
        raise InvalidInputError(f"enumeration refused for {n} sites (max {MAX_ENUMERATION_SITES})")
    k = np.arange(2 ** n, dtype=np.int64)
    spins = (((k[:, None] >> np.arange(n)) & 1) * 2 - 1).astype(np.int8)
    n1, n2 = spec.pairs
    s1 = np.sum(spins[:, n1[:, 0]].astype(np.int64) * spins[:, n1[:, 1]], axis=1)
    cols = [s1]
    if spec.order is Order.SECOND:
        cols.append(np.sum(spins[:, n2[:, 0]].astype(np.int64) * spins[:, n2[:, 1]], axis=1))
    stats = np.stack(cols, axis=1).astype(float)
    values, inverse, counts = np.unique(stats, axis=0, return_inverse=True, return_counts=True)
    return spins, stats, values, np.asarray(inverse).ravel(), counts


def enumerate_stats(spec):
    """Distinct statistic vectors and their multiplicities over all 2^n states."""
    _, _, values, _, counts = _enumerate(spec)
    return values.copy(), counts.copy()


def brute_force_log_z(spec, theta):
    theta = _check_theta(spec, theta)
    values, counts = enumerate_stats(spec)
    return float(logsumexp(values @ theta + np.log(counts)))


def stats_distribution(spec, theta):
    """Exact distribution of S(x) under f(.|theta): ``(values, probabilities)``."""
    theta = _check_theta(spec, theta)
    values, counts = enumerate_stats(spec)
    logp = values @ theta + np.log(counts)
    logp -= logsumexp(logp)
    return values, np.exp(logp)


def exact_sample_stats(spec, theta, rng, size):
    values, p = stats_distribution(spec, theta)
    rng = as_generator(rng)
    return values[rng.choice(len(values), size=size, p=p)]


def exact_sample_state(spec, theta, rng):
    """One exact draw of a lattice state from f(.|theta) by enumeration."""
    spins, _, values, inverse, counts = _enumerate(spec)
    rng = as_generator(rng)
    _, p = stats_distribution(spec, theta)
    v = rng.choice(len(values), p=p)
    members = np.flatnonzero(inverse == v)
    return spins[members[rng.integers(len(members))]].reshape(spec.shape).copy()


def state_log_probs(spec, theta):
    """Exact log-probabilities of all 2^n states (raster bit order)."""
    theta = _check_theta(spec, theta)
    _, stats, _, _, _ = _enumerate(spec)
    lp = stats @ theta
    return lp - logsumexp(lp)


def state_index(spec, state):
    bits = (check_state(spec, state).ravel() > 0).astype(np.int64)
    return int(np.sum(bits << np.arange(spec.n_sites)))


def brute_force_posterior(spec, prior, y_stats, theta_grid):
    """Grid posterior with exact log Z; returns ``(weights, posterior mean)``."""
    grid = np.asarray(theta_grid, dtype=float)
    if grid.size == 0:
        raise InvalidInputError("empty grid")
    grid = grid.reshape(len(grid), -1)
    y = np.asarray(y_stats, dtype=float)
    log_z = np.array([brute_force_log_z(spec, th) for th in grid])
    lw = prior.log_density(grid) + grid @ y - log_z
    lw = np.atleast_1d(lw) - logsumexp(lw)
    w = np.exp(lw)
    return w, w @ grid


def brute_force_log_evidence(spec, prior, y_stats, theta_grid, cell_volume):
    """Riemann-sum log p(y) = log sum_grid p(theta) f(y|theta) * cell_volume."""
    grid = np.asarray(theta_grid, dtype=float).reshape(len(theta_grid), -1)
    y = np.asarray(y_stats, dtype=float)
    log_z = np.array([brute_force_log_z(spec, th) for th in grid])
    terms = prior.log_density(grid) + grid @ y - log_z
    return float(logsumexp(terms) + np.log(cell_volume))


# --- model objects consumed by the samplers ------------------------------


class IsingModel:
    """Likelihood interface used by estimators, SMC and MCMC.

    Downstream code only touches ``dim``, ``log_gamma``, ``suff_stats``,
    ``simulate`` and ``sweep`` (the last for bridge kernels).
    """

    def __init__(self, spec, sweeps=100):
        if sweeps < 1:
            raise InvalidInputError("sweeps must be >= 1")
        self.spec = spec
        self.sweeps = int(sweeps)

    @property
    def dim(self):
        return self.spec.dim

    def log_gamma(self, theta, stats):
        return log_gamma(theta, stats)

    def suff_stats(self, state):
        return suff_stats(self.spec, state)

    def simulate(self, theta, rng):
        """Fresh uniform start followed by ``sweeps`` Gibbs sweeps."""
        rng = as_generator(rng)
        init = random_state(self.spec, rng)
        return simulate_x(self.spec, theta, self.sweeps, init, rng)

    def sweep(self, theta, state, rng, n_sweeps=1):
        return gibbs_sweeps(self.spec, theta, state, n_sweeps, rng)

    def __repr__(self):
        return f"{type(self).__name__}({self.spec}, sweeps={self.sweeps})"


class ExactIsingModel(IsingModel):
    """Same model, but ``simulate`` draws exactly by enumeration (small lattices)."""

    def __init__(self, spec, sweeps=1):
        super().__init__(spec, sweeps)
        _enumerate(spec)

    def simulate(self, theta, rng):
        x = exact_sample_state(self.spec, theta, rng)
        return x, suff_stats(self.spec, x)


# --- lattice files --------------------------------------------------------


def load_lattice(path):
    """Read a lattice from a JSON object ``{width, height, spins}`` or a text grid."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        obj = json.loads(text)
        spins = np.asarray(obj["spins"], dtype=np.int64)
        w, h = int(obj["width"]), int(obj["height"])
        spins = spins.reshape(h, w)
    else:
        rows = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
        spins = np.array([[int(tok) for tok in row] for row in rows], dtype=np.int64)
        if len({len(r) for r in rows}) != 1:
            raise InvalidInputError("ragged lattice grid")
    if not np.all((spins == 1) | (spins == -1)):
        raise InvalidInputError("spins must be exactly -1 or +1")
    return spins.astype(np.int8)


def save_lattice(path, state, extra=None):
    path = Path(path)
    state = np.asarray(state, dtype=int)
    if path.suffix.lower() == ".json":
        obj = {"width": state.shape[1], "height": state.shape[0], "spins": state.tolist()}
        if extra:
            obj.update(extra)
        path.write_text(json.dumps(obj, indent=1) + "\n")
    else:
        lines = [" ".join(f"{v:+d}" for v in row) for row in state]
        path.write_text("\n".join(lines) + "\n")
