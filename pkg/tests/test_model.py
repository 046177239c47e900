import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from pathmsmc.model import (ExactIsingModel, InvalidInputError, IsingModel, IsingSpec, Order,
                            brute_force_log_evidence, brute_force_log_z, brute_force_posterior,
                            enumerate_stats, exact_sample_stats, gibbs_sweep, gibbs_sweeps, load_lattice,
                            log_gamma, random_state, save_lattice, simulate_x, site_conditional,
                            state_index, state_log_probs, suff_stats)
from pathmsmc.priors import PriorSpec


def lattices(max_side=5):
    return st.tuples(st.integers(2, max_side), st.integers(2, max_side), st.sampled_from(list(Order)),
                     st.integers(0, 2**32 - 1))


def pooled_chisquare_p(observed, probs):
    """Chi-squared p-value with cells of expected count < 5 pooled into one."""
    n = observed.sum()
    keep = probs * n >= 5
    exp, ob = probs[keep] * n, observed[keep]
    if probs[~keep].sum() * n > 0:
        exp = np.append(exp, probs[~keep].sum() * n)
        ob = np.append(ob, observed[~keep].sum())
    return sps.chisquare(ob, exp * ob.sum() / exp.sum()).pvalue


def test_spec_pair_counts():
    for w, h in [(2, 2), (3, 5), (10, 10)]:
        spec = IsingSpec(w, h, Order.SECOND)
        n1, n2 = spec.pairs
        assert len(n1) == w * (h - 1) + h * (w - 1)
        assert len(n2) == 2 * (w - 1) * (h - 1)
    assert len(IsingSpec(3, 3).pairs[1]) == 0


def test_spec_rejects_small():
    with pytest.raises(InvalidInputError):
        IsingSpec(1, 4)


def test_spec_roundtrip():
    spec = IsingSpec(3, 4, "second")
    assert IsingSpec.from_dict(spec.to_dict()) == spec
    assert spec.dim == 2 and spec.shape == (4, 3)


def test_suff_stats_small_grids():
    ones = np.ones((2, 2), dtype=int)
    assert suff_stats(IsingSpec(2, 2), ones)[0] == 4
    assert suff_stats(IsingSpec(2, 2, Order.SECOND), ones)[1] == 2
    checker = np.array([[1, -1], [-1, 1]])
    assert suff_stats(IsingSpec(2, 2), checker)[0] == -4


def test_suff_stats_matches_pair_lists():
    spec = IsingSpec(4, 3, Order.SECOND)
    x = random_state(spec, 0).ravel().astype(int)
    n1, n2 = spec.pairs
    s = suff_stats(spec, x.reshape(spec.shape))
    assert s[0] == np.sum(x[n1[:, 0]] * x[n1[:, 1]])
    assert s[1] == np.sum(x[n2[:, 0]] * x[n2[:, 1]])


def test_suff_stats_rejects_bad_states():
    spec = IsingSpec(3, 3)
    with pytest.raises(InvalidInputError):
        suff_stats(spec, np.ones((3, 4)))
    with pytest.raises(InvalidInputError):
        suff_stats(spec, np.zeros((3, 3)))


@given(lattices())
def test_suff_stats_flip_invariant_and_bounded(args):
    w, h, order, seed = args
    spec = IsingSpec(w, h, order)
    x = random_state(spec, seed)
    s = suff_stats(spec, x)
    assert np.array_equal(s, suff_stats(spec, -x))
    n1, n2 = spec.pairs
    assert abs(s[0]) <= len(n1)
    if order is Order.SECOND:
        assert abs(s[1]) <= len(n2)
    assert np.array_equal(s, np.round(s))


def test_log_gamma_values():
    assert log_gamma([0.0, 0.0], [3.0, -2.0]) == 0.0
    assert log_gamma([0.3], [4.0]) == pytest.approx(1.2, abs=1e-15)
    with pytest.raises(InvalidInputError):
        log_gamma([0.1, 0.2], [1.0])


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2), st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.integers(-50, 50), min_size=2, max_size=2))
def test_log_gamma_difference_identity(a, b, s):
    a, b, s = np.array(a), np.array(b), np.array(s, dtype=float)
    assert log_gamma(a, s) - log_gamma(b, s) == pytest.approx((a - b) @ s, abs=1e-12)


def test_gibbs_theta_zero_mean_spin():
    spec = IsingSpec(4, 4)
    x = random_state(spec, 1)
    rng = np.random.default_rng(2)
    total = 0.0
    n = 10_000
    for _ in range(n):
        x = gibbs_sweep(spec, [0.0], x, rng)
        total += x.mean()
    # at theta = 0 every site is a fresh fair coin each sweep: sweeps are independent
    se = 1.0 / np.sqrt(spec.n_sites * n)
    assert abs(total / n) < 3 * se


def test_gibbs_preserves_valid_state_and_is_deterministic():
    spec = IsingSpec(5, 4, Order.SECOND)
    x0 = random_state(spec, 3)
    a = gibbs_sweeps(spec, [0.2, -0.1], x0, 7, 11)
    b = gibbs_sweeps(spec, [0.2, -0.1], x0, 7, 11)
    assert np.array_equal(a, b)
    assert set(np.unique(a)) <= {-1, 1}
    assert np.array_equal(x0, random_state(spec, 3))  # input untouched


def test_gibbs_s1_distribution_matches_enumeration():
    spec = IsingSpec(3, 3)
    theta = np.array([0.3])
    values, counts = enumerate_stats(spec)
    p = counts * np.exp(values @ theta - brute_force_log_z(spec, theta))
    x = random_state(spec, 0)
    rng = np.random.default_rng(5)
    n = 20_000
    obs = np.zeros(len(values))
    lookup = {v: k for k, v in enumerate(values[:, 0])}
    x = gibbs_sweeps(spec, theta, x, 100, rng)
    for _ in range(n):
        x = gibbs_sweeps(spec, theta, x, 3, rng)
        obs[lookup[suff_stats(spec, x)[0]]] += 1
    assert pooled_chisquare_p(obs, p) > 0.01


@pytest.mark.slow
def test_gibbs_state_distribution_total_variation():
    spec = IsingSpec(3, 3, Order.SECOND)
    theta = np.array([0.25, -0.15])
    target = np.exp(state_log_probs(spec, theta))
    x = random_state(spec, 0)
    rng = np.random.default_rng(9)
    n = 1_000_000
    block = 1000
    counts = np.zeros(2 ** spec.n_sites)
    weights = 1 << np.arange(spec.n_sites)
    from pathmsmc import _backend
    from pathmsmc.model import conditional_table
    table = conditional_table(spec, theta)
    for _ in range(n // block):
        for _ in range(block):
            _backend.gibbs_sweeps(x, table, rng.random(spec.n_sites), 1, True)
            counts[int(np.sum((x.ravel() > 0) * weights))] += 1
    tv = 0.5 * np.abs(counts / n - target).sum()
    assert tv < 0.02


def test_site_conditional_detailed_balance():
    rng = np.random.default_rng(4)
    for order in Order:
        spec = IsingSpec(4, 3, order)
        for _ in range(50):
            theta = rng.normal(0, 0.5, spec.dim)
            x = random_state(spec, rng)
            i, j = rng.integers(spec.height), rng.integers(spec.width)
            y = x.copy()
            y[i, j] = -x[i, j]
            k_fwd = site_conditional(spec, theta, x, i, j, y[i, j])
            k_bwd = site_conditional(spec, theta, y, i, j, x[i, j])
            lhs = np.log(k_fwd) - np.log(k_bwd)
            rhs = theta @ (suff_stats(spec, y) - suff_stats(spec, x))
            assert lhs == pytest.approx(rhs, abs=1e-12)


def test_simulate_x_contract():
    spec = IsingSpec(4, 4)
    init = random_state(spec, 0)
    x, s = simulate_x(spec, [0.4], 10, init, 3)
    assert np.array_equal(s, suff_stats(spec, x))
    x2, s2 = simulate_x(spec, [0.4], 10, init, 3)
    assert np.array_equal(x, x2) and np.array_equal(s, s2)
    with pytest.raises(InvalidInputError):
        simulate_x(spec, [0.4], 0, init, 3)


def test_simulate_x_theta_zero_matches_independent_spins():
    spec = IsingSpec(3, 3)
    values, counts = enumerate_stats(spec)
    p = counts / counts.sum()
    model = IsingModel(spec, sweeps=100)
    rng = np.random.default_rng(8)
    n = 3000
    lookup = {v: k for k, v in enumerate(values[:, 0])}
    obs = np.zeros(len(values))
    for _ in range(n):
        obs[lookup[model.simulate([0.0], rng)[1][0]]] += 1
    assert pooled_chisquare_p(obs, p) > 0.01


def test_log_z_known_values():
    spec = IsingSpec(2, 2)
    expected = np.log(12 + 2 * np.exp(1.2) + 2 * np.exp(-1.2))
    assert brute_force_log_z(spec, [0.3]) == pytest.approx(expected, abs=1e-13)
    for w, h, order in [(3, 3, Order.FIRST), (4, 4, Order.SECOND), (4, 5, Order.FIRST)]:
        sp = IsingSpec(w, h, order)
        assert abs(brute_force_log_z(sp, np.zeros(sp.dim)) - sp.n_sites * np.log(2)) < 1e-12


def test_log_z_monotone_in_theta1():
    spec = IsingSpec(3, 4)
    vals = [brute_force_log_z(spec, [t]) for t in np.linspace(0.01, 1.5, 40)]
    assert np.all(np.diff(vals) > 0)


def test_log_z_refuses_large_lattice():
    with pytest.raises(InvalidInputError):
        brute_force_log_z(IsingSpec(5, 5), [0.1])


def test_state_log_probs_and_index_agree():
    spec = IsingSpec(2, 3)
    lp = state_log_probs(spec, [0.5])
    x = np.ones(spec.shape, dtype=np.int8)
    assert lp[state_index(spec, x)] == pytest.approx(
        0.5 * suff_stats(spec, x)[0] - brute_force_log_z(spec, [0.5]), abs=1e-12)
    assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)


def test_exact_sample_stats_mean():
    spec = IsingSpec(3, 3)
    values, counts = enumerate_stats(spec)
    p = counts * np.exp(values[:, 0] * 0.4 - brute_force_log_z(spec, [0.4]))
    draws = exact_sample_stats(spec, [0.4], 0, 20000)[:, 0]
    mu = p @ values[:, 0]
    sd = np.sqrt(p @ (values[:, 0] - mu) ** 2)
    assert abs(draws.mean() - mu) < 3 * sd / np.sqrt(len(draws))


def test_exact_model_simulate_consistent():
    spec = IsingSpec(3, 3)
    m = ExactIsingModel(spec)
    x, s = m.simulate([0.2], 1)
    assert np.array_equal(s, suff_stats(spec, x))


def test_posterior_trivial_cases():
    spec = IsingSpec(3, 3)
    w, mean = brute_force_posterior(spec, PriorSpec.uniform(-1, 1), [5.0], [[0.3]])
    assert w[0] == 1.0 and mean[0] == pytest.approx(0.3)
    grid = np.linspace(-0.9, 0.9, 19)[:, None]
    spec2 = IsingSpec(3, 3, Order.SECOND)
    grid2 = np.array([[a, b] for a in np.linspace(-0.9, 0.9, 7) for b in np.linspace(-0.9, 0.9, 7)])
    _, m1 = brute_force_posterior(spec, PriorSpec.normal(0, 1), [0.0], grid)
    _, m2 = brute_force_posterior(spec2, PriorSpec.uniform([-1, -1], [1, 1]), [0.0, 0.0], grid2)
    assert abs(m1[0]) < 1e-12
    # flipping one checkerboard sublattice negates S1 but not S2, so only theta1 is symmetric
    assert abs(m2[0]) < 1e-12
    with pytest.raises(InvalidInputError):
        brute_force_posterior(spec, PriorSpec.uniform(0, 1), [1.0], np.empty((0, 1)))


def test_posterior_weights_normalised():
    spec = IsingSpec(4, 4)
    grid = ((np.arange(200) + 0.5) / 200)[:, None]
    w, mean = brute_force_posterior(spec, PriorSpec.uniform(0, 1), [6.0], grid)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert 0 < mean[0] < 1


def test_log_evidence_uniform_theta_zero_limit():
    spec = IsingSpec(2, 2)
    # point-like prior mass near 0: p(y) -> 2^-n
    grid = np.array([[0.0]])
    val = brute_force_log_evidence(spec, PriorSpec.uniform(-0.5, 0.5), [0.0], grid, 1.0)
    assert val == pytest.approx(-4 * np.log(2), abs=1e-12)


def test_lattice_files_roundtrip(tmp_path):
    spec = IsingSpec(4, 3)
    x = random_state(spec, 2)
    for name in ("a.json", "a.txt"):
        save_lattice(tmp_path / name, x)
        assert np.array_equal(load_lattice(tmp_path / name), x)
    obj = json.loads((tmp_path / "a.json").read_text())
    assert obj["width"] == 4 and obj["height"] == 3
    (tmp_path / "bad.txt").write_text("1 0\n1 1\n")
    with pytest.raises(InvalidInputError):
        load_lattice(tmp_path / "bad.txt")


@settings(max_examples=25)
@given(lattices(4))
def test_model_sweep_matches_function(args):
    w, h, order, seed = args
    spec = IsingSpec(w, h, order)
    m = IsingModel(spec, sweeps=3)
    theta = np.full(spec.dim, 0.2)
    x = random_state(spec, seed)
    assert np.array_equal(m.sweep(theta, x, seed, 3), gibbs_sweeps(spec, theta, x, 3, seed))
