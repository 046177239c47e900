import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathmsmc import _backend, _pykernels
from pathmsmc.model import IsingSpec, Order, conditional_table, random_state

ckernels = pytest.importorskip("pathmsmc._ckernels")


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.booleans(), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_gibbs_kernels_bit_identical(w, h, second, sweeps, seed):
    spec = IsingSpec(w, h, Order.SECOND if second else Order.FIRST)
    rng = np.random.default_rng(seed)
    theta = rng.normal(0, 0.6, spec.dim)
    table = conditional_table(spec, theta)
    u = rng.random(sweeps * spec.n_sites)
    a = random_state(spec, rng)
    b = a.copy()
    ckernels.gibbs_sweeps(a, table, u, sweeps, second)
    _pykernels.gibbs_sweeps(b, table, u, sweeps, second)
    assert np.array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 60), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_grow_path_bit_identical(q, d, seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(q + 2, d))
    lrank = rng.permutation(q).astype(np.int64)
    m = rng.normal(size=(d, d))
    v = m @ m.T
    ca, cd = ckernels.grow_path(pts, lrank, v)
    pa, pd = _pykernels.grow_path(pts, lrank, v)
    assert np.array_equal(ca, pa)
    assert cd == pd


def test_uniform_shortage_rejected():
    spec = IsingSpec(3, 3)
    x = random_state(spec, 0)
    with pytest.raises(ValueError):
        _pykernels.gibbs_sweeps(x, conditional_table(spec, [0.1]), np.zeros(5), 1, False)
    with pytest.raises(ValueError):
        ckernels.gibbs_sweeps(x, conditional_table(spec, [0.1]), np.zeros(5), 1, False)


def test_compiled_backend_selected_by_default():
    assert _backend.BACKEND == "cython"


def test_env_var_forces_python_and_results_match():
    code = ("import numpy as np, pathmsmc\n"
            "from pathmsmc.model import IsingModel, IsingSpec\n"
            "print(pathmsmc.BACKEND)\n"
            "print(IsingModel(IsingSpec(4, 4), 30).simulate([0.3], 5)[0].tobytes().hex())\n")
    out = {}
    for flag in ("1", "0"):
        env = dict(os.environ, PATHMSMC_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        out[flag] = res.stdout.split()
    assert out["1"][0] == "python" and out["0"][0] == "cython"
    assert out["1"][1] == out["0"][1]
