"""Compare the compiled and pure-Python kernels.

Run with ``python benchmarks/bench_kernels.py``. Reports the time per
Gibbs site update (10x10 lattice, 100 sweeps, as in one likelihood
simulation) and per greedy path growth over a few hundred candidates.
"""
import argparse
import timeit

import numpy as np

from pathmsmc import _pykernels
from pathmsmc.model import IsingSpec, Order, conditional_table, random_state

try:
    from pathmsmc import _ckernels
except ImportError:
    _ckernels = None


def bench_gibbs(kernels, spec, sweeps, repeat):
    rng = np.random.default_rng(0)
    table = conditional_table(spec, np.full(spec.dim, 0.3))
    u = rng.random(sweeps * spec.n_sites)
    x = random_state(spec, rng)
    second = spec.order is Order.SECOND
    t = min(timeit.repeat(lambda: kernels.gibbs_sweeps(x, table, u, sweeps, second), number=1, repeat=repeat))
    return t, t / (sweeps * spec.n_sites)


def bench_grow(kernels, q, d, repeat):
    rng = np.random.default_rng(1)
    pts = rng.random((q + 2, d))
    pts[0], pts[1] = 0.0, 1.0
    lrank = rng.permutation(q).astype(np.int64)
    v = np.eye(d)
    return min(timeit.repeat(lambda: kernels.grow_path(pts, lrank, v), number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--side", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=100)
    p.add_argument("--candidates", type=int, default=400)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    backends = [("python", _pykernels)]
    if _ckernels is not None:
        backends.insert(0, ("cython", _ckernels))
    else:
        print("compiled extension not built; timing the Python kernels only")

    results = {}
    for order in Order:
        spec = IsingSpec(args.side, args.side, order)
        for name, k in backends:
            total, per_site = bench_gibbs(k, spec, args.sweeps, args.repeat)
            results[("gibbs", order.value, name)] = total
            print(f"gibbs {order.value:6s} {name:6s}  {total * 1e3:9.3f} ms/simulation  {per_site * 1e9:8.1f} ns/site")
    for d in (1, 2):
        for name, k in backends:
            t = bench_grow(k, args.candidates, d, args.repeat)
            results[("grow", d, name)] = t
            print(f"grow_path d={d}   {name:6s}  {t * 1e6:9.1f} us for {args.candidates} candidates")
    if _ckernels is not None:
        for key in sorted({k[:2] for k in results}, key=str):
            print(f"speed-up {key[0]} {key[1]}: {results[key + ('python',)] / results[key + ('cython',)]:.1f}x")


if __name__ == "__main__":
    main()
