"""Time the compiled and numpy likelihood kernels and a short sampler run.

Run with ``python3 benchmarks/bench_kernels.py [--records N] [--repeat R]``.
"""

import argparse
import time

import numpy as np

from misclass_sdm import kernels
from misclass_sdm.mcmc import ChainSchedule, fit
from misclass_sdm.simulate import SimulationPlan, simulate_dataset


def _kernel_case(n, k, seed=0):
    rng = np.random.default_rng(seed)
    eta = np.ascontiguousarray(rng.normal(size=(n, k)))
    labels = rng.integers(0, k, size=n).astype(np.intp)
    rows = np.flatnonzero(rng.random(n) < 0.5).astype(np.intp)
    direction = np.ascontiguousarray(rng.normal(size=n))
    return eta, labels, rows, direction


def bench_kernels(backend, n, k, repeat):
    kern = kernels.get_backend(backend)
    eta, labels, rows, direction = _kernel_case(n, k)
    cache = np.empty(n)
    out = np.empty(len(rows))
    kern.block_loglik(eta, labels, cache)
    t0 = time.perf_counter()
    for _ in range(repeat):
        kern.delta_loglik(eta, labels, rows, 0, direction, 0.01, cache, out)
    return (time.perf_counter() - t0) / repeat


def bench_fit(backend, iters):
    ds = simulate_dataset(SimulationPlan(seed=1))
    sched = ChainSchedule(n_chains=1, n_iters=iters, n_burnin=iters // 2, thin=1)
    t0 = time.perf_counter()
    fit(ds, "covariate", schedule=sched, seed=0, backend=backend)
    return (time.perf_counter() - t0) / iters


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--records", type=int, default=800)
    ap.add_argument("--states", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--iters", type=int, default=400)
    args = ap.parse_args()

    backends = ["python"]
    try:
        kernels.get_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the numpy fallback only")

    print(f"delta_loglik on {args.records} x {args.states} (half the rows touched)")
    kt = {b: bench_kernels(b, args.records, args.states, args.repeat) for b in backends}
    for b, t in kt.items():
        print(f"  {b:<7} {t * 1e6:9.2f} us/call")
    print(f"covariate-scenario sampler, {args.iters} iterations, one chain")
    ft = {b: bench_fit(b, args.iters) for b in backends}
    for b, t in ft.items():
        print(f"  {b:<7} {t * 1e3:9.3f} ms/iteration")
    if len(backends) == 2:
        print(f"speed-up: kernel x{kt['python'] / kt['cython']:.1f}, sampler x{ft['python'] / ft['cython']:.1f}")


if __name__ == "__main__":
    main()
