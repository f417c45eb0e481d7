"""Time the numba kernels against their numpy twins.

Run with ``python3 benchmarks/bench_backends.py [--repeat N]``. Each kernel is
warmed up once per backend (so numba compilation is excluded), then timed
``repeat`` times; the best time is reported along with the max abs
difference between the two backends' outputs.
"""
import argparse
import time

import numpy as np

from pam import _kernels
from pam.chaos_moments import angular_rule


def _cases(rng):
    # sizes roughly match what the library feeds these kernels
    wq = rng.random((600, 160))
    sq = rng.random((600, 160)) * 2.0 - 1.0
    nodes = np.cos(np.pi * (np.arange(144) + 0.5) / 144)
    bary = np.sin(np.pi * (np.arange(144) + 0.5) / 144) * (-1.0) ** np.arange(144)

    rule = angular_rule(0.5)
    n = 1 << 14
    a1, a2, b = rng.random(n) + 0.1, rng.random(n) + 0.1, rng.random(n)

    V = rng.standard_normal((512, 16))
    decay = np.exp(-rng.random(32))
    inject = rng.random(32)
    return {
        "bary_project": lambda: _kernels.bary_project(wq, sq, nodes, bary),
        "angular_sum": lambda: _kernels.angular_sum(a1, a2, b, rule, 0.5),
        "causal_scan": lambda: _kernels.causal_scan(V, decay, inject),
    }


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    cases = _cases(np.random.default_rng(0))
    original = _kernels.backend()
    print(f"{'kernel':<14}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}{'max|diff|':>12}")
    try:
        for name, fn in cases.items():
            res, times = {}, {}
            for be in ("numba", "numpy"):
                _kernels.set_backend(be)
                res[be] = fn()  # warm-up / compile
                times[be] = best_time(fn, args.repeat)
            diff = float(np.max(np.abs(res["numba"] - res["numpy"])))
            print(f"{name:<14}{1e3 * times['numba']:>12.2f}{1e3 * times['numpy']:>12.2f}"
                  f"{times['numpy'] / times['numba']:>10.1f}{diff:>12.2e}")
    finally:
        _kernels.set_backend(original)


if __name__ == "__main__":
    main()
