"""Time the compiled and pure-Python kernel backends on the same inputs.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N wall time for each backend,
the speedup, and whether the outputs were identical.
"""

import argparse
import time

import numpy as np

from camsync import _kernels_py as py

try:
    from camsync import _kernels as cy
except ImportError:
    cy = None


def _inputs(rng):
    n = 20_000
    t0 = rng.integers(0, 10**15, n)
    t1 = t0 + rng.integers(0, 10**7, n)
    t2 = t1 + rng.integers(0, 10**5, n)
    t3 = t2 + rng.integers(0, 10**7, n)
    theta, phi = py.ntp_offsets(t0, t1, t2, t3)
    steps = rng.integers(0, 2 * 10**9, (2_000, 99))
    return {
        "ntp_offsets": (t0, t1, t2, t3),
        "latched_min": (theta, phi),
        "running_mean": (theta, phi, 10**7),
        "first_acceptance": (rng.integers(0, 10**9, 2_000), steps, 33_000_000, 500_000),
        "injection_runs": (rng.integers(0, 33_000_000, 5_000), rng.standard_normal((5_000, 50)), 33_000_000,
                           2.0, 2, 11_000, 25_000.0, 10_000),
        "overlap_centroids": (rng.integers(0, 10**13, 20_000), 100_000, 200_000, 10, None),
        "ks_uniform": (np.sort(rng.random(100_000)),),
    }


def _best(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t)
    return best, out


def _equal(a, b):
    if isinstance(a, tuple):
        return all(_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if cy is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':<18} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>9}  same")
    for name, a in _inputs(np.random.default_rng(args.seed)).items():
        tp, op = _best(getattr(py, name), a, args.repeat)
        tc, oc = _best(getattr(cy, name), a, args.repeat)
        print(f"{name:<18} {tp * 1e3:12.2f} {tc * 1e3:12.3f} {tp / tc:8.0f}x  {_equal(op, oc)}")


if __name__ == "__main__":
    main()
