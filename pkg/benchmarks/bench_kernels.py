"""Compare the compiled and NumPy fractional-delay kernels.

Usage: python3 benchmarks/bench_kernels.py [--arrivals N] [--repeat R]
"""
import argparse
import time

import numpy as np

from hybridse import kernels
from hybridse.room import Room, simulate_rir


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_accumulate(n_arrivals, n_out, repeat, rng):
    delays = rng.uniform(0, n_out, n_arrivals)
    amps = rng.standard_normal(n_arrivals)
    out_py, out_c = np.zeros(n_out), np.zeros(n_out)
    kernels.accumulate_arrivals_py(out_py, delays, amps)
    results = {"python": _time(lambda: kernels.accumulate_arrivals_py(np.zeros(n_out), delays, amps), repeat)}
    if kernels.compiled_available():
        from hybridse import _ism_core

        _ism_core.accumulate_arrivals(out_c, delays, amps)
        err = np.max(np.abs(out_c - out_py)) / np.max(np.abs(out_py))
        results["cython"] = _time(lambda: _ism_core.accumulate_arrivals(np.zeros(n_out), delays, amps), repeat)
        results["max_rel_diff"] = err
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--arrivals", type=int, default=300_000)
    ap.add_argument("--samples", type=int, default=8000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    print(f"active backend: {kernels.BACKEND}")
    r = bench_accumulate(args.arrivals, args.samples, args.repeat, rng)
    print(f"accumulate_arrivals, {args.arrivals} arrivals into {args.samples} samples")
    print(f"  python  {r['python'] * 1e3:9.1f} ms")
    if "cython" in r:
        print(f"  cython  {r['cython'] * 1e3:9.1f} ms   speed-up x{r['python'] / r['cython']:.1f}")
        print(f"  max relative difference {r['max_rel_diff']:.2e}")
    else:
        print("  cython  (extension not built)")

    room = Room(4.5, 7.0, 3.0, 0.5)
    t0 = time.perf_counter()
    simulate_rir(room, (1.0, 2.0, 1.5), (3.2, 4.1, 1.4))
    print(f"simulate_rir, 4.5x7x3 m, T60 0.5 s, active backend: {time.perf_counter() - t0:.3f} s")


if __name__ == "__main__":
    main()
