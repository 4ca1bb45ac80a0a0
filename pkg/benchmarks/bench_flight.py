"""Throughput of the compiled and numpy flight-time kernels on M0.

    python benchmarks/bench_flight.py --rows 20000 --repeat 3
"""
import argparse
import time

import numpy as np

from silnikov._kernels import BACKENDS
from silnikov.local_dynamics import flight_times
from silnikov.model import default_model


def sample_rows(n, spec, rng):
    g = spec.geometry
    lo = g.eta * np.exp(-2 * np.pi * spec.spectrum.alpha / spec.spectrum.beta) - g.x_star
    hi = g.eta - g.x_star
    cols = [rng.uniform(lo * 0.9, hi * 0.9, n), g.eta * np.exp(-rng.uniform(0.5, 8.0, n))]
    cols += [rng.uniform(-0.02, 0.02, n) for _ in range(spec.N + spec.M)]
    return np.column_stack(cols)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = default_model()
    W = sample_rows(args.rows, spec, np.random.default_rng(args.seed))
    results = {}
    for name, solver in sorted(BACKENDS.items()):
        flight_times(W[:10], spec, solver=solver)  # warm up
        best = np.inf
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            t, status = flight_times(W, spec, solver=solver)
            best = min(best, time.perf_counter() - t0)
        results[name] = (t, status)
        print(f"{name:>9}: {best * 1e3:9.1f} ms  {args.rows / best:12.0f} rows/s")
    if len(results) == 2:
        (ta, sa), (tb, sb) = results["compiled"], results["python"]
        same = sa == sb
        diff = np.nanmax(np.abs(ta[same] - tb[same])) if same.any() else 0.0
        print(f"status mismatches: {(~same).sum()}, max |dt| = {diff:.2e}")


if __name__ == "__main__":
    main()
