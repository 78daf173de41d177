"""Time the compiled and numpy kernels on the benchmark mixture.

Usage: python benchmarks/bench_kernels.py [--particles N] [--repeat R]
"""

import argparse
import time

import numpy as np

from rsdmc import _kernels
from rsdmc.samplers import run_sampler
from rsdmc.schedule import practical_schedule
from rsdmc.target import benchmark_mixture


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--particles", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    gmm = benchmark_mixture()
    cases = [
        ("ula", {"sampler": "ula", "budget": 800}),
        ("dmc", {"sampler": "dmc", "budget": 800}),
        ("rsdmc-v1", {"sampler": "rsdmc-v1"}),
        ("rsdmc-v2 n=m=2", {"sampler": "rsdmc-v2", "n": 2, "m": 2, "R": 20, "eta": 0.25}),
    ]
    backends = _kernels.available()
    print(f"{'case':<16}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for label, cfg in cases:
        p = practical_schedule(cfg)
        row, ref = {}, None
        for b in backends:
            dt, ps = best_of(lambda: run_sampler(gmm, p, args.particles, 0, backend=b), args.repeat)
            row[b] = dt
            if ref is None:
                ref = ps.points
            elif not np.allclose(ref, ps.points, rtol=1e-9, atol=1e-12):
                raise SystemExit(f"{label}: backends disagree")
        speed = row["numpy"] / row["cython"] if "cython" in row else float("nan")
        print(f"{label:<16}" + "".join(f"{row[b]:>11.3f}s" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
