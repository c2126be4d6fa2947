"""Compiled vs pure-Python scan kernels.

Times the sequential scan forward and its adjoint on ``(lanes, T, N)``
inputs for both backends and prints a table with the speedup.

    python3 benchmarks/bench_kernels.py [--T 256,1024,4096] [--lanes 64] [--state 8]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from medmamba import kernels


def median_seconds(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", default="256,1024,4096")
    p.add_argument("--lanes", type=int, default=64)
    p.add_argument("--state", type=int, default=8)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'T':>6} {'op':>9} " + " ".join(f"{b:>10}" for b in backends) + ("    speedup" if len(backends) == 2 else ""))
    for T in (int(t) for t in args.T.split(",")):
        a = rng.uniform(0.5, 1.0, (args.lanes, T, args.state))
        b = rng.standard_normal((args.lanes, T, args.state))
        g = rng.standard_normal((args.lanes, T, args.state))
        states = kernels.sequential_scan(a, b, backend="python")
        ops = {
            "forward": lambda be: kernels.sequential_scan(a, b, backend=be),
            "backward": lambda be: kernels.sequential_scan_backward(a, states, g, backend=be),
        }
        for name, op in ops.items():
            secs = [median_seconds(lambda: op(be), args.repeats) for be in backends]
            line = f"{T:>6} {name:>9} " + " ".join(f"{s * 1e3:>8.2f}ms" for s in secs)
            if len(secs) == 2:
                line += f"  {secs[0] / secs[1]:>8.1f}x"
            print(line)


if __name__ == "__main__":
    main()
