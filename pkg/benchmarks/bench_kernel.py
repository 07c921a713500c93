"""Wall-clock comparison of the compiled and pure-Python round loops.

Usage: python3 benchmarks/bench_kernel.py [rounds]
"""
import sys
import time

import numpy as np

from blindcal import kernel
from blindcal.config import load_config
from blindcal.simharness import run


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    rounds = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
    print(f"default backend: {kernel.BACKEND}")
    for preset in ("noiseless", "lossy-iv-d1"):
        cfg = load_config(preset=preset, overrides=[f"run.rounds={rounds}", "run.cadence=100"]).sim
        rows = {}
        for backend in ("cython", "python"):
            if backend == "cython" and kernel.advance_compiled is None:
                print("  compiled kernel not built; skipping")
                continue
            secs, tr = best_of(lambda: run(cfg, backend=backend), 3 if backend == "cython" else 1)
            rows[backend] = (secs, tr)
            print(f"{preset:12s} {backend:7s} {rounds} rounds: {secs:8.3f} s  ({rounds / secs:,.0f} rounds/s)")
        if len(rows) == 2:
            diff = np.max(np.abs(rows["cython"][1].theta - rows["python"][1].theta))
            print(f"{preset:12s} speed-up x{rows['python'][0] / rows['cython'][0]:.1f}, max |theta difference| {diff:.1e}")


if __name__ == "__main__":
    main()
