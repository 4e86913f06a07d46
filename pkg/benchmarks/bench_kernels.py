#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy/scipy fallback.

Usage:
    python benchmarks/bench_kernels.py [--e2e]

--e2e also times a full phase-1 simulation under each backend (run in
subprocesses because the backend is chosen at import time).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from acta import _kernels_py

try:
    from acta import _kernels_cy
except ImportError:
    _kernels_cy = None


def timeit(fn, *args, repeats=7):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels():
    rng = np.random.default_rng(0)
    cases = []

    white = rng.normal(0, 1, 2_000_000)
    cases.append(("pink_filter (2M samples)", "pink_filter", (white,)))

    px = rng.uniform(-200, 200, 5_000)
    py = rng.uniform(-200, 200, 5_000)
    vx = np.cumsum(rng.uniform(5, 15, 120))
    vy = rng.uniform(-10, 10, 120)
    cases.append(("polyline_min_dist (5k pts x 119 segs)", "polyline_min_dist",
                  (px, py, vx, vy)))

    ts = np.arange(0, 3600, 0.02)
    mag = 9.81 + 2.2 * np.sin(2 * np.pi * 1.8 * ts) + rng.normal(0, 0.4, ts.size)
    cases.append(("count_peaks (180k samples)", "count_peaks", (mag, ts, 11.0, 0.3)))

    print(f"{'kernel':42s} {'python':>12s} {'cython':>12s} {'speedup':>9s}")
    for label, name, args in cases:
        t_py = timeit(getattr(_kernels_py, name), *args)
        if _kernels_cy is None:
            print(f"{label:42s} {t_py * 1e3:10.2f}ms {'n/a':>12s} {'n/a':>9s}")
            continue
        t_cy = timeit(getattr(_kernels_cy, name), *args)
        print(f"{label:42s} {t_py * 1e3:10.2f}ms {t_cy * 1e3:10.2f}ms "
              f"{t_py / t_cy:8.1f}x")


E2E_SNIPPET = r"""
import sys, time
sys.path.insert(0, "tests")
from conftest import scenario_yaml
from acta.scenario import load_scenario
from acta.runner import run_phase1
import acta
sc = load_scenario(scenario_yaml(length_m=400.0, landmarks=(80.0, 160.0, 240.0, 320.0),
                                 non_relevant=(120.0, 200.0), radius_m=20.0,
                                 nr_radius_m=15.0, speed=1.2,
                                 channels=("Fp1","Fp2","C3","C4","P3","P4","O1","O2"),
                                 fs=250.0, eeg_batch=25))
t0 = time.perf_counter()
run_phase1(sc, out_path="/tmp/bench_e2e.log")
print(f"{acta.KERNEL_BACKEND}: {time.perf_counter()-t0:.2f}s")
"""


def bench_e2e():
    print("\nfull phase-1 run (2 sessions, 400 m route, 8-channel 250 Hz EEG):")
    for backend, env_value in (("cython", "0"), ("python", "1")):
        env = dict(os.environ, ACTA_PURE_PYTHON=env_value)
        out = subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env,
                             capture_output=True, text=True, check=True)
        print("  " + out.stdout.strip())


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--e2e", action="store_true", help="also time a full phase-1 run")
    args = parser.parse_args()
    bench_kernels()
    if args.e2e:
        bench_e2e()
