#!/usr/bin/env python3
"""Benchmark the compiled marching kernel against the pure-python fallback.

Runs the same reset-loop simulations through both backends and reports
wall-clock times plus the worst deviation between the two (which should sit
at round-off level).
"""

import argparse
import math
import time

import numpy as np

from resetfreq import elements
from resetfreq.sim import SignalSpec, SimOptions, simulate
from resetfreq.sim import core, _stepper_py

try:
    from resetfreq.sim import _stepper as _stepper_cy
except ImportError:
    _stepper_cy = None


def run_case(kernel, cfg, freq_hz, options):
    core._kernel = kernel
    t0 = time.perf_counter()
    res = simulate(cfg, SignalSpec.sine(1.0, freq_hz), options)
    return time.perf_counter() - t0, res


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if _stepper_cy is None:
        print("compiled kernel not available; only timing the fallback")

    cases = [
        ("Rs1 @ 20 Hz, no regularization", "Rs1", 20.0, 0.0),
        ("Rs1 @ 100 Hz, full regularization", "Rs1", 100.0, "full"),
        ("R4 @ 50 Hz, optimal regularization", "R4", 50.0, "optimal"),
    ]
    options = SimOptions(max_periods=200)
    original = core._kernel
    try:
        for label, name, freq, tau in cases:
            tuning = elements.ALL_TUNINGS[name]
            w = 2.0 * math.pi * freq
            if tau == "full":
                tau_s = elements.resolve_tau("full", w=w)
            elif tau == "optimal":
                tau_s = elements.resolve_tau("optimal", wc_hz=tuning.wc_hz)
            else:
                tau_s = tau
            cfg, _ = elements.build_cglp_loop(tuning, tau=tau_s)
            t_py = min(run_case(_stepper_py, cfg, freq, options)[0]
                       for _ in range(args.repeats))
            _, res_py = run_case(_stepper_py, cfg, freq, options)
            line = f"{label:42s} python {t_py * 1e3:8.1f} ms"
            if _stepper_cy is not None:
                t_cy = min(run_case(_stepper_cy, cfg, freq, options)[0]
                           for _ in range(args.repeats))
                _, res_cy = run_case(_stepper_cy, cfg, freq, options)
                dev = float(np.max(np.abs(res_cy.e - res_py.e)))
                line += (f"   cython {t_cy * 1e3:8.1f} ms"
                         f"   speedup {t_py / t_cy:5.1f}x"
                         f"   max|e| dev {dev:.2e}")
            print(line)
    finally:
        core._kernel = original


if __name__ == "__main__":
    main()
