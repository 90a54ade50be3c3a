import math

import numpy as np
import pytest

from resetfreq import elements, ltisys
from resetfreq.sim import SignalSpec, SimOptions, simulate


def fore_example_config(gamma=0.0, tau=0.0):
    """Closed-loop FORE benchmark: K = 100, G = 1, corner at 25 rad/s."""
    R = elements.make_gfore(None, gamma, wr_rad=25.0)
    return elements.LoopConfig(K=ltisys.gain(100.0), R=R,
                               C=ltisys.gain(1.0), P=ltisys.gain(1.0),
                               tau=tau)


def open_loop_config(R):
    """Wiring that feeds the reference straight into the reset element.

    With C = 0 the loop is open: q equals the reference, so the element
    sees a pure sinusoid and its output can be sampled from z.
    """
    return elements.LoopConfig(K=ltisys.gain(1.0), R=R,
                               C=ltisys.gain(0.0), P=ltisys.gain(1.0))


@pytest.fixture(scope="session")
def fore_sim():
    cfg = fore_example_config()
    res = simulate(cfg, SignalSpec.sine(1.0, 1.0),
                   SimOptions(max_periods=60))
    return cfg, res


@pytest.fixture(scope="session")
def rs0_20hz_full():
    """Rs0 at 20 Hz under full time regularization, plus its simulation."""
    fr = 20.0
    w = 2.0 * math.pi * fr
    cfg, _ = elements.build_cglp_loop(elements.TEST_TUNINGS["Rs0"],
                                      tau=elements.resolve_tau("full", w=w))
    res = simulate(cfg, SignalSpec.sine(1.0, fr), SimOptions(max_periods=300))
    return cfg, res


@pytest.fixture(scope="session")
def rs1_20hz_free():
    """Rs1 at 20 Hz with no time regularization (consecutive resets)."""
    fr = 20.0
    cfg, _ = elements.build_cglp_loop(elements.TEST_TUNINGS["Rs1"], tau=0.0)
    res = simulate(cfg, SignalSpec.sine(1.0, fr), SimOptions(max_periods=300))
    return cfg, res


def relerr(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
