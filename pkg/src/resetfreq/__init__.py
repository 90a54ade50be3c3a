"""Frequency-domain modelling and simulation of SISO reset control systems.

Submodules
----------
ltisys      dense state-space algebra and frequency responses
elements    reset elements (GCI, GFORE, CgLp), PID, loop wiring, tuning
harmonics   open-loop harmonic gains and the impulse-based reformulation
sim         exact hybrid simulation, steady-state and Fourier extraction
closedloop  analytical closed-loop prediction and its competitors
metrics     ISE / peak-error scoring, frequency sweeps, report tables
cli         command-line interface
"""

from . import closedloop, elements, harmonics, ltisys, metrics, sim
from .closedloop import (
    DeltaClResult,
    build_interconnections,
    cl_df,
    delta_cl,
    exact_impulse_hosidf,
    predict_multisine,
    time_reconstruct,
)
from .elements import (
    ALL_TUNINGS,
    CGLP_TUNINGS,
    TEST_TUNINGS,
    CgLpTuning,
    LoopConfig,
    ResetController,
    build_cglp_loop,
    make_cglp,
    make_gci,
    make_gfore,
    make_pid,
    ol_stable,
    phase_margin_bls,
    resolve_tau,
    stage_plant,
    tune_gain,
)
from .harmonics import HarmonicSpectrum, hosidf, hosidf_spectrum, theta_d
from .ltisys import ComplexResponse, StateSpace

__version__ = "0.1.0"
