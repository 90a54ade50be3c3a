from .core import (
    ResetEvent,
    SimOptions,
    SimResult,
    SteadySlice,
    STEPPER_BACKEND,
    cl_fr,
    consecutive_reset_report,
    exact_fourier_spectrum,
    fourier_spectrum,
    reconstruct_error,
    simulate,
    steady_state,
    write_events_csv,
    write_signals_csv,
)
from .loop import SignalComponent, SignalSpec, assemble, common_base_frequency

__all__ = [
    "ResetEvent", "SimOptions", "SimResult", "SteadySlice",
    "STEPPER_BACKEND", "cl_fr", "consecutive_reset_report",
    "exact_fourier_spectrum", "fourier_spectrum", "reconstruct_error", "simulate", "steady_state",
    "write_events_csv", "write_signals_csv", "SignalComponent", "SignalSpec",
    "assemble", "common_base_frequency",
]
