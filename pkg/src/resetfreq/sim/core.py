"""Ground-truth hybrid simulation of the closed-loop reset system.

Between resets the closed loop plus its sinusoidal drives is one autonomous
linear system, so states are propagated by exact matrix exponentials; resets
are localized by bisection on that exact flow.  The only discretization left
is the event-time resolution, which is driven far below any tolerance used
by the analysis (1e-12 of a period by default).
"""

import cmath
import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .. import ltisys
from ..errors import ConfigError, SimulationError
from ..harmonics import HarmonicSpectrum
from .loop import SignalComponent, SignalSpec, assemble

from . import _stepper_py

try:  # compiled kernel, if the extension was built
    from . import _stepper as _kernel

    if not hasattr(_kernel, "march_period"):  # pragma: no cover
        _kernel = _stepper_py
except ImportError:  # pragma: no cover - depends on build environment
    _kernel = _stepper_py

STEPPER_BACKEND = _kernel.BACKEND


@dataclass(frozen=True)
class SimOptions:
    """Grid density, convergence and event-localization settings."""

    steps_per_period: int = 2000
    max_periods: int = 200
    ss_tol: float = 1e-8
    event_tol: float | None = None      # seconds; default 1e-12 * period
    max_events_per_period: int = 10000

    def __post_init__(self):
        if self.steps_per_period < 100:
            raise ConfigError("steps_per_period must be at least 100")
        if self.max_periods < 2:
            raise ConfigError("max_periods must be at least 2")

    def resolve_event_tol(self, period):
        tol = 1e-12 * period if self.event_tol is None else self.event_tol
        if tol >= period / 1e4:
            raise ConfigError("event_tol must be below period/1e4")
        return tol


@dataclass(frozen=True)
class ResetEvent:
    """One applied reset: time, pre/post reset-element states, direction.

    ``direction`` is the sign of q after the crossing (+1 ascending,
    -1 descending).  ``x_post == A_rho @ x_pre`` exactly by construction.
    """

    time: float
    x_pre: np.ndarray
    x_post: np.ndarray
    direction: int


@dataclass
class SimResult:
    """Simulated trajectories on the uniform grid plus the reset events."""

    t: np.ndarray
    e: np.ndarray
    y: np.ndarray
    u: np.ndarray
    q: np.ndarray
    z: np.ndarray
    x: np.ndarray                  # closed-loop system states, (N, n_sys)
    events: list
    omega: float                   # base angular frequency, rad/s
    period: float
    steps_per_period: int
    periods: int
    converged: bool
    options: SimOptions
    signal: SignalSpec
    aug_states: np.ndarray = None  # full augmented trajectory, (N, n_aug)
    loop: object = None            # the assembled autonomous realization

    def last_period_slice(self):
        n = self.steps_per_period
        return slice(self.t.size - (n + 1), self.t.size)


@dataclass
class SteadySlice:
    """One steady-state period, re-based to t in [0, period]."""

    t: np.ndarray
    e: np.ndarray
    y: np.ndarray
    u: np.ndarray
    q: np.ndarray
    z: np.ndarray
    x: np.ndarray
    events: list
    omega: float
    period: float


def _dyadic_levels(h, event_tol):
    levels = max(4, math.ceil(math.log2(h / event_tol)))
    return min(levels, 48)


def simulate(cfg, signal, options=None, with_resets=True,
             exact_periods=None, warm_start=True):
    """Run the hybrid closed loop until the error signal is periodic.

    The simulation advances whole base periods and stops once the
    period-to-period sup-norm change of e drops below ``ss_tol`` (relative),
    or ``max_periods`` is reached (then a warning is issued and the result
    is marked non-converged).  With ``exact_periods`` set, exactly that many
    periods are run with no convergence checking.
    """
    options = SimOptions() if options is None else options
    if isinstance(signal, SignalComponent):
        signal = SignalSpec([signal])
    loop = assemble(cfg, signal, with_resets=with_resets,
                    warm_start=warm_start)
    period = loop.period
    steps = options.steps_per_period
    h = period / steps
    event_tol = options.resolve_event_tol(period)
    levels = _dyadic_levels(h, event_tol)
    E_pows = np.empty((levels + 1, loop.n, loop.n))
    for j in range(levels + 1):
        E_pows[j] = ltisys.expm(loop.A, h / (1 << (levels - j)))
    E_h = E_pows[levels]
    q_row = loop.rows["q"]
    e_row = loop.rows["e"]

    x = loop.x0.copy()
    q0 = float(q_row @ x)
    sign = 0 if q0 == 0.0 else (1 if q0 > 0.0 else -1)
    t_last = -1e300
    fire = with_resets and not cfg.R.is_linear

    chunks = [x[np.newaxis, :].copy()]
    events = []
    prev_e = None
    converged = False
    periods = 0
    n_periods = options.max_periods if exact_periods is None else exact_periods
    for p in range(n_periods):
        X, ev_t, ev_pre, ev_post, ev_dir, n_ev, t_last, sign = \
            _kernel.march_period(
                x, E_h, E_pows, q_row, loop.reset_map, fire,
                cfg.tau, t_last, p * period, h, steps, sign,
                options.max_events_per_period)
        if n_ev >= options.max_events_per_period:
            raise SimulationError("Zeno guard: too many resets per period")
        sl = slice(loop.reset_start, loop.reset_stop)
        for i in range(n_ev):
            events.append(ResetEvent(float(ev_t[i]),
                                     ev_pre[i, sl].copy(),
                                     ev_post[i, sl].copy(),
                                     int(ev_dir[i])))
        chunks.append(X[1:])
        x = X[-1].copy()
        periods = p + 1
        if exact_periods is not None:
            continue
        e_per = X @ e_row
        if prev_e is not None:
            scale = max(float(np.max(np.abs(e_per))), 1e-300)
            if float(np.max(np.abs(e_per - prev_e))) <= options.ss_tol * scale:
                converged = True
                break
        prev_e = e_per
    if exact_periods is None and not converged:
        warnings.warn("simulation did not reach steady state within "
                      f"{options.max_periods} periods", stacklevel=2)

    states = np.vstack(chunks)
    t = np.arange(states.shape[0]) * h
    sig = {name: states @ row for name, row in loop.rows.items()}
    return SimResult(
        t=t, e=sig["e"], y=sig["y"], u=sig["u"], q=sig["q"], z=sig["z"],
        x=states[:, :loop.n_system], events=events,
        omega=loop.omega_base, period=period, steps_per_period=steps,
        periods=periods, converged=converged, options=options, signal=signal,
        aug_states=states, loop=loop)


def steady_state(res: SimResult, periods=1):
    """Final full period(s) of all signals, re-based to start at t = 0.

    The phase is preserved: the slice begins at an exact integer number of
    base periods, so t = 0 of the slice aligns with the drive phase at the
    simulation start.
    """
    if not res.converged:
        raise SimulationError("simulation did not converge; no steady state")
    if periods < 1 or periods >= res.periods:
        raise SimulationError(
            f"cannot slice {periods} period(s) from a {res.periods}-period "
            "simulation")
    n = res.steps_per_period * periods
    sl = slice(res.t.size - (n + 1), res.t.size)
    t0 = res.t[sl.start]
    events = [ResetEvent(ev.time - t0, ev.x_pre, ev.x_post, ev.direction)
              for ev in res.events if ev.time >= t0 - 1e-12 * res.period]
    return SteadySlice(
        t=res.t[sl] - t0, e=res.e[sl], y=res.y[sl], u=res.u[sl],
        q=res.q[sl], z=res.z[sl], x=res.x[sl], events=events,
        omega=res.omega, period=res.period)


def fourier_spectrum(values, omega, n_max):
    """Sine-phasor harmonics of one uniformly sampled period.

    ``values`` covers exactly one period including the repeated endpoint;
    returns ``X_n`` such that the signal is ``sum |X_n| sin(n w t + ang)``.
    """
    samples = np.asarray(values)[:-1]
    N = samples.size
    F = np.fft.rfft(samples)
    n_top = min(n_max, N // 2 - 1)
    entries = {n: 2j * F[n] / N for n in range(1, n_top + 1)}
    return HarmonicSpectrum(omega, entries)


def exact_fourier_spectrum(res: SimResult, n_max, signal_row="e"):
    """Spectrally exact harmonics of the final steady-state period.

    Integrates ``row . e^(A s) x0 e^(-j n w t)`` segment by segment between
    resets (the flow is exactly exponential there), so the coefficients
    carry no grid aliasing even when the signal jumps at resets.  The inner
    integral uses the augmented-block exponential, which stays well defined
    when ``A - j n w I`` is singular.
    """
    if not res.converged:
        raise SimulationError("simulation did not converge; no steady state")
    loop = res.loop
    A = loop.A
    row = loop.rows[signal_row]
    n_aug = A.shape[0]
    k0 = res.t.size - (res.steps_per_period + 1)
    t0 = res.t[k0]
    T = res.period
    w = res.omega
    bounds = [ev.time for ev in res.events
              if t0 + 1e-14 * T < ev.time <= t0 + T - 1e-14 * T]
    bounds = sorted(bounds) + [t0 + T]
    coeffs = np.zeros(n_max + 1, dtype=complex)
    x_cur = res.aug_states[k0].astype(complex)
    t_cur = t0
    eye = np.eye(n_aug)
    for b in bounds:
        dt = b - t_cur
        if dt > 0.0:
            for n in range(1, n_max + 1):
                M = A - 1j * n * w * eye
                block = np.zeros((2 * n_aug, 2 * n_aug), dtype=complex)
                block[:n_aug, :n_aug] = M
                block[:n_aug, n_aug:] = eye
                eb = scipy.linalg.expm(block * dt)
                integral = eb[:n_aug, n_aug:]
                coeffs[n] += (row @ integral @ x_cur) \
                    * cmath.exp(-1j * n * w * t_cur) / T
            x_cur = scipy.linalg.expm(A * dt) @ x_cur
        if b < t0 + T - 1e-14 * T:
            x_cur = loop.reset_map @ x_cur
        t_cur = b
    entries = {n: 2j * coeffs[n] for n in range(1, n_max + 1)}
    return HarmonicSpectrum(w, entries)


def cl_fr(cfg, w, n_max, amplitude=1.0, phase=0.0, options=None,
          extraction="fft"):
    """Closed-loop frequency response of e by simulation plus Fourier fit.

    This is the numerical ground truth the analytical predictors are scored
    against: harmonics 1..n_max of the steady-state error for a sinusoidal
    reference at ``w`` rad/s.  ``extraction`` picks the grid FFT (fast, has
    an aliasing floor when e jumps at resets) or the segment-exact integral.
    """
    res = simulate(cfg, SignalSpec.sine(amplitude, w / (2 * math.pi), phase),
                   options)
    if extraction == "exact":
        return exact_fourier_spectrum(res, n_max)
    ss = steady_state(res)
    return fourier_spectrum(ss.e, ss.omega, n_max)


def bls_error_response(cfg, signal, options=None):
    """Error of the base-linear loop on the same exact grid as simulate."""
    return simulate(cfg, signal, options, with_resets=False)


def reconstruct_error(cfg, events, signal, t_grid, options=None):
    """Rebuild e(t) as BLS response plus per-reset impulse responses.

    ``events`` must come from a simulation of the same loop and input; the
    reconstruction propagates the impulse chain -S_L G R_delta exactly, so
    agreement with the simulated error is limited only by round-off and
    event-time resolution.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    h = t_grid[1] - t_grid[0]
    if not np.allclose(np.diff(t_grid), h, rtol=0, atol=1e-9 * h):
        raise ValueError("reconstruction requires a uniform time grid")
    if options is None:
        options = SimOptions()
    # exact BLS error on an identical grid, run for the full span
    span_periods = int(round((t_grid.size - 1)
                             / options.steps_per_period + 0.5))
    bls = simulate(cfg, signal, options, with_resets=False,
                   exact_periods=max(span_periods, 1))
    if bls.t.size < t_grid.size or abs(bls.t[1] - h) > 1e-9 * h:
        raise ValueError("grid does not match the simulation layout")
    e_bls = bls.e[:t_grid.size]

    S_L, _ = cfg.sensitivities()
    r_delta = ltisys.StateSpace(
        cfg.R.base.A, cfg.R.reset_matrix - np.eye(cfg.R.n_states),
        cfg.R.base.C, np.zeros((1, cfg.R.n_states)))
    F = ltisys.chain(r_delta, cfg.G, S_L)
    nF = F.n_states
    E_h = ltisys.expm(F.A, h)
    s = np.zeros(nF)
    contrib = np.zeros(t_grid.size)
    ev = sorted(events, key=lambda e: e.time)
    idx = 0
    t_cur = t_grid[0]
    for k in range(t_grid.size - 1):
        t_next = t_grid[k + 1]
        while idx < len(ev) and ev[idx].time <= t_next:
            te = ev[idx].time
            if te > t_cur:
                s = ltisys.expm(F.A, te - t_cur) @ s
                t_cur = te
            s = s + (F.B @ ev[idx].x_pre.reshape(-1, 1)).ravel()
            idx += 1
        if t_next > t_cur:
            if abs((t_next - t_cur) - h) <= 1e-12 * h:
                s = E_h @ s
            else:
                s = ltisys.expm(F.A, t_next - t_cur) @ s
            t_cur = t_next
        contrib[k + 1] = (F.C @ s).item()
    return e_bls - contrib


@dataclass(frozen=True)
class ClassifiedEvent:
    time: float
    label: str                     # 'modelled' | 'consecutive' | 'additional'
    direction: int


@dataclass
class ConsecutiveResetReport:
    events: list
    resets_per_period: int
    consecutive_pairs: int
    additional_count: int
    effective_reset_matrix: np.ndarray | None
    effective_matches_single: bool | None


def consecutive_reset_report(res: SimResult, w=None, fraction=0.1):
    """Classify steady-state resets against the two-per-period model.

    The first reset in each half period is the modelled one; later resets
    within ``fraction * pi/w`` of the previous reset are 'consecutive',
    the rest 'additional'.  When consecutive pairs exist the report carries
    the effective reset matrix of a merged pair, A_rho^2, and whether it
    coincides with a single reset.
    """
    ss = steady_state(res)
    w = ss.omega if w is None else w
    half = math.pi / w
    classified = []
    consecutive = 0
    additional = 0
    prev_time = None
    prev_half = None
    for ev in sorted(ss.events, key=lambda e: e.time):
        half_idx = int(ev.time // half)
        if prev_half is None or half_idx != prev_half:
            label = "modelled"
        elif prev_time is not None and (ev.time - prev_time) < fraction * half:
            label = "consecutive"
            consecutive += 1
        else:
            label = "additional"
            additional += 1
        classified.append(ClassifiedEvent(ev.time, label, ev.direction))
        prev_time, prev_half = ev.time, half_idx
    rho = res_reset_matrix = None
    matches = None
    if consecutive:
        rho = _reset_matrix_from_events(res)
        res_reset_matrix = rho @ rho
        matches = bool(np.allclose(res_reset_matrix, rho))
    return ConsecutiveResetReport(
        events=classified,
        resets_per_period=len(classified),
        consecutive_pairs=consecutive,
        additional_count=additional,
        effective_reset_matrix=res_reset_matrix,
        effective_matches_single=matches)


def _reset_matrix_from_events(res):
    # any event determines the diagonal map except on zero states; fall back
    # to exact ratios where defined
    for ev in res.events:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(ev.x_pre != 0.0, ev.x_post / ev.x_pre, 1.0)
        if np.all(np.isfinite(ratio)):
            return np.diag(ratio)
    return np.eye(res.events[0].x_pre.size) if res.events else None


def write_signals_csv(res: SimResult, path):
    """Export t, e, y, u, q to CSV (one row per grid point)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "e", "y", "u", "q"])
        for k in range(res.t.size):
            writer.writerow([f"{res.t[k]:.12g}", f"{res.e[k]:.12g}",
                             f"{res.y[k]:.12g}", f"{res.u[k]:.12g}",
                             f"{res.q[k]:.12g}"])


def write_events_csv(res: SimResult, path):
    """Export reset events: time, pre-states, post-states, direction."""
    n = res.events[0].x_pre.size if res.events else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = (["t_r"] + [f"x_pre_{i}" for i in range(n)]
                  + [f"x_post_{i}" for i in range(n)] + ["direction"])
        writer.writerow(header)
        for ev in res.events:
            row = ([f"{ev.time:.15g}"]
                   + [f"{v:.12g}" for v in ev.x_pre]
                   + [f"{v:.12g}" for v in ev.x_post]
                   + [str(ev.direction)])
            writer.writerow(row)
