"""Analytical closed-loop prediction of reset control behaviour.

Centerpiece: the reset loop behaves as its base-linear system plus a train
of state-dependent impulse responses.  In periodic steady state that train
is fixed by the reset instant and the pre-reset states, which are solved for
analytically from four ingredients:

* the alternating exponential tails of the interconnections ``Q_delta =
  K S_L G R_delta`` (effect of past resets on the trigger signal q) and
  ``H = R_delta^X - R_L^X K S_L G R_delta`` (their effect on the element's
  own states),
* the reset-instant equation ``w t + angle(K S_L R_I) + Phi = pi`` whose
  correction angle Phi captures how those tails shift the zero crossing,
* a linear solve for the pre-reset states,
* the impulse-response harmonic gains with the virtual input matrix built
  from those states.

The same harmonic machinery evaluated on *measured* reset times and states
(from a simulation) is exact up to harmonic truncation; with the analytic
reset instant and states it is the delta-CL approximation.  The older
describing-function competitors (DF and the closed-loop DF composition) are
provided for comparison.
"""

import cmath
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import harmonics, ltisys
from .errors import AssumptionError, ConvergenceError, SingularityError
from .harmonics import HarmonicSpectrum, alternating_tail
from .ltisys import StateSpace, freq_response_scalar


@dataclass(frozen=True)
class InterconnectionSet:
    """State-space blocks entering the analytical solution.

    ``r_delta`` maps impulse weights to the element output, ``r_l_x`` /
    ``r_delta_x`` map input / impulse weights to the element states; they
    are combined with the loop into ``q_delta`` (weights -> trigger q) and
    ``h`` (weights -> element states through both paths).
    """

    r_delta: StateSpace
    r_l_x: StateSpace
    r_delta_x: StateSpace
    q_delta: StateSpace
    h: StateSpace
    s_l: StateSpace
    t_l: StateSpace
    g: StateSpace


def build_interconnections(cfg):
    """Assemble the delta-CL interconnections and check their decay.

    Raises ConvergenceError when ``q_delta`` or ``h`` has a non-decaying
    controllable-and-observable mode: the impulse-train series would then
    diverge.
    """
    R = cfg.R
    A_R, B_R, C_R = R.base.A, R.base.B, R.base.C
    n = R.n_states
    eye = np.eye(n)
    jump = R.reset_matrix - eye
    r_delta = StateSpace(A_R, jump, C_R, np.zeros((1, n)))
    r_l_x = StateSpace(A_R, B_R, eye, np.zeros((n, 1)))
    r_delta_x = StateSpace(A_R, jump, eye, np.zeros((n, n)))
    S_L, T_L = cfg.sensitivities()
    G = cfg.G
    q_delta = ltisys.chain(r_delta, G, S_L, cfg.K)
    h = ltisys.parallel(r_delta_x,
                        ltisys.chain(r_delta, G, S_L, cfg.K, r_l_x),
                        sign=-1.0)
    for name, sys in (("Q_delta", q_delta), ("H", h)):
        bad = ltisys.effective_unstable_poles(sys)
        if bad:
            raise ConvergenceError(
                f"{name} is not asymptotically stable (poles {bad}); "
                "the impulse-response series does not converge")
    return InterconnectionSet(r_delta, r_l_x, r_delta_x, q_delta, h,
                              S_L, T_L, G)


@dataclass(frozen=True)
class Drive:
    """The sinusoidal input seen by the delta-CL machinery.

    ``psi`` is the sine-phasor of the BLS trigger signal q, ``e_base`` the
    sine-phasor of the BLS error response to this input.
    """

    psi: complex
    e_base: complex


def reference_drive(ic, cfg, w, r_i=1.0 + 0.0j):
    """Drive phasors for a reference sinusoid with phasor ``r_i``."""
    k = freq_response_scalar(cfg.K, w)
    sl = freq_response_scalar(ic.s_l, w)
    return Drive(psi=k * sl * r_i, e_base=sl * r_i)


def disturbance_drive(ic, cfg, w, d=1.0 + 0.0j):
    """Drive phasors for a plant-input disturbance with phasor ``d``."""
    k = freq_response_scalar(cfg.K, w)
    sl = freq_response_scalar(ic.s_l, w)
    p = freq_response_scalar(cfg.P, w)
    return Drive(psi=-k * sl * p * d, e_base=-sl * p * d)


def _tail_rows(ic, w):
    Q, H = ic.q_delta, ic.h
    s_q = Q.C @ alternating_tail(Q.A, w) @ Q.B
    s_h = H.C @ alternating_tail(H.A, w) @ H.B
    return s_q, s_h


def phi(ic, cfg, w, x, r_i=1.0 + 0.0j, drive=None):
    """Reset-instant phase correction caused by prior resets' tails.

    ``Phi = arcsin(S_Q x / |psi|)`` where S_Q is the alternating tail of
    q_delta and psi the BLS trigger phasor.  An argument beyond +-1 violates
    the reset-instant existence assumption and raises AssumptionError.
    """
    drive = reference_drive(ic, cfg, w, r_i) if drive is None else drive
    s_q, _ = _tail_rows(ic, w)
    return _phi_from_tail(s_q, np.asarray(x, dtype=float).ravel(),
                          abs(drive.psi))


def _phi_from_tail(s_q, x, a_mag):
    if a_mag == 0.0:
        raise SingularityError("trigger amplitude |K S_L R_I| vanishes")
    arg = (s_q @ x).item() / a_mag
    if abs(arg) > 1.0:
        raise AssumptionError(
            f"no reset instant exists: |arcsine argument| = {abs(arg):.4g} > 1",
            assumption="existence-of-reset-instant")
    return math.asin(arg)


def reset_state(ic, cfg, w, r_i=1.0 + 0.0j, drive=None):
    """Pre-reset states at the descending crossing, solved analytically.

    Solves ``[I + Lam^-1 A_R B_R S_Q - S_H] x = Lam^-1 w B_R |psi|`` where
    S_Q and S_H are the alternating tails of q_delta and h.
    """
    drive = reference_drive(ic, cfg, w, r_i) if drive is None else drive
    x, _ = _reset_state_normalized(ic, cfg, w)
    return x * abs(drive.psi)


def _reset_state_normalized(ic, cfg, w):
    """State solution per unit trigger amplitude, plus the S_Q tail row."""
    R = cfg.R
    A_R, B_R = R.base.A, R.base.B
    n = R.n_states
    eye = np.eye(n)
    s_q, s_h = _tail_rows(ic, w)
    lam_inv = ltisys.inv_checked(w * w * eye + A_R @ A_R,
                                 what=f"Lambda at w={w:g} rad/s")
    bracket = eye + lam_inv @ A_R @ B_R @ s_q - s_h
    rhs = (lam_inv * w) @ B_R
    x_hat = ltisys.solve_checked(
        bracket, rhs, what=f"reset-state operator at w={w:g} rad/s").ravel()
    return x_hat, s_q


def reset_instant(cfg, w, phi_value, drive_angle=None, ic=None,
                  r_i=1.0 + 0.0j):
    """Descending-crossing reset instant, wrapped into [0, 2 pi / w).

    ``w t + angle(psi) + Phi = pi`` with psi the BLS trigger phasor (its
    angle may be passed directly as ``drive_angle``).
    """
    if drive_angle is None:
        ic = build_interconnections(cfg) if ic is None else ic
        drive_angle = cmath.phase(reference_drive(ic, cfg, w, r_i).psi)
    period = 2.0 * math.pi / w
    t = (math.pi - drive_angle - phi_value) / w
    return t % period


@dataclass(frozen=True)
class AssumptionReport:
    """Validity indicators for the analytical solution at one frequency."""

    ass3_ok: bool                  # arcsine argument within [-1, 1]
    arcsine_argument: float
    phi: float
    phi_small: bool                # |Phi| below the advisory threshold
    direction_ok: bool             # descending crossing confirmed
    resets_per_period: int | None = None
    two_resets_ok: bool | None = None
    sim_direction_agreement: float | None = None

    PHI_THRESHOLD = math.pi / 9.0


@dataclass
class DeltaClResult:
    """Analytical closed-loop solution at one frequency."""

    omega: float
    t_rho_down: float
    phi: float
    x: np.ndarray
    E: HarmonicSpectrum
    S: HarmonicSpectrum
    T: HarmonicSpectrum
    CS: HarmonicSpectrum
    assumption_report: AssumptionReport
    cs_undefined_orders: tuple = ()


def delta_cl(cfg, w, n_max=1000, r_i=1.0 + 0.0j, ic=None, drive=None,
             phi_threshold=AssumptionReport.PHI_THRESHOLD):
    """Analytical error/sensitivity spectra of the closed reset loop.

    Models exactly two resets per period; their instant and pre-reset states
    come from the impulse-train tail equations, after which every harmonic
    of the error follows from the impulse-response harmonic gains:

        E_n = S_L R_I [n=1]  -  S_L(nw) G(nw) R*_n(w, zeta x) e^(j n (a+Phi))

    with ``a`` the BLS trigger angle.  Even harmonics are exactly zero.
    """
    if w <= 0.0:
        raise ValueError("w must be positive")
    ic = build_interconnections(cfg) if ic is None else ic
    drive = reference_drive(ic, cfg, w, r_i) if drive is None else drive
    R = cfg.R
    a_mag = abs(drive.psi)
    angle0 = cmath.phase(drive.psi)

    x_hat, s_q = _reset_state_normalized(ic, cfg, w)
    x = x_hat * a_mag
    arg = (s_q @ x_hat).item() if a_mag > 0.0 else 0.0
    ass3_ok = abs(arg) <= 1.0
    phi_value = math.asin(max(-1.0, min(1.0, arg)))
    t_rho = reset_instant(cfg, w, phi_value, drive_angle=angle0)

    theta = harmonics.theta_d(R, w).theta_d
    b_star = harmonics.zeta(R, w) @ x.reshape(-1, 1)
    e_entries = {}
    for n in range(1, n_max + 1):
        if n % 2 == 0:
            e_entries[n] = 0.0 + 0.0j
            continue
        rstar = harmonics.impulse_hosidf(R, w, n, b_star, _theta=theta)
        sl_n = freq_response_scalar(ic.s_l, n * w)
        g_n = freq_response_scalar(ic.g, n * w)
        val = -sl_n * g_n * rstar * cmath.exp(1j * n * (angle0 + phi_value))
        if n == 1:
            val += drive.e_base
        e_entries[n] = val

    r_mag = abs(r_i)
    r_ang = cmath.phase(r_i)
    s_entries = {}
    t_entries = {}
    cs_entries = {}
    undefined = []
    p_ref = abs(freq_response_scalar(cfg.P, w))
    for n, e_n in e_entries.items():
        scale = r_mag * cmath.exp(1j * n * r_ang)
        s_n = e_n / scale
        t_n = (1.0 if n == 1 else 0.0) - s_n
        s_entries[n] = s_n
        t_entries[n] = t_n
        p_n = freq_response_scalar(cfg.P, n * w)
        if abs(p_n) < 1e-12 * max(p_ref, 1e-300):
            cs_entries[n] = complex(np.nan, np.nan)
            undefined.append(n)
        else:
            cs_entries[n] = t_n / p_n

    report = AssumptionReport(
        ass3_ok=ass3_ok,
        arcsine_argument=arg,
        phi=phi_value,
        phi_small=abs(phi_value) < phi_threshold,
        direction_ok=abs(phi_value) < math.pi / 2.0,
    )
    return DeltaClResult(
        omega=w, t_rho_down=t_rho, phi=phi_value, x=x,
        E=HarmonicSpectrum(w, e_entries),
        S=HarmonicSpectrum(w, s_entries),
        T=HarmonicSpectrum(w, t_entries),
        CS=HarmonicSpectrum(w, cs_entries),
        assumption_report=report,
        cs_undefined_orders=tuple(undefined))


def fold_events(events, w, time_tol=1e-6):
    """Fold steady-state resets onto half-period representatives.

    Events half a period apart carry opposite states (odd-harmonic
    symmetry); each unique representative is returned once as
    ``(time in [0, pi/w), state)``.
    """
    half = math.pi / w
    reps = []
    for ev in sorted(events, key=lambda e: e.time):
        k = int(math.floor(ev.time / half))
        t0 = ev.time - k * half
        x0 = ev.x_pre * ((-1.0) ** (k % 2))
        for i, (t_r, x_r, count) in enumerate(reps):
            if abs(t_r - t0) < time_tol * half:
                reps[i] = (t_r, 0.5 * (x_r + x0), count + 1)
                break
        else:
            reps.append((t0, x0, 1))
    return [(t, x) for t, x, _ in reps]


def exact_impulse_hosidf(cfg, events, w, n_max=1000, r_i=1.0 + 0.0j,
                         ic=None):
    """Error spectrum from measured reset times and states (no assumptions).

    Each folded reset contributes its impulse-response harmonics with the
    phase that anchors the comb at the measured instant; the result is exact
    up to harmonic truncation for any converged simulation.
    """
    ic = build_interconnections(cfg) if ic is None else ic
    R = cfg.R
    theta = harmonics.theta_d(R, w).theta_d
    zeta = harmonics.zeta(R, w)
    reps = fold_events(events, w)
    sl_1 = freq_response_scalar(ic.s_l, w)
    entries = {}
    for n in range(1, n_max + 1):
        if n % 2 == 0:
            entries[n] = 0.0 + 0.0j
            continue
        acc = 0.0 + 0.0j
        for t_r, x_r in reps:
            b_star = zeta @ x_r.reshape(-1, 1)
            rstar = harmonics.impulse_hosidf(R, w, n, b_star, _theta=theta)
            acc += rstar * cmath.exp(1j * n * (math.pi - w * t_r))
        sl_n = freq_response_scalar(ic.s_l, n * w)
        g_n = freq_response_scalar(ic.g, n * w)
        val = -sl_n * g_n * acc
        if n == 1:
            val += sl_1 * r_i
        entries[n] = val
    return HarmonicSpectrum(w, entries)


def cl_df(cfg, w, n_max=1000):
    """Closed-loop describing-function sensitivity spectrum (competitor).

    First harmonic closes the loop on the DF alone; higher harmonics are
    driven by the first through the base-linear sensitivity at ``n w``.
    """
    R = cfg.R
    theta = harmonics.theta_d(R, w).theta_d
    k_1 = freq_response_scalar(cfg.K, w)
    g = cfg.G
    bls = ltisys.chain(cfg.K, R.base, g)
    l_1 = freq_response_scalar(g, w) * harmonics.hosidf(R, w, 1, _theta=theta) * k_1
    den = 1.0 + l_1
    if abs(den) < 1e-12:
        raise SingularityError(f"1 + L_1 vanishes at w={w:g} rad/s")
    sl_1 = 1.0 / den
    entries = {1: sl_1}
    for n in range(2, n_max + 1):
        if n % 2 == 0:
            entries[n] = 0.0 + 0.0j
            continue
        l_n = (freq_response_scalar(g, n * w)
               * harmonics.hosidf(R, w, n, _theta=theta) * k_1)
        sl_bls_n = 1.0 / (1.0 + freq_response_scalar(bls, n * w))
        sl_1n = abs(sl_1) * cmath.exp(1j * n * cmath.phase(sl_1))
        entries[n] = -sl_bls_n * l_n * sl_1n
    return HarmonicSpectrum(w, entries)


def error_spectrum_from_sensitivity(spec, r_i=1.0 + 0.0j):
    """Scale a sensitivity spectrum into an error spectrum.

    The reference phase enters each harmonic multiplied by its order.
    """
    r_mag = abs(r_i)
    r_ang = cmath.phase(r_i)
    entries = {n: s * r_mag * cmath.exp(1j * n * r_ang)
               for n, s in spec.entries.items()}
    return HarmonicSpectrum(spec.omega, entries)


def df_error_spectrum(cfg, w, r_i=1.0 + 0.0j):
    """Single-harmonic DF prediction of the error."""
    s_df = harmonics.df_sensitivity(cfg, w)
    return HarmonicSpectrum(w, {1: s_df * r_i})


def predicted_error_spectrum(cfg, w, n_max, method, r_i=1.0 + 0.0j):
    """Error spectrum for one prediction method: df, cl-df or delta-cl."""
    method = method.lower()
    if method == "df":
        return df_error_spectrum(cfg, w, r_i)
    if method in ("cl-df", "cldf"):
        return error_spectrum_from_sensitivity(cl_df(cfg, w, n_max), r_i)
    if method in ("delta-cl", "deltacl", "dcl"):
        return delta_cl(cfg, w, n_max, r_i).E
    raise ValueError(f"unknown prediction method {method!r}")


def time_reconstruct(spec: HarmonicSpectrum, w=None, t=None):
    """Time signal ``sum_n |X_n| sin(n w t + angle(X_n))`` on grid ``t``."""
    w = spec.omega if w is None else w
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for n, val in spec.entries.items():
        mag = abs(val)
        if mag == 0.0 or not np.isfinite(mag):
            continue
        out = out + mag * np.sin(n * w * t + cmath.phase(val))
    return out


def predict_multisine(cfg, signal, t, dominant=None, n_max=1000):
    """Superposition prediction for multi-sine references and disturbances.

    The component with the largest BLS trigger magnitude keeps the full
    nonlinear treatment; every other component adds its base-linear error
    response.  Returns (e_pred, dominant_index, DeltaClResult).
    """
    ic = build_interconnections(cfg)
    comps = signal.components
    drives = []
    for c in comps:
        if c.injection == "reference":
            drives.append(reference_drive(ic, cfg, c.omega, c.phasor))
        else:
            drives.append(disturbance_drive(ic, cfg, c.omega, c.phasor))
    mags = [abs(d.psi) for d in drives]
    if dominant is None:
        dominant = int(np.argmax(mags))
    others = [i for i in range(len(comps)) if i != dominant]
    if others and max(mags[i] for i in others) >= mags[dominant]:
        warnings.warn("no dominant component: superposition prediction is "
                      "unreliable", stacklevel=2)
    dom = comps[dominant]
    result = delta_cl(cfg, dom.omega, n_max,
                      r_i=dom.phasor, ic=ic, drive=drives[dominant])
    t = np.asarray(t, dtype=float)
    e_pred = time_reconstruct(result.E, dom.omega, t)
    for i in others:
        ph = drives[i].e_base
        e_pred = e_pred + abs(ph) * np.sin(comps[i].omega * t
                                           + cmath.phase(ph))
    return e_pred, dominant, result


def assumption_check(cfg, w, result: DeltaClResult, sim=None,
                     phi_threshold=AssumptionReport.PHI_THRESHOLD):
    """Assemble the validity report, optionally against a simulation.

    With a simulation supplied, counts steady resets per period against the
    two modelled ones and compares each event's crossing direction with the
    BLS prediction at that instant.
    """
    report = result.assumption_report
    resets = None
    two_ok = None
    agreement = None
    if sim is not None:
        from .sim import steady_state

        ss = steady_state(sim)
        resets = len(ss.events)
        two_ok = resets == 2
        if ss.events:
            ic = build_interconnections(cfg)
            psi = reference_drive(ic, cfg, w).psi
            angle0 = cmath.phase(psi)
            good = 0
            for ev in ss.events:
                bls_dir = 1 if math.cos(w * ev.time + angle0) > 0 else -1
                good += int(bls_dir == ev.direction)
            agreement = good / len(ss.events)
    return replace(report,
                   phi_small=abs(report.phi) < phi_threshold,
                   resets_per_period=resets,
                   two_resets_ok=two_ok,
                   sim_direction_agreement=agreement)
