"""Closed-loop assembly for the hybrid simulator.

The loop states are stacked as [x_K; x_R; x_C; x_P] and the exogenous
sinusoids are embedded as undamped two-state oscillators, so that between
resets the whole augmented system flows by a single matrix exponential with
no integration error.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SignalComponent:
    """One sinusoid: amplitude * sin(2 pi f t + phase) at an injection point."""

    amplitude: float
    freq_hz: float
    phase: float = 0.0
    injection: str = "reference"

    def __post_init__(self):
        if self.freq_hz <= 0.0:
            raise ConfigError("component frequencies must be positive")
        if self.injection not in ("reference", "plant_input"):
            raise ConfigError(f"unknown injection point {self.injection!r}")

    @property
    def omega(self):
        return TWO_PI * self.freq_hz

    @property
    def phasor(self):
        """Sine-phasor amplitude * e^(j phase)."""
        return self.amplitude * np.exp(1j * self.phase)


@dataclass(frozen=True)
class SignalSpec:
    components: tuple

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise ConfigError("at least one signal component is required")
        object.__setattr__(self, "components", components)

    @classmethod
    def sine(cls, amplitude, freq_hz, phase=0.0):
        return cls([SignalComponent(amplitude, freq_hz, phase)])

    def references(self):
        return [c for c in self.components if c.injection == "reference"]

    def disturbances(self):
        return [c for c in self.components if c.injection == "plant_input"]


def common_base_frequency(freqs_hz, rel_tol=1e-9):
    """Largest frequency dividing every component (floating-point gcd)."""
    freqs = [float(f) for f in freqs_hz]
    tol = rel_tol * max(freqs)
    base = freqs[0]
    for f in freqs[1:]:
        a, b = base, f
        for _ in range(128):
            if abs(b) <= tol:
                break
            a, b = b, math.fmod(a, b)
        base = abs(a)
    # snap so the first component is an exact integer multiple
    base = freqs[0] / round(freqs[0] / base)
    for f in freqs:
        ratio = f / base
        if abs(ratio - round(ratio)) > 1e-6:
            raise ConfigError("signal frequencies are not commensurate")
    return base


@dataclass
class AssembledLoop:
    """Augmented autonomous system: d/dt x_aug = A x_aug between resets."""

    A: np.ndarray
    x0: np.ndarray
    rows: dict                    # signal name -> row over x_aug
    reset_start: int
    reset_stop: int
    reset_map: np.ndarray         # full-size jump map at a reset
    n_system: int
    base_freq_hz: float

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def period(self):
        return 1.0 / self.base_freq_hz

    @property
    def omega_base(self):
        return TWO_PI * self.base_freq_hz


def assemble(cfg, signal: SignalSpec, with_resets=True, warm_start=True):
    """Build the augmented autonomous realization of the closed loop.

    With ``warm_start`` the system states are initialized at the base-linear
    periodic steady state (exact phasor solve; the flow matrix is shared by
    the reset and base-linear loops).  Starting on the periodic orbit
    removes most of the transient and keeps time-regularized runs out of
    the spurious asymmetric capture that a cold start can fall into.  A
    non-invertible resolvent (unstable BLS drive) falls back to zeros.
    """
    K, R, C, P = cfg.K, cfg.R.base, cfg.C, cfg.P
    if float(R.D[0, 0]) != 0.0:
        raise ConfigError("reset element must have zero feedthrough")
    nK, nR, nC, nP = K.n_states, R.n_states, C.n_states, P.n_states
    n = nK + nR + nC + nP
    oK, oR, oC, oP = 0, nK, nK + nR, nK + nR + nC

    def row(block_rows, c_r=0.0, c_d=0.0):
        r = np.zeros(n + 2)
        for ofs, vec in block_rows:
            vec = np.asarray(vec, dtype=float).ravel()
            r[ofs:ofs + vec.size] = vec
        r[n] = c_r
        r[n + 1] = c_d
        return r

    dK = float(K.D[0, 0])
    dC = float(C.D[0, 0])
    dP = float(P.D[0, 0])

    z_row = row([(oR, R.C)])
    u_row = row([(oR, dC * R.C), (oC, C.C)], c_d=1.0)
    y_row = row([(oR, dP * dC * R.C), (oC, dP * C.C), (oP, P.C)], c_d=dP)
    e_row = -y_row
    e_row[n] += 1.0
    q_row = row([(oK, K.C)]) + dK * e_row

    # system dynamics: rows of d/dt [x_K; x_R; x_C; x_P] over [x | r | d]
    dyn = np.zeros((n, n + 2))
    for ofs, blk, drive in ((oK, K, e_row), (oR, R, q_row),
                            (oC, C, z_row), (oP, P, u_row)):
        nb = blk.n_states
        if nb == 0:
            continue
        dyn[ofs:ofs + nb, ofs:ofs + nb] += blk.A
        dyn[ofs:ofs + nb, :] += blk.B @ drive[np.newaxis, :]

    comps = signal.components
    base = common_base_frequency([c.freq_hz for c in comps])
    n_aug = n + 2 * len(comps)
    A = np.zeros((n_aug, n_aug))
    x0 = np.zeros(n_aug)

    def lift(r):
        out = np.zeros(n_aug)
        out[:n] = r[:n]
        for k, comp in enumerate(comps):
            sel = n + 2 * k
            coef = r[n] if comp.injection == "reference" else r[n + 1]
            out[sel] = coef
        return out

    A[:n, :n] = dyn[:, :n]
    for k, comp in enumerate(comps):
        sel = n + 2 * k
        w = comp.omega
        A[sel, sel + 1] = w
        A[sel + 1, sel] = -w
        col = n if comp.injection == "reference" else n + 1
        A[:n, sel] = dyn[:, col]
        x0[sel] = comp.amplitude * math.sin(comp.phase)
        x0[sel + 1] = comp.amplitude * math.cos(comp.phase)

    rows = {name: lift(r) for name, r in
            (("q", q_row), ("e", e_row), ("y", y_row),
             ("u", u_row), ("z", z_row))}

    if warm_start and n > 0:
        A_sys = dyn[:, :n]
        x_sys = np.zeros(n)
        try:
            for comp in comps:
                col = n if comp.injection == "reference" else n + 1
                phasor = np.linalg.solve(
                    1j * comp.omega * np.eye(n) - A_sys, dyn[:, col])
                x_sys = x_sys + np.imag(phasor * comp.phasor)
            if np.all(np.isfinite(x_sys)):
                x0[:n] = x_sys
        except np.linalg.LinAlgError:
            pass

    reset_map = np.eye(n_aug)
    if with_resets:
        reset_map[oR:oR + nR, oR:oR + nR] = cfg.R.reset_matrix
    return AssembledLoop(A=A, x0=x0, rows=rows,
                         reset_start=oR, reset_stop=oR + nR,
                         reset_map=reset_map, n_system=n,
                         base_freq_hz=base)
