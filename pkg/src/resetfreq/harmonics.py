"""Open-loop describing functions and their impulse-based reformulation.

For a sinusoidal input a stable zero-crossing reset element produces a
periodic output containing odd harmonics only.  This module computes those
harmonic gains (DF for n = 1, higher orders beyond), the variant that keeps
only the reset-induced impulsive part with a designable input matrix, the
open-loop reset states at the descending zero crossing, and the map between
the two.

Phasor convention used throughout the toolkit: a spectrum entry X_n is the
complex amplitude of ``|X_n| sin(n w t + angle(X_n))``.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ltisys
from .errors import ConvergenceError, SingularityError, StabilityError
from .ltisys import StateSpace


@dataclass(frozen=True)
class HarmonicSpectrum:
    """Base frequency (rad/s) plus a map harmonic order -> complex amplitude.

    Analytic reset spectra carry exact zeros at even orders; spectra measured
    from simulation may hold a small numerical residue there instead.
    """

    omega: float
    entries: dict

    def __post_init__(self):
        if self.omega <= 0.0:
            raise ValueError("base frequency must be positive")
        if any(n < 1 for n in self.entries):
            raise ValueError("harmonic orders start at 1")

    def amplitude(self, n):
        return self.entries.get(n, 0.0 + 0.0j)

    @property
    def n_max(self):
        return max(self.entries) if self.entries else 0

    def orders(self):
        return sorted(self.entries)

    def as_array(self, n_max=None):
        n_max = self.n_max if n_max is None else n_max
        out = np.zeros(n_max + 1, dtype=complex)
        for n, value in self.entries.items():
            if n <= n_max:
                out[n] = value
        return out


@dataclass(frozen=True)
class ThetaParts:
    """The frequency-dependent matrices entering the harmonic gain formula."""

    theta_d: np.ndarray
    gamma_r: np.ndarray
    lam: np.ndarray
    delta: np.ndarray
    delta_r: np.ndarray


def _require_ol_stable(R):
    from . import elements

    report = elements.ol_stable(R)
    if not report.stable:
        raise StabilityError(
            "open-loop reset condition violated "
            f"(worst modulus {report.worst_modulus:.6g})")


def theta_d(R, w):
    """Describing-function core matrix for the reset element at w (rad/s).

    theta_D = -(2 w^2 / pi) Delta (Gamma_R - Lambda^-1) with
    Gamma_R = Delta_R^-1 A_rho Delta Lambda^-1, Lambda = w^2 I + A_R^2,
    Delta = I + e^(pi A_R / w) and Delta_R = I + A_rho e^(pi A_R / w).
    """
    if w <= 0.0:
        raise ValueError("w must be positive")
    A = R.base.A
    rho = R.reset_matrix
    n = A.shape[0]
    eye = np.eye(n)
    E = ltisys.expm(A, math.pi / w)
    lam = w * w * eye + A @ A
    delta = eye + E
    delta_r = eye + rho @ E
    lam_inv = ltisys.inv_checked(lam, what=f"Lambda at w={w:g} rad/s")
    gamma_r = ltisys.solve_checked(delta_r, rho @ delta @ lam_inv,
                                   what=f"Delta_R at w={w:g} rad/s")
    th = -(2.0 * w * w / math.pi) * delta @ (gamma_r - lam_inv)
    return ThetaParts(th, gamma_r, lam, delta, delta_r)


def hosidf(R, w, n, _theta=None):
    """n-th harmonic gain of the reset element for a sinusoid at w (rad/s).

    n = 1 is the describing function; even orders are exactly zero.
    """
    if n < 1:
        raise ValueError("harmonic order must be >= 1")
    if n % 2 == 0:
        return 0.0 + 0.0j
    _require_ol_stable(R)
    th = theta_d(R, w).theta_d if _theta is None else _theta
    A, B, C, D = R.base.A, R.base.B, R.base.C, R.base.D
    nn = A.shape[0]
    M = 1j * n * w * np.eye(nn) - A
    if n == 1:
        rhs = (np.eye(nn) + 1j * th) @ B
    else:
        rhs = 1j * th @ B
    X = ltisys.solve_checked(M, rhs, what=f"resolvent at n={n}, w={w:g}")
    val = (C @ X)[0, 0]
    if n == 1:
        val += D[0, 0]
    return complex(val)


def hosidf_spectrum(R, w, n_max):
    """HarmonicSpectrum of the element's harmonic gains up to n_max."""
    _require_ol_stable(R)
    th = theta_d(R, w).theta_d
    entries = {n: hosidf(R, w, n, _theta=th) for n in range(1, n_max + 1, 2)}
    return HarmonicSpectrum(w, entries)


def impulse_hosidf(R, w, n, b_star_matrix, _theta=None):
    """Harmonic gain of the reset-induced impulsive part alone.

    Uses a designable input matrix in place of B_R; with ``b_star_matrix``
    equal to B_R the full harmonic gain decomposes as linear part plus this.
    """
    if n < 1:
        raise ValueError("harmonic order must be >= 1")
    if n % 2 == 0:
        return 0.0 + 0.0j
    _require_ol_stable(R)
    th = theta_d(R, w).theta_d if _theta is None else _theta
    A, C = R.base.A, R.base.C
    nn = A.shape[0]
    b = np.asarray(b_star_matrix, dtype=complex).reshape(nn, -1)
    M = 1j * n * w * np.eye(nn) - A
    X = ltisys.solve_checked(M, 1j * th @ b, what=f"resolvent at n={n}")
    return complex((C @ X)[0, 0])


def ol_reset_states(R, w, q0):
    """Pre-reset states at a descending zero crossing, open loop.

    For input ``q0 sin(w t)`` the steady-state states just before the reset
    at the descending crossing are

        x = (I - (I + E A_rho)^-1 E (A_rho - I)) (w^2 I + A_R^2)^-1 w B_R q0

    with ``E = e^(pi A_R / w)``.
    """
    _require_ol_stable(R)
    A, B = R.base.A, R.base.B
    rho = R.reset_matrix
    n = A.shape[0]
    eye = np.eye(n)
    E = ltisys.expm(A, math.pi / w)
    inner = ltisys.solve_checked(eye + E @ rho, E @ (rho - eye),
                                 what=f"(I + E A_rho) at w={w:g} rad/s")
    lam_inv = ltisys.inv_checked(w * w * eye + A @ A,
                                 what=f"Lambda at w={w:g} rad/s")
    return ((eye - inner) @ (lam_inv * w) @ B * q0).ravel()


def zeta(R, w):
    """Matrix mapping a target pre-reset state to the virtual input matrix.

    Inverse of the open-loop reset-state map at unit input amplitude.
    """
    A = R.base.A
    rho = R.reset_matrix
    n = A.shape[0]
    eye = np.eye(n)
    E = ltisys.expm(A, math.pi / w)
    inner = ltisys.solve_checked(eye + E @ rho, E @ (rho - eye),
                                 what=f"(I + E A_rho) at w={w:g} rad/s")
    lam = w * w * eye + A @ A
    m_inv = ltisys.inv_checked(eye - inner,
                               what=f"state-shape factor at w={w:g} rad/s")
    return (lam / w) @ m_inv


def b_star(R, w, x):
    """Virtual input matrix reproducing reset state ``x`` at unit input."""
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    return zeta(R, w) @ x


def df_sensitivity(cfg, w):
    """Describing-function approximation of the closed-loop sensitivity."""
    from .elements import df_open_loop_response

    L = df_open_loop_response(cfg, w)
    den = 1.0 + L
    if abs(den) < 1e-12:
        raise SingularityError(f"1 + L_DF vanishes at w={w:g} rad/s")
    return 1.0 / den


def alternating_tail(A, w):
    """Sum of the alternating exponential series over half periods.

    Computes ``sum_{p in 2N} (e^(A p pi/w) - e^(A (p-1) pi/w))`` in closed
    form ``-E (I + E)^-1`` with ``E = e^(A pi/w)``.  Input/output-minimal
    unstable modes make the underlying impulse-train series diverge and are
    rejected by the callers before reaching here.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    E = ltisys.expm(A, math.pi / w)
    return -ltisys.solve_checked(np.eye(n) + E, E,
                                 what=f"(I + e^(A pi/w)) at w={w:g} rad/s")


def alternating_tail_series(A, w, rel_tol=1e-12, max_terms=100000):
    """Series evaluation of :func:`alternating_tail` (reference/oracle).

    Stops when the increment norm drops below ``rel_tol`` times the
    accumulated norm; raises ConvergenceError when the terms stop decreasing.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    E = ltisys.expm(A, math.pi / w)
    _require_contracting(E)
    acc = np.zeros_like(E)
    power_prev = E.copy()          # E^(p-1) with p-1 odd, starts at E^1
    for _ in range(max_terms):
        power_even = power_prev @ E
        term = power_even - power_prev
        acc += term
        tnorm = float(np.linalg.norm(term))
        if not np.isfinite(tnorm):
            raise ConvergenceError("alternating series diverges "
                                   "(non-Hurwitz dynamics)")
        if tnorm <= rel_tol * max(float(np.linalg.norm(acc)), 1e-300):
            return acc
        power_prev = power_even @ E
    raise ConvergenceError("alternating series did not converge "
                           f"within {max_terms} terms")


def _require_contracting(E):
    radius = float(np.max(np.abs(np.linalg.eigvals(E))))
    if radius >= 1.0 - 1e-12:
        raise ConvergenceError(
            f"impulse-train series diverges (spectral radius {radius:.6g}, "
            "non-Hurwitz dynamics)")


def xi_response(r_delta: StateSpace, w, t_r, x, times,
                rel_tol=1e-12, max_terms=100000):
    """Steady response to the alternating impulse comb anchored at one reset.

    The comb carries weight ``+x`` at ``t_r + p pi/w`` for even p and ``-x``
    for odd p; this evaluates the half-period-alternating steady output of
    ``r_delta`` driven by that comb at the requested times.  The infinite
    tail over past impulses is summed as an alternating exponential series,
    truncated once increments fall below ``rel_tol`` of the accumulated sum.
    """
    A, B, C = r_delta.A, r_delta.B, r_delta.C
    n = A.shape[0]
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != B.shape[1]:
        raise ValueError("weight vector does not match the input dimension")
    half = math.pi / w
    E = ltisys.expm(A, half)
    _require_contracting(E)
    # tail = sum_{m>=0} (-E)^m, truncated like the other alternating series
    tail = np.zeros_like(E)
    term = np.eye(n)
    for _ in range(max_terms):
        tail += term
        tnorm = float(np.linalg.norm(term))
        if tnorm <= rel_tol * max(float(np.linalg.norm(tail)), 1e-300):
            break
        term = -E @ term
    else:
        raise ConvergenceError("impulse-train tail did not converge "
                               f"within {max_terms} terms")
    weight = (B @ x.reshape(-1, 1)).ravel()
    times = np.asarray(times, dtype=float)
    out = np.empty(times.shape, dtype=float)
    for i, t in enumerate(times.ravel()):
        phase = (t - t_r) / half
        p = math.floor(phase)
        offset = (phase - p) * half
        state = ltisys.expm(A, offset) @ tail @ weight
        out.ravel()[i] = ((-1.0) ** (p % 2)) * (C @ state).item()
    return out
