"""Reset elements, linear controllers, loop wiring and loop-shaping queries.

Frequencies in every public signature are in Hz; realizations are built in
rad/s internally.  The closed loop follows the standard wiring

    r --(+)--> K --> reset element --> C --> P --> y
        (-)                                         |
         +------------------------------------------+

with ``G = P * C`` and, for the bundled CgLp studies, ``K = 1``.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from . import ltisys
from .errors import ConfigError, NoCrossoverError
from .ltisys import StateSpace

TWO_PI = 2.0 * math.pi


class ResetController:
    """An LTI base realization plus a diagonal reset matrix.

    The base ``(A_R, B_R, C_R, D_R)`` flows between resets; at a reset the
    states jump to ``A_rho @ x``.  Diagonal entries of ``A_rho`` must lie in
    [-1, 1].
    """

    def __init__(self, base: StateSpace, reset_matrix):
        reset_matrix = np.atleast_2d(np.asarray(reset_matrix, dtype=float))
        if not base.is_siso:
            raise ConfigError("reset controller must be SISO")
        n = base.n_states
        if reset_matrix.shape != (n, n):
            raise ConfigError(
                f"reset matrix must be {n}x{n}, got {reset_matrix.shape}")
        if np.any(reset_matrix != np.diag(np.diag(reset_matrix))):
            raise ConfigError("reset matrix must be diagonal")
        gammas = np.diag(reset_matrix)
        if np.any(np.abs(gammas) > 1.0):
            raise ConfigError("reset values must lie in [-1, 1]")
        self.base = base
        self.reset_matrix = reset_matrix
        self.reset_matrix.setflags(write=False)
        self._ol_report = None

    @property
    def gammas(self):
        return np.diag(self.reset_matrix)

    @property
    def n_states(self):
        return self.base.n_states

    @property
    def is_linear(self):
        """True when the reset map is the identity (no actual resets)."""
        return bool(np.allclose(self.gammas, 1.0))

    def classify(self):
        """'linear', 'fully resetting' or 'partially resetting'."""
        g = self.gammas
        if np.all(g == 1.0):
            return "linear"
        if np.all((g == 0.0) | (g == 1.0)):
            return "fully resetting"
        return "partially resetting"

    def with_gammas(self, gammas):
        g = np.broadcast_to(np.asarray(gammas, dtype=float), (self.n_states,))
        return ResetController(self.base, np.diag(g))


def make_gci(gamma):
    """Generalized Clegg integrator: a resetting integrator."""
    if abs(gamma) > 1.0:
        raise ConfigError("gamma must lie in [-1, 1]")
    base = StateSpace([[0.0]], [[1.0]], [[1.0]], [[0.0]])
    return ResetController(base, [[gamma]])


def make_gfore(wr_hz, gamma, wr_rad=None):
    """Generalized first-order reset element (resetting low-pass filter).

    ``wr_hz`` is the corner frequency in Hz; pass ``wr_rad`` instead to
    specify it directly in rad/s.
    """
    if abs(gamma) > 1.0:
        raise ConfigError("gamma must lie in [-1, 1]")
    wr = TWO_PI * wr_hz if wr_rad is None else wr_rad
    if wr <= 0.0:
        raise ConfigError("corner frequency must be positive")
    base = StateSpace([[-wr]], [[wr]], [[1.0]], [[0.0]])
    return ResetController(base, [[gamma]])


@dataclass(frozen=True)
class CgLpTuning:
    """Parameters of one CgLp + PID controller design.

    All frequencies in Hz.  ``kp`` is the loop gain; leave it at None to have
    it tuned for unit describing-function loop gain at ``wc_hz``.
    """

    gamma: float
    wr_hz: float
    alpha: float
    beta: float
    wf_hz: float = 500.0
    wi_hz: float = 10.0
    wc_hz: float = 100.0
    kp: float | None = None
    pm_bls_deg: float | None = None
    phi_rc_deg: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.wr_hz <= 0 or self.alpha <= 0:
            raise ConfigError("wr and alpha must be positive")
        if self.wf_hz <= self.wc_hz:
            raise ConfigError("wf must exceed the bandwidth wc")
        if self.beta <= 1.0:
            raise ConfigError("beta must exceed 1")
        if abs(self.gamma) > 1.0:
            raise ConfigError("gamma must lie in [-1, 1]")


def make_cglp(tuning: CgLpTuning):
    """Constant-gain lead-in-phase element: resetting lag + lead-lag.

    Two states; only the first (the resetting low-pass state) is reset, the
    lead-lag state keeps its value.
    """
    wr = TWO_PI * tuning.wr_hz
    wra = wr / tuning.alpha
    wf = TWO_PI * tuning.wf_hz
    A = [[-wra, 0.0], [wf, -wf]]
    B = [[wra], [0.0]]
    C = [[wf / wr, 1.0 - wf / wr]]
    base = StateSpace(A, B, C, [[0.0]])
    return ResetController(base, np.diag([tuning.gamma, 1.0]))


def make_pid(kp, wi_hz, wc_hz, beta):
    """PI + tamed-lead controller ``kp (s+wi)/s * (s+wc/beta)/(s+wc*beta)``.

    The lead stage places its zero and pole symmetrically (on a log axis)
    around the bandwidth ``wc``.
    """
    if wi_hz <= 0 or wc_hz <= 0:
        raise ConfigError("wi and wc must be positive")
    if beta < 1.0:
        raise ConfigError("beta must be >= 1")
    wi = TWO_PI * wi_hz
    wc = TWO_PI * wc_hz
    num = kp * np.polymul([1.0, wi], [1.0, wc / beta])
    den = np.polymul([1.0, 0.0], [1.0, wc * beta])
    return ltisys.tf(num, den)


def make_lead_squared(kp, wc_hz, beta):
    """Double lead stage ``kp ((s+wc/beta)/(s+wc*beta))^2`` (no integrator)."""
    wc = TWO_PI * wc_hz
    stage = ltisys.tf([1.0, wc / beta], [1.0, wc * beta])
    return ltisys.series(ltisys.series(stage, stage), ltisys.gain(kp))


def stage_plant():
    """Identified 1-DoF precision positioning stage (mass-spring-damper).

    This is the plant behind the "paper-stage" config preset: DC gain
    about 41.9 dB with a lightly damped resonance near 2.48 Hz.
    """
    return ltisys.tf([3.038e4], [1.0, 0.7413, 243.3])


@dataclass(frozen=True)
class LoopConfig:
    """Closed-loop wiring: K ahead of the reset element, G = P*C behind it.

    ``tau`` is the time-regularization window in seconds; ``wc_hz`` records
    the design bandwidth so 'optimal' time regularization can derive its
    window from it.
    """

    K: StateSpace
    R: ResetController
    C: StateSpace
    P: StateSpace
    tau: float = 0.0
    wc_hz: float | None = None

    def __post_init__(self):
        for name, blk in (("K", self.K), ("C", self.C), ("P", self.P)):
            if not blk.is_siso:
                raise ConfigError(f"{name} must be SISO")
        if self.tau < 0.0:
            raise ConfigError("tau must be >= 0")
        if float(self.R.base.D[0, 0]) != 0.0:
            raise ConfigError("reset element must be strictly proper")
        # a direct feedthrough path around the full loop would make the
        # reset condition q depend on itself
        d_loop = float(self.P.D[0, 0]) * float(self.C.D[0, 0]) \
            * float(self.R.base.D[0, 0]) * float(self.K.D[0, 0])
        if d_loop != 0.0:
            raise ConfigError("algebraic loop: loop feedthrough must vanish")

    @property
    def G(self):
        """Series linear part behind the reset element, G = P*C."""
        return ltisys.series(self.C, self.P)

    def with_tau(self, tau):
        return replace(self, tau=tau)

    def base_linear(self):
        """The same loop with resets removed (gammas forced to 1)."""
        return replace(self, R=self.R.with_gammas(np.ones(self.R.n_states)))

    def sensitivities(self):
        """BLS sensitivity and complementary sensitivity (S_L, T_L)."""
        return ltisys.linear_sensitivity(self.K, self.R.base, self.G)

    def bls_open_loop(self):
        """Open loop G*R_L*K as one realization (input e, output y)."""
        return ltisys.chain(self.K, self.R.base, self.C, self.P)


def resolve_tau(mode, wc_hz=None, w=None):
    """Map a time-regularization mode to a window in seconds.

    'none' -> 0; 'optimal' -> 2*pi/(10*wc) with wc in rad/s; 'full' -> the
    half period pi/w of the analyzed frequency, shaved by 10% so the wanted
    reset at half-period spacing survives the suppression window.  The
    unshaved value sits on the knife edge of the suppression rule: twin
    spacings approach the half period from below (dips of a few percent at
    low phase margins), and suppressing the twin locks a spurious
    one-reset-per-period cycle.  Additional resets sit much closer to the
    previous reset than 90% of the half period, so they stay suppressed.
    """
    if mode == "none":
        return 0.0
    if mode == "optimal":
        if wc_hz is None:
            raise ConfigError("optimal time regularization needs wc_hz")
        return TWO_PI / (10.0 * TWO_PI * wc_hz)
    if mode == "full":
        if w is None:
            raise ConfigError("full time regularization needs the frequency")
        return 0.9 * math.pi / w
    raise ConfigError(f"unknown tau mode {mode!r}")


# -- loop-shaping queries ----------------------------------------------------

def df_open_loop_response(cfg, w):
    """Describing-function open loop G(jw) R_DF1(w) K(jw)."""
    from . import harmonics

    rdf1 = harmonics.hosidf(cfg.R, w, 1)
    g = ltisys.freq_response_scalar(cfg.G, w)
    k = ltisys.freq_response_scalar(cfg.K, w)
    return g * rdf1 * k


def tune_gain(cfg, wc_hz):
    """Loop gain making the describing-function open loop cross 0 dB at wc.

    The returned ``kp`` multiplies the linear controller C; the reset element
    and K are left untouched.
    """
    wc = TWO_PI * wc_hz
    mag = abs(df_open_loop_response(cfg, wc))
    if mag == 0.0 or not np.isfinite(mag):
        raise ConfigError(f"loop response vanishes at {wc_hz:g} Hz")
    return 1.0 / mag


def apply_gain(cfg, kp):
    scaled = ltisys.series(cfg.C, ltisys.gain(kp))
    return replace(cfg, C=scaled)


@dataclass(frozen=True)
class OpenLoopStabilityReport:
    stable: bool
    worst_modulus: float
    worst_delta: float
    limit_modulus: float            # d -> 0+ limit, |lambda(A_rho)|


def ol_stable(R, deltas=None):
    """Check the open-loop reset stability condition.

    The spectral radius of ``A_rho e^(A_R d)`` must stay below one for every
    d > 0.  Checked on a log-spaced grid (default 1e-6..1e3 s, 400 points);
    the d -> 0+ limit ``|lambda(A_rho)|`` is reported and only disqualifies
    when it exceeds one (a unit limit is reached but never attained when the
    grid itself stays below one, as for a non-resetting state on a stable
    base).
    """
    default_grid = deltas is None
    if R._ol_report is not None and default_grid:
        return R._ol_report
    if default_grid:
        deltas = np.logspace(-6, 3, 400)
    A = R.base.A
    rho = R.reset_matrix
    limit0 = float(np.max(np.abs(np.linalg.eigvals(rho)))) if rho.size else 0.0
    worst = 0.0
    worst_delta = 0.0
    for d in deltas:
        m = float(np.max(np.abs(np.linalg.eigvals(rho @ ltisys.expm(A, d)))))
        if m > worst:
            worst, worst_delta = m, float(d)
    report = OpenLoopStabilityReport(worst < 1.0 and limit0 <= 1.0,
                                     worst, worst_delta, limit0)
    if default_grid:
        R._ol_report = report
    return report


@dataclass(frozen=True)
class MarginReport:
    pm_bls_deg: float
    crossover_bls_hz: float
    pm_df_deg: float
    crossover_df_hz: float

    @property
    def phi_rc_deg(self):
        return self.pm_df_deg - self.pm_bls_deg


def _find_crossover(mag_fn, band_hz=(1e-2, 1e4), points=600):
    """Frequency (rad/s) where |L| crosses 1, refined by bisection."""
    freqs = np.logspace(math.log10(band_hz[0]), math.log10(band_hz[1]), points)
    ws = TWO_PI * freqs
    mags = np.array([mag_fn(w) for w in ws])
    above = mags > 1.0
    idx = np.nonzero(above[:-1] & ~above[1:])[0]
    if idx.size == 0:
        raise NoCrossoverError("no gain crossover in the searched band")
    lo, hi = ws[idx[0]], ws[idx[0] + 1]
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        if mag_fn(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def phase_margin_bls(cfg, band_hz=(1e-2, 1e4)):
    """Phase margins of the BLS loop and of the DF loop.

    Reports the BLS margin at the BLS gain crossover, the DF margin at the
    DF-loop crossover and their difference (the reset-added phase).
    """
    L_bls = cfg.bls_open_loop()

    def bls_mag(w):
        return abs(ltisys.freq_response_scalar(L_bls, w))

    w_bls = _find_crossover(bls_mag, band_hz)
    pm_bls = 180.0 + math.degrees(
        np.angle(ltisys.freq_response_scalar(L_bls, w_bls)))

    def df_mag(w):
        return abs(df_open_loop_response(cfg, w))

    w_df = _find_crossover(df_mag, band_hz)
    pm_df = 180.0 + math.degrees(np.angle(df_open_loop_response(cfg, w_df)))
    return MarginReport(pm_bls, w_bls / TWO_PI, pm_df, w_df / TWO_PI)


# -- bundled controller tunings ----------------------------------------------

def _tuning(name, pm, phi, gamma, wr, alpha, beta):
    return CgLpTuning(gamma=gamma, wr_hz=wr, alpha=alpha, beta=beta,
                      pm_bls_deg=pm, phi_rc_deg=phi, name=name)


# CgLp designs used by the assumption studies (three gamma variants).
TEST_TUNINGS = {
    "Rs0": _tuning("Rs0", 30.0, 20.0, 0.0, 98.38, 1.07, 2.67),
    "Rs1": _tuning("Rs1", 30.0, 20.0, 0.5, 23.08, 1.04, 2.57),
    "Rs2": _tuning("Rs2", 20.0, 20.0, 0.5, 23.08, 1.04, 2.03),
}

# CgLp designs spanning a range of phase margins and reset intensities.
CGLP_TUNINGS = {
    "R0": _tuning("R0", 20.0, 40.0, 0.0, 34.41, 1.24, 2.17),
    "R1": _tuning("R1", 30.0, 30.0, -0.2, 83.46, 1.18, 2.87),
    "R2": _tuning("R2", 30.0, 30.0, 0.0, 62.88, 1.15, 2.78),
    "R3": _tuning("R3", 30.0, 30.0, 0.2, 37.55, 1.12, 2.68),
    "R4": _tuning("R4", 40.0, 20.0, 0.0, 98.38, 1.07, 3.59),
    "R5": _tuning("R5", 40.0, 30.0, 0.0, 62.88, 1.15, 3.79),
    "R6": _tuning("R6", 50.0, 30.0, 0.0, 62.88, 1.15, 5.79),
    "R7": _tuning("R7", 50.0, 40.0, 0.0, 34.41, 1.24, 5.81),
}

ALL_TUNINGS = {**TEST_TUNINGS, **CGLP_TUNINGS}


def build_cglp_loop(tuning: CgLpTuning, plant=None, tau=0.0):
    """Assemble the standard CgLp-PID loop for one tuning and tune its gain.

    K is unity; the reset element feeds the PID which feeds the plant.  When
    ``tuning.kp`` is None the gain is adjusted for a 0 dB DF-loop crossing at
    ``tuning.wc_hz``.
    """
    plant = stage_plant() if plant is None else plant
    R = make_cglp(tuning)
    C = make_pid(1.0, tuning.wi_hz, tuning.wc_hz, tuning.beta)
    cfg = LoopConfig(K=ltisys.gain(1.0), R=R, C=C, P=plant, tau=tau,
                     wc_hz=tuning.wc_hz)
    kp = tuning.kp if tuning.kp is not None else tune_gain(cfg, tuning.wc_hz)
    return apply_gain(cfg, kp), kp
