"""Dense state-space numerics: realizations, interconnections and responses.

Everything downstream (reset elements, describing functions, the hybrid
simulator and the analytical closed-loop solution) is built from the small
set of operations in this module.  All systems are continuous-time with
dynamics expressed in rad/s.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, SingularityError

# Condition threshold above which a solve is deemed meaningless.  Solves are
# gated primarily on their relative residual (backward error): interconnected
# realizations are often strongly non-normal, with large resolvent condition
# numbers at frequencies where the response itself is perfectly well defined.
COND_LIMIT = 1e14
RESIDUAL_LIMIT = 1e-6


def _as_matrix(value, rows=None, cols=None):
    m = np.atleast_2d(np.asarray(value, dtype=float))
    if rows is not None and cols is not None and m.size == 0:
        m = m.reshape(rows, cols)
    return m


@dataclass(frozen=True)
class StateSpace:
    """Real state-space realization ``(A, B, C, D)`` of an LTI block.

    ``A`` is n-by-n, ``B`` n-by-m, ``C`` p-by-n and ``D`` p-by-m.  Systems
    with zero states (pure gains) are represented with empty ``A``.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __init__(self, A, B, C, D):
        A = _as_matrix(A)
        if A.size == 0:
            A = A.reshape(0, 0)
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got {A.shape}")
        n = A.shape[0]
        B = _as_matrix(B)
        if B.size == 0 and B.shape[0] != n:
            B = B.reshape(n, 0 if n > 0 else B.shape[1])
        if B.shape[0] != n:
            raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
        m = B.shape[1]
        C = _as_matrix(C)
        if C.size == 0 and C.shape[1] != n:
            C = C.reshape(0 if n > 0 else C.shape[0], n)
        if C.shape[1] != n:
            raise DimensionError(f"C has {C.shape[1]} cols, expected {n}")
        p = C.shape[0]
        D = _as_matrix(D)
        if D.shape != (p, m):
            raise DimensionError(f"D must be {(p, m)}, got {D.shape}")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            if mat.size and not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} contains non-finite entries")
        for name, mat in (("A", A), ("B", B), ("C", C), ("D", D)):
            mat.setflags(write=False)
            object.__setattr__(self, name, mat)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    @property
    def is_siso(self):
        return self.n_inputs == 1 and self.n_outputs == 1


@dataclass(frozen=True)
class ComplexResponse:
    """Frequency response ``C (jwI - A)^-1 B + D`` at one frequency."""

    value: np.ndarray
    frequency: float

    @property
    def scalar(self):
        """The response as a complex scalar (SISO systems only)."""
        if self.value.shape != (1, 1):
            raise DimensionError("scalar response requires a SISO system")
        return complex(self.value[0, 0])


def expm(A, t):
    """Matrix exponential ``e^(A t)`` via scipy's scaling-and-squaring."""
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"expm needs a square matrix, got {A.shape}")
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    if A.size == 0:
        return np.zeros((0, 0))
    if t == 0.0:
        return np.eye(A.shape[0])
    return scipy.linalg.expm(A * t)


def solve_checked(M, rhs, what="matrix"):
    """Solve ``M x = rhs`` rejecting singular or unreliable systems.

    A solve is rejected when the factorization fails outright, the result is
    non-finite, the relative residual exceeds RESIDUAL_LIMIT after one step
    of iterative refinement, or the condition estimate is so extreme that no
    digits survive.  ``what`` lets callers attach frequency context.
    """
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return np.zeros_like(np.atleast_2d(rhs), dtype=np.result_type(M, rhs))
    rhs = np.asarray(rhs)
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise SingularityError(f"{what} is singular")
    if not np.all(np.isfinite(x)):
        raise SingularityError(f"{what} is singular (non-finite solve)")
    scale = (np.linalg.norm(M) * np.linalg.norm(x) + np.linalg.norm(rhs))
    if scale > 0.0:
        residual = np.linalg.norm(M @ x - rhs)
        if residual > 1e-10 * scale:
            x = x + np.linalg.solve(M, rhs - M @ x)
            residual = np.linalg.norm(M @ x - rhs)
        if residual > RESIDUAL_LIMIT * scale:
            raise SingularityError(
                f"{what} is singular (relative residual {residual / scale:.3g})")
        if residual > 1e-10 * scale:
            cond = np.linalg.cond(M)
            if not np.isfinite(cond) or cond > COND_LIMIT:
                raise SingularityError(
                    f"{what} is singular (condition {cond:.3g})")
    return x


def inv_checked(M, what="matrix"):
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return M.copy()
    return solve_checked(M, np.eye(M.shape[0], dtype=M.dtype), what)


def freq_response(sys, w):
    """Evaluate ``sys`` at ``s = jw`` (w in rad/s).

    The state matrix is balanced first (a diagonal similarity, leaving the
    response untouched) so the singularity gate reacts to genuine resolvent
    singularities rather than to badly scaled realizations.
    """
    n = sys.n_states
    if n == 0:
        return ComplexResponse(sys.D.astype(complex), float(w))
    Ab, T = scipy.linalg.matrix_balance(sys.A)
    Bb = np.linalg.solve(T, sys.B.astype(complex))
    M = 1j * w * np.eye(n) - Ab
    X = solve_checked(M, Bb,
                      what=f"resolvent (jwI - A) at w={w:g} rad/s")
    return ComplexResponse(sys.C @ (T @ X) + sys.D, float(w))


def freq_response_scalar(sys, w):
    return freq_response(sys, w).scalar


def series(a, b):
    """Realization of ``b`` after ``a`` (response = b(s) * a(s))."""
    if a.n_outputs != b.n_inputs:
        raise DimensionError(
            f"series: {a.n_outputs} outputs feed {b.n_inputs} inputs")
    na, nb = a.n_states, b.n_states
    A = np.zeros((na + nb, na + nb))
    A[:na, :na] = a.A
    A[na:, na:] = b.A
    A[na:, :na] = b.B @ a.C
    B = np.vstack([a.B, b.B @ a.D])
    C = np.hstack([b.D @ a.C, b.C])
    D = b.D @ a.D
    return StateSpace(A, B, C, D)


def chain(*blocks):
    """Series interconnection in signal order: chain(f, g) = g after f."""
    out = blocks[0]
    for blk in blocks[1:]:
        out = series(out, blk)
    return out


def parallel(a, b, sign=1.0):
    """Parallel interconnection ``a + sign * b`` (shared input)."""
    if a.n_inputs != b.n_inputs or a.n_outputs != b.n_outputs:
        raise DimensionError("parallel: input/output dimensions must match")
    na, nb = a.n_states, b.n_states
    A = np.zeros((na + nb, na + nb))
    A[:na, :na] = a.A
    A[na:, na:] = b.A
    B = np.vstack([a.B, b.B])
    C = np.hstack([a.C, sign * b.C])
    D = a.D + sign * b.D
    return StateSpace(A, B, C, D)


def gain(k):
    """Zero-state system with static gain k (scalar or matrix)."""
    k = _as_matrix(k)
    p, m = k.shape
    return StateSpace(np.zeros((0, 0)), np.zeros((0, m)),
                      np.zeros((p, 0)), k)


def identity(m=1):
    return gain(np.eye(m))


def unity_feedback(L):
    """Realization of ``(I + L)^-1`` from open loop ``L``."""
    p = L.n_outputs
    if p != L.n_inputs:
        raise DimensionError("feedback loop must be square")
    W = np.eye(p) + L.D
    Winv = inv_checked(W, what="feedback feedthrough (I + D)")
    A = L.A - L.B @ Winv @ L.C
    B = L.B @ Winv
    C = -Winv @ L.C
    D = Winv
    return StateSpace(A, B, C, D)


def complement(S):
    """Realization of ``I - S`` on the same state vector."""
    return StateSpace(S.A, S.B, -S.C, np.eye(S.n_outputs) - S.D)


def linear_sensitivity(K, R_L, G):
    """Sensitivity ``S_L = (I + G R_L K)^-1`` of the loop with resets removed.

    Returns ``(S_L, T_L)`` with ``T_L = I - S_L`` sharing the same states.
    """
    L = chain(K, R_L, G)
    S = unity_feedback(L)
    return S, complement(S)


def real_resolvent_parts(A, w):
    """Real parts of resolvent products used throughout the reset algebra.

    Returns ``(Re{(jwI - A)^-1 j}, Re{(jwI - A)^-1})`` which equal
    ``((w^2 I + A^2)^-1 w, -(w^2 I + A^2)^-1 A)``.
    """
    A = _as_matrix(A)
    n = A.shape[0]
    M = w * w * np.eye(n) + A @ A
    Minv = inv_checked(M, what=f"(w^2 I + A^2) at w={w:g} rad/s")
    return Minv * w, -Minv @ A


def tf(num, den):
    """State-space realization of ``num(s)/den(s)`` (controllable canonical).

    Coefficients are highest power first, as in numpy.polyval.
    """
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    den = np.trim_zeros(den, "f")
    if den.size == 0:
        raise ValueError("denominator is zero")
    num = np.trim_zeros(num, "f")
    if num.size == 0:
        num = np.zeros(1)
    if num.size > den.size:
        raise ValueError("improper transfer function (deg num > deg den)")
    num = num / den[0]
    den = den / den[0]
    n = den.size - 1
    if n == 0:
        return gain(num[0])
    num = np.concatenate([np.zeros(den.size - num.size), num])
    d = num[0]
    # strictly-proper remainder after pulling out the feedthrough
    rem = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    if n > 1:
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = rem[np.newaxis, :]
    D = np.array([[d]])
    return StateSpace(A, B, C, D)


def poles(sys):
    if sys.n_states == 0:
        return np.zeros(0, dtype=complex)
    return np.linalg.eigvals(sys.A)


def effective_unstable_poles(sys, tol=1e-9):
    """Eigenvalues with ``Re >= -tol`` that survive a PBH minimality test.

    Cascade realizations can carry exactly-cancelled marginal modes (for
    example an integrator pole hidden behind a sensitivity zero); those do
    not appear in the input/output behaviour and are filtered out here.
    """
    if sys.n_states == 0:
        return []
    eigs = np.linalg.eigvals(sys.A)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    bad = []
    n = sys.n_states
    for lam in eigs:
        if lam.real < -tol * scale:
            continue
        ctrb = np.hstack([lam * np.eye(n) - sys.A, sys.B])
        obsv = np.vstack([lam * np.eye(n) - sys.A, sys.C])
        s_c = np.linalg.svd(ctrb, compute_uv=False)
        s_o = np.linalg.svd(obsv, compute_uv=False)
        # rank-deficient PBH matrix => mode is cancelled, ignore it
        if s_c[-1] > 1e-9 * max(s_c[0], 1.0) and s_o[-1] > 1e-9 * max(s_o[0], 1.0):
            bad.append(lam)
    return bad


def is_hurwitz_io(sys, tol=1e-9):
    """True when every controllable-and-observable mode decays."""
    return not effective_unstable_poles(sys, tol)
