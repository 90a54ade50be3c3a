"""Pure-numpy marching kernel: grid stepping plus event localization.

The augmented system is autonomous, so each grid step is one matrix-vector
product with a precomputed exponential.  A sign change of the reset trigger
``q`` within a step is localized by dyadic bisection using precomputed
exponentials for the binary subdivisions of the step, keeping every state
propagation an exact matrix exponential.

`_stepper.pyx` compiles the same algorithm; either backend is selected at
import time in `core`.
"""

import numpy as np

BACKEND = "python"


def march_period(x, E_h, E_pows, q_row, reset_map, fire_resets,
                 tau, t_last, t0, h, steps, sign_init,
                 max_events, max_step_events=64):
    """March one period of `steps` grid intervals, handling resets.

    E_pows[j] is the flow over ``h / 2^(levels - j)`` seconds with
    ``levels = len(E_pows) - 1`` and ``E_pows[levels] == E_h``; the smallest
    subdivision is the event-time resolution.

    Returns (X, ev_t, ev_pre, ev_post, ev_dir, n_events, t_last, sign_out).
    ev_pre/ev_post hold full augmented pre/post states; sign_out is the sign
    of q at the period end (0 if still undetermined).
    """
    n = x.shape[0]
    levels = len(E_pows) - 1
    ncells = 1 << levels
    cell_dt = h / ncells
    # suppression guard: a crossing exactly tau after the previous reset
    # must fire, so compare against tau shrunk by the time resolution
    tau_eff = tau - 2.0 * cell_dt if tau > 0.0 else 0.0

    X = np.empty((steps + 1, n))
    X[0] = x
    ev_t = np.empty(max_events)
    ev_pre = np.empty((max_events, n))
    ev_post = np.empty((max_events, n))
    ev_dir = np.empty(max_events, dtype=np.int32)
    n_events = 0

    sign = sign_init
    x_cur = x.copy()
    for k in range(steps):
        x_next = E_h @ x_cur
        q_next = float(q_row @ x_next)
        s_next = 0 if q_next == 0.0 else (1 if q_next > 0.0 else -1)
        if sign == 0 or s_next == 0 or s_next == sign:
            if s_next != 0:
                sign = s_next
            x_cur = x_next
            X[k + 1] = x_cur
            continue

        # at least one crossing inside (t_k, t_k + h): walk through them
        c = 0
        x_c = x_cur
        guard = 0
        while True:
            guard += 1
            if guard > max_step_events:
                raise _zeno_error()
            # locate the next crossing cell by dyadic advance
            cc, x_cc = _advance_to_crossing(
                x_c, c, sign, E_pows, levels, q_row)
            t_event = t0 + k * h + (cc + 0.5) * cell_dt
            direction = -sign
            if fire_resets and (t_last < 0.0 or t_event - t_last >= tau_eff):
                x_post = reset_map @ x_cc
                if n_events >= max_events:
                    raise _zeno_error()
                ev_t[n_events] = t_event
                ev_pre[n_events] = x_cc
                ev_post[n_events] = x_post
                ev_dir[n_events] = direction
                n_events += 1
                t_last = t_event
            else:
                x_post = x_cc
            sign = direction
            # propagate from cell cc to the end of the step
            x_end = _apply_cells(x_post, ncells - cc, E_pows)
            q_end = float(q_row @ x_end)
            s_end = 0 if q_end == 0.0 else (1 if q_end > 0.0 else -1)
            if s_end == 0 or s_end == sign:
                if s_end != 0:
                    sign = s_end
                x_cur = x_end
                break
            c, x_c = cc, x_post
        X[k + 1] = x_cur
    return X, ev_t[:n_events], ev_pre[:n_events], ev_post[:n_events], \
        ev_dir[:n_events], n_events, t_last, sign


def _advance_to_crossing(x_c, c, sign, E_pows, levels, q_row):
    """Greedy dyadic advance to the last cell where q keeps `sign`.

    Assumes a crossing exists in (c, 2^levels]; returns (cell, state) for the
    cell whose right boundary crosses.
    """
    ncells = 1 << levels
    for j in range(levels - 1, -1, -1):
        stride = 1 << j
        if c + stride <= ncells - 1:
            x_try = E_pows[j] @ x_c
            q_try = float(q_row @ x_try)
            if q_try == 0.0 or (q_try > 0.0) == (sign > 0):
                c += stride
                x_c = x_try
    return c, x_c


def _apply_cells(x, n_cells, E_pows):
    """Propagate by n_cells dyadic cells using the precomputed flows."""
    j = 0
    while n_cells:
        if n_cells & 1:
            x = E_pows[j] @ x
        n_cells >>= 1
        j += 1
    return x


def _zeno_error():
    from ..errors import SimulationError

    return SimulationError("event cascade exceeds the Zeno guard")
