# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled marching kernel: same contract as `_stepper_py.march_period`.

Grid stepping and dyadic event bisection on precomputed matrix
exponentials; all per-step work is small dense matrix-vector products, so
plain typed loops beat BLAS dispatch overhead at these sizes.
"""

import numpy as np

cimport numpy as cnp

from ..errors import SimulationError

cnp.import_array()

BACKEND = "cython"


cdef inline void _matvec(double[:, ::1] M, double* x, double* out, int n) noexcept:
    cdef int i, j
    cdef double s
    for i in range(n):
        s = 0.0
        for j in range(n):
            s += M[i, j] * x[j]
        out[i] = s


cdef inline double _dot(double[::1] r, double* x, int n) noexcept:
    cdef int i
    cdef double s = 0.0
    for i in range(n):
        s += r[i] * x[i]
    return s


cdef inline int _sign(double v) noexcept:
    if v > 0.0:
        return 1
    if v < 0.0:
        return -1
    return 0


def march_period(cnp.ndarray[double, ndim=1] x,
                 cnp.ndarray[double, ndim=2] E_h_arr,
                 cnp.ndarray[double, ndim=3] E_pows_arr,
                 cnp.ndarray[double, ndim=1] q_row_arr,
                 cnp.ndarray[double, ndim=2] reset_map_arr,
                 bint fire_resets, double tau, double t_last, double t0,
                 double h, int steps, int sign_init, int max_events,
                 int max_step_events=64):
    cdef int n = x.shape[0]
    cdef int levels = E_pows_arr.shape[0] - 1
    cdef long ncells = (<long> 1) << levels
    cdef double cell_dt = h / ncells
    cdef double tau_eff = tau - 2.0 * cell_dt if tau > 0.0 else 0.0

    X_arr = np.empty((steps + 1, n))
    ev_t_arr = np.empty(max_events)
    ev_pre_arr = np.empty((max_events, n))
    ev_post_arr = np.empty((max_events, n))
    ev_dir_arr = np.empty(max_events, dtype=np.int32)

    cdef double[:, ::1] X = X_arr
    cdef double[::1] ev_t = ev_t_arr
    cdef double[:, ::1] ev_pre = ev_pre_arr
    cdef double[:, ::1] ev_post = ev_post_arr
    cdef int[::1] ev_dir = ev_dir_arr
    cdef double[:, ::1] E_h = np.ascontiguousarray(E_h_arr)
    cdef double[:, :, ::1] E_pows = np.ascontiguousarray(E_pows_arr)
    cdef double[::1] q_row = np.ascontiguousarray(q_row_arr)
    cdef double[:, ::1] reset_map = np.ascontiguousarray(reset_map_arr)

    cdef cnp.ndarray buf0 = np.ascontiguousarray(x).copy()
    cdef cnp.ndarray buf1 = np.empty(n)
    cdef cnp.ndarray buf2 = np.empty(n)
    cdef cnp.ndarray buf3 = np.empty(n)
    cdef cnp.ndarray buf4 = np.empty(n)
    cdef double* x_cur = <double*> cnp.PyArray_DATA(buf0)
    cdef double* x_next = <double*> cnp.PyArray_DATA(buf1)
    cdef double* x_c = <double*> cnp.PyArray_DATA(buf2)
    cdef double* x_try = <double*> cnp.PyArray_DATA(buf3)
    cdef double* x_end = <double*> cnp.PyArray_DATA(buf4)
    cdef double* tmp

    cdef int n_events = 0
    cdef int sign = sign_init
    cdef int k, i, j, s_next, guard, direction, s_end
    cdef long c, cc, stride, rem
    cdef double q_next, q_try, t_event

    for i in range(n):
        X[0, i] = x_cur[i]

    for k in range(steps):
        _matvec(E_h, x_cur, x_next, n)
        q_next = _dot(q_row, x_next, n)
        s_next = _sign(q_next)
        if sign == 0 or s_next == 0 or s_next == sign:
            if s_next != 0:
                sign = s_next
            tmp = x_cur; x_cur = x_next; x_next = tmp
            for i in range(n):
                X[k + 1, i] = x_cur[i]
            continue

        # at least one crossing inside (t_k, t_k + h): walk through them
        c = 0
        for i in range(n):
            x_c[i] = x_cur[i]
        guard = 0
        while True:
            guard += 1
            if guard > max_step_events:
                raise SimulationError(
                    "event cascade exceeds the Zeno guard")
            # greedy dyadic advance to the last cell keeping the old sign
            cc = c
            for j in range(levels - 1, -1, -1):
                stride = (<long> 1) << j
                if cc + stride <= ncells - 1:
                    _matvec(E_pows[j], x_c, x_try, n)
                    q_try = _dot(q_row, x_try, n)
                    if q_try == 0.0 or (q_try > 0.0) == (sign > 0):
                        cc += stride
                        tmp = x_c; x_c = x_try; x_try = tmp
            t_event = t0 + k * h + (cc + 0.5) * cell_dt
            direction = -sign
            if fire_resets and (t_last < 0.0 or t_event - t_last >= tau_eff):
                if n_events >= max_events:
                    raise SimulationError(
                        "event cascade exceeds the Zeno guard")
                ev_t[n_events] = t_event
                for i in range(n):
                    ev_pre[n_events, i] = x_c[i]
                _matvec(reset_map, x_c, x_try, n)
                tmp = x_c; x_c = x_try; x_try = tmp
                for i in range(n):
                    ev_post[n_events, i] = x_c[i]
                ev_dir[n_events] = direction
                n_events += 1
                t_last = t_event
            sign = direction
            # propagate a copy from cell cc to the end of the step
            for i in range(n):
                x_end[i] = x_c[i]
            rem = ncells - cc
            j = 0
            while rem:
                if rem & 1:
                    _matvec(E_pows[j], x_end, x_try, n)
                    tmp = x_end; x_end = x_try; x_try = tmp
                rem >>= 1
                j += 1
            q_next = _dot(q_row, x_end, n)
            s_end = _sign(q_next)
            if s_end == 0 or s_end == sign:
                if s_end != 0:
                    sign = s_end
                for i in range(n):
                    x_cur[i] = x_end[i]
                break
            c = cc
        for i in range(n):
            X[k + 1, i] = x_cur[i]

    return (X_arr, ev_t_arr[:n_events], ev_pre_arr[:n_events],
            ev_post_arr[:n_events], ev_dir_arr[:n_events], n_events,
            t_last, sign)
