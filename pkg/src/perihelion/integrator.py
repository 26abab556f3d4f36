"""Adaptive Dormand-Prince 8(5,3) integration compiled with numba.

The right-hand side is an ``@njit(RHS_SIG)`` function ``rhs(t, y, prm, out)``
writing dy/dt into ``out``; ``prm`` is a float64 parameter vector.  A second
``@njit(INSIDE_SIG)`` predicate ``inside(y, prm)`` marks the admissible
domain; leaving it stops the integration with ``STATUS_DOMAIN``.

Both are passed as first-class function values, so the compiled drivers are
typed once and load from numba's on-disk cache in later processes.
"""
import numpy as np
from numba import njit, types
from scipy.integrate._ivp import dop853_coefficients as _dc

N_STAGES = _dc.N_STAGES
A = np.ascontiguousarray(_dc.A, dtype=np.float64)
B = np.ascontiguousarray(_dc.B, dtype=np.float64)
C = np.ascontiguousarray(_dc.C, dtype=np.float64)
E3 = np.ascontiguousarray(_dc.E3, dtype=np.float64)
E5 = np.ascontiguousarray(_dc.E5, dtype=np.float64)
D = np.ascontiguousarray(_dc.D, dtype=np.float64)
N_EXT = _dc.N_STAGES_EXTENDED
N_DENSE = _dc.INTERPOLATOR_POWER

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 10.0
ERR_EXP = -1.0 / 8.0

STATUS_OK = 0
STATUS_EVENT = 1
STATUS_DOMAIN = 2
STATUS_STEP_COLLAPSE = 3
STATUS_MAX_STEPS = 4
STATUS_NO_EVENT = 5

_VEC = types.float64[::1]
RHS_SIG = types.void(types.float64, _VEC, _VEC, _VEC)
INSIDE_SIG = types.boolean(_VEC, _VEC)
_RHS = types.FunctionType(RHS_SIG)
_INSIDE = types.FunctionType(INSIDE_SIG)
_F, _I = types.float64, types.int64


@njit(cache=True)
def _rk_step(rhs, prm, t, y, f, h, K, ytmp):
    n = y.size
    for i in range(n):
        K[0, i] = f[i]
    for s in range(1, N_STAGES):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            ytmp[i] = y[i] + h * acc
        rhs(t + C[s] * h, ytmp, prm, K[s])
    y_new = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(N_STAGES):
            acc += B[j] * K[j, i]
        y_new[i] = y[i] + h * acc
    rhs(t + h, y_new, prm, K[N_STAGES])
    return y_new


@njit(cache=True)
def _error_norm(K, h, y, y_new, rtol, atol):
    n = y.size
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        sc = atol + max(abs(y[i]), abs(y_new[i])) * rtol
        a5 = 0.0
        a3 = 0.0
        for j in range(N_STAGES + 1):
            a5 += E5[j] * K[j, i]
            a3 += E3[j] * K[j, i]
        e5 += (a5 / sc) ** 2
        e3 += (a3 / sc) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / np.sqrt((e5 + 0.01 * e3) * n)


@njit(cache=True)
def _dense_coeffs(rhs, prm, t_old, h, y_old, y_new, f_new, K, ytmp):
    n = y_old.size
    for s in range(N_STAGES + 1, N_EXT):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            ytmp[i] = y_old[i] + h * acc
        rhs(t_old + C[s] * h, ytmp, prm, K[s])
    F = np.empty((N_DENSE, n))
    for i in range(n):
        dy = y_new[i] - y_old[i]
        F[0, i] = dy
        F[1, i] = h * K[0, i] - dy
        F[2, i] = 2.0 * dy - h * (f_new[i] + K[0, i])
        for m in range(N_DENSE - 3):
            acc = 0.0
            for j in range(N_EXT):
                acc += D[m, j] * K[j, i]
            F[3 + m, i] = h * acc
    return F


@njit(cache=True)
def dense_eval(F, y_old, x):
    """Evaluate the step interpolant at the fraction ``x`` of the step."""
    n = y_old.size
    out = np.zeros(n)
    for k in range(N_DENSE - 1, -1, -1):
        ii = N_DENSE - 1 - k
        for i in range(n):
            out[i] += F[k, i]
            if ii % 2 == 0:
                out[i] *= x
            else:
                out[i] *= 1.0 - x
    for i in range(n):
        out[i] += y_old[i]
    return out


@njit(cache=True)
def _initial_step(rhs, prm, t0, y0, f0, direction, rtol, atol, span):
    n = y0.size
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * direction * f0
    f1 = np.empty(n)
    rhs(t0 + h0 * direction, y1, prm, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + abs(y0[i]) * rtol
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(100.0 * h0, h1, span)


@njit(cache=True)
def _attempt(rhs, prm, t, y, f, h_abs, direction, t_bound, rtol, atol, K, ytmp):
    """One accepted step; returns (ok, t_new, y_new, h_signed, next_h_abs)."""
    rejected = False
    while True:
        min_step = 10.0 * abs(np.nextafter(t, direction * np.inf) - t)
        if h_abs < min_step:
            return False, t, y, 0.0, h_abs
        h = h_abs * direction
        t_new = t + h
        if direction * (t_new - t_bound) > 0:
            t_new = t_bound
        h = t_new - t
        h_abs = abs(h)
        y_new = _rk_step(rhs, prm, t, y, f, h, K, ytmp)
        err = _error_norm(K, h, y, y_new, rtol, atol)
        if err < 1.0:
            if err == 0.0:
                fac = MAX_FACTOR
            else:
                fac = min(MAX_FACTOR, SAFETY * err ** ERR_EXP)
            if rejected:
                fac = min(1.0, fac)
            return True, t_new, y_new, h, h_abs * fac
        h_abs *= max(MIN_FACTOR, SAFETY * err ** ERR_EXP)
        rejected = True


@njit((_RHS, _INSIDE, _VEC, _VEC, _F, _F, _F, _F, _I), cache=True)
def integrate_steps(rhs, inside, prm, y0, t0, t1, rtol, atol, max_steps):
    """Integrate from t0 to t1 keeping every accepted step with its interpolant.

    Returns ``(status, ts, ys, Fs)`` where ``Fs[k]`` is the dense-output
    coefficient block of the step ending at ``ts[k + 1]``.
    """
    n = y0.size
    direction = 1.0 if t1 >= t0 else -1.0
    ts = np.empty(max_steps + 1)
    ys = np.empty((max_steps + 1, n))
    Fs = np.empty((max_steps, N_DENSE, n))
    K = np.empty((N_EXT, n))
    ytmp = np.empty(n)
    t = t0
    y = y0.copy()
    f = np.empty(n)
    rhs(t, y, prm, f)
    ts[0] = t
    ys[0] = y
    if t1 == t0:
        return STATUS_OK, ts[:1], ys[:1], Fs[:0]
    h_abs = _initial_step(rhs, prm, t0, y0, f, direction, rtol, atol, abs(t1 - t0))
    k = 0
    while direction * (t1 - t) > 0:
        if k >= max_steps:
            return STATUS_MAX_STEPS, ts[:k + 1], ys[:k + 1], Fs[:k]
        ok, t_new, y_new, h, h_abs = _attempt(rhs, prm, t, y, f, h_abs, direction,
                                              t1, rtol, atol, K, ytmp)
        if not ok:
            return STATUS_STEP_COLLAPSE, ts[:k + 1], ys[:k + 1], Fs[:k]
        f_new = K[N_STAGES].copy()
        Fs[k] = _dense_coeffs(rhs, prm, t, h, y, y_new, f_new, K, ytmp)
        t = t_new
        y = y_new
        f = f_new
        k += 1
        ts[k] = t
        ys[k] = y
        if not inside(y, prm):
            return STATUS_DOMAIN, ts[:k + 1], ys[:k + 1], Fs[:k]
    return STATUS_OK, ts[:k + 1], ys[:k + 1], Fs[:k]


@njit(cache=True)
def _plane_value(y, normal, offset, wrap_idx, period, shift):
    acc = -offset
    for i in range(y.size):
        v = y[i]
        if i == wrap_idx:
            v -= shift
        acc += normal[i] * v
    return acc


@njit(cache=True)
def _refine_root(F, y_old, h, normal, offset, wrap_idx, period, shift, fa, fb, ttol):
    """Illinois regula falsi on the step interpolant, fraction in [0, 1]."""
    a = 0.0
    b = 1.0
    side = 0
    x = 0.0
    for _ in range(200):
        x = (a * fb - b * fa) / (fb - fa)
        val = _plane_value(dense_eval(F, y_old, x), normal, offset, wrap_idx, period, shift)
        if val == 0.0:
            return x
        if (val > 0) == (fb > 0):
            b = x
            fb = val
            if side == -1:
                fa *= 0.5
            side = -1
        else:
            a = x
            fa = val
            if side == 1:
                fb *= 0.5
            side = 1
        if abs(b - a) * abs(h) <= ttol:
            break
    return x


@njit((_RHS, _INSIDE, _VEC, _VEC, _F, _F, _F, _F, _I, _VEC, _F, _I, _I, _F, types.boolean, _F),
      cache=True)
def integrate_to_crossing(rhs, inside, prm, y0, t0, t_max, rtol, atol, max_steps,
                          normal, offset, direction, wrap_idx, period, skip_first,
                          ttol):
    """Integrate until the linear function ``normal . y - offset`` changes sign.

    ``direction`` is +1 (increasing), -1 (decreasing) or 0 (either).  When
    ``wrap_idx >= 0`` that component is reduced modulo ``period`` into
    ``[0, period)`` with the branch frozen over each step, so the crossing
    test is continuous inside a step.  With ``skip_first`` set, a root at the
    starting point itself is ignored.

    Returns ``(status, t_event, y_event, n_steps)``.
    """
    n = y0.size
    tdir = 1.0 if t_max >= t0 else -1.0
    K = np.empty((N_EXT, n))
    ytmp = np.empty(n)
    t = t0
    y = y0.copy()
    f = np.empty(n)
    rhs(t, y, prm, f)
    h_abs = _initial_step(rhs, prm, t0, y0, f, tdir, rtol, atol, abs(t_max - t0))
    for k in range(max_steps):
        if tdir * (t_max - t) <= 0:
            return STATUS_NO_EVENT, t, y, k
        ok, t_new, y_new, h, h_abs = _attempt(rhs, prm, t, y, f, h_abs, tdir,
                                              t_max, rtol, atol, K, ytmp)
        if not ok:
            return STATUS_STEP_COLLAPSE, t, y, k
        shift = 0.0
        if wrap_idx >= 0:
            shift = np.floor(y[wrap_idx] / period) * period
        fa = _plane_value(y, normal, offset, wrap_idx, period, shift)
        fb = _plane_value(y_new, normal, offset, wrap_idx, period, shift)
        if k == 0 and skip_first:
            fa = 0.0
        crossing = False
        if fa != 0.0 and ((fa < 0.0 and fb >= 0.0) or (fa > 0.0 and fb <= 0.0)):
            # orientation is judged in time, so flip for backward runs
            rising = (fb > fa) == (tdir > 0)
            if direction == 0 or (direction > 0 and rising) or (direction < 0 and not rising):
                crossing = True
        f_new = K[N_STAGES].copy()
        if crossing:
            F = _dense_coeffs(rhs, prm, t, h, y, y_new, f_new, K, ytmp)
            if fb == 0.0:
                return STATUS_EVENT, t_new, y_new, k + 1
            x = _refine_root(F, y, h, normal, offset, wrap_idx, period, shift, fa, fb, ttol)
            return STATUS_EVENT, t + x * h, dense_eval(F, y, x), k + 1
        t = t_new
        y = y_new
        f = f_new
        if not inside(y, prm):
            return STATUS_DOMAIN, t, y, k + 1
    return STATUS_MAX_STEPS, t, y, max_steps
