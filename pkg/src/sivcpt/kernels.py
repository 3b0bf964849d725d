"""Numeric inner loops: adaptive Dormand-Prince stepping for constant linear
systems and Gaussian elimination with partial pivoting.

Both functions are compiled by numba unless ``SIVCPT_NUMBA=0``; see
:mod:`sivcpt._jit`.  Status codes are returned instead of raised so the
compiled path stays in nopython mode; callers translate them.
"""

import numpy as np

from ._jit import njit

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)


@njit
def _error_norm(err, y, y_new, rtol, atol):
    acc = 0.0
    for i in range(y.shape[0]):
        sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        acc += (err[i] / sc) ** 2
    return np.sqrt(acc / y.shape[0])


@njit
def integrate_linear(m, y0, t_out, rtol, atol, max_steps):
    """Integrate ``dy/dt = m @ y`` from t = 0, reporting y at each ``t_out``.

    Steps are shortened to land exactly on every output time.  Returns
    ``(ys, status, t_fail, n_steps)``.
    """
    n = y0.shape[0]
    n_out = t_out.shape[0]
    ys = np.zeros((n_out, n))
    y = y0.copy()
    t = 0.0
    k1 = np.dot(m, y)

    # Hairer's starting-step heuristic
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (k1[i] / sc) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6 * max(t_out[n_out - 1], 1e-300)
    else:
        h = 0.01 * d0 / d1

    n_steps = 0
    j = 0
    while j < n_out and t_out[j] <= 0.0:
        ys[j] = y
        j += 1

    while j < n_out:
        if n_steps >= max_steps:
            return ys, STATUS_MAX_STEPS, t, n_steps
        target = t_out[j]
        hit = False
        h_try = h
        if t + h_try >= target:
            h_try = target - t
            hit = True
        if h_try <= 1e-14 * max(abs(t), 1e-300) or h_try < 1e-300:
            return ys, STATUS_STEP_UNDERFLOW, t, n_steps

        k2 = np.dot(m, y + h_try * (_A21 * k1))
        k3 = np.dot(m, y + h_try * (_A31 * k1 + _A32 * k2))
        k4 = np.dot(m, y + h_try * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = np.dot(m, y + h_try * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = np.dot(m, y + h_try * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        y_new = y + h_try * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
        k7 = np.dot(m, y_new)
        err = h_try * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        en = _error_norm(err, y, y_new, rtol, atol)
        n_steps += 1

        if en <= 1.0:
            t = target if hit else t + h_try
            y = y_new
            k1 = k7
            if hit:
                ys[j] = y
                j += 1
            fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
            # a clamped step says little about the natural step size
            if not hit:
                h = h_try * fac
            elif fac < 1.0:
                h = min(h, h_try * fac)
        else:
            h = h_try * max(0.2, 0.9 * en ** -0.2)
    return ys, STATUS_OK, t, n_steps


@njit
def solve_pivoted(a, b):
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    Returns ``(x, min_abs_pivot)``; a zero pivot leaves x filled with nan.
    """
    n = a.shape[0]
    lu = a.copy()
    x = b.copy()
    min_pivot = np.inf
    for k in range(n):
        p = k
        best = abs(lu[k, k])
        for i in range(k + 1, n):
            if abs(lu[i, k]) > best:
                best = abs(lu[i, k])
                p = i
        if best < min_pivot:
            min_pivot = best
        if best == 0.0:
            x[:] = np.nan
            return x, 0.0
        if p != k:
            for c in range(n):
                tmp = lu[k, c]
                lu[k, c] = lu[p, c]
                lu[p, c] = tmp
            tmp = x[k]
            x[k] = x[p]
            x[p] = tmp
        for i in range(k + 1, n):
            f = lu[i, k] / lu[k, k]
            if f != 0.0:
                for c in range(k, n):
                    lu[i, c] -= f * lu[k, c]
                x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        acc = x[k]
        for c in range(k + 1, n):
            acc -= lu[k, c] * x[c]
        x[k] = acc / lu[k, k]
    return x, min_pivot
