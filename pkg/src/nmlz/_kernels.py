"""Compiled integrators for Y' = L(t) Y with L = -i H(t) or its rotating-frame form.

Two schemes share one generator:

* ``gauss6``: 3-stage Gauss-Legendre collocation (order 6), step-doubling
  error control, compensated state update. Gauss methods conserve quadratic
  invariants, so Y^dag Sigma Y = Sigma is kept to rounding.
* ``dop853``: explicit embedded Runge-Kutta 8(5,3), tableau from scipy.

Both integrate all N columns at once and write the state at each requested
output time. Status codes: 0 ok, 1 step size underflow, 2 step budget exhausted.
"""

import numpy as np
import numba as nb
from scipy.integrate._ivp import dop853_coefficients as _dop

_R15 = np.sqrt(15.0)
GL_A = np.array(
    [
        [5 / 36, 2 / 9 - _R15 / 15, 5 / 36 - _R15 / 30],
        [5 / 36 + _R15 / 24, 2 / 9, 5 / 36 - _R15 / 24],
        [5 / 36 + _R15 / 30, 2 / 9 + _R15 / 15, 5 / 36],
    ]
)
GL_B = np.array([5 / 18, 4 / 9, 5 / 18])
GL_C = np.array([0.5 - _R15 / 10, 0.5, 0.5 + _R15 / 10])

DOP_A = np.ascontiguousarray(_dop.A[:12, :12])
DOP_B = np.ascontiguousarray(_dop.B)
DOP_C = np.ascontiguousarray(_dop.C[:12])
DOP_E3 = np.ascontiguousarray(_dop.E3)
DOP_E5 = np.ascontiguousarray(_dop.E5)

MAX_STEPS = 20_000_000


@nb.njit(cache=True)
def generator(t, slopes, offsets, coupling, interaction, out):
    """Fill ``out`` with L(t).

    Direct picture: L = -i (diag(s t + e) + C).
    Interaction picture: L_kl = -i C_kl exp(i (theta_k - theta_l)),
    theta_k = s_k t^2 / 2 + e_k t; phase differences are formed before
    the exponential to keep their rounding small.
    """
    n = slopes.shape[0]
    if interaction:
        for i in range(n):
            for k in range(n):
                c = coupling[i, k]
                if c == 0:
                    out[i, k] = 0.0
                else:
                    dth = 0.5 * (slopes[i] - slopes[k]) * t * t + (offsets[i] - offsets[k]) * t
                    out[i, k] = -1j * c * (np.cos(dth) + 1j * np.sin(dth))
    else:
        for i in range(n):
            for k in range(n):
                out[i, k] = -1j * coupling[i, k]
            out[i, i] += -1j * (slopes[i] * t + offsets[i])


@nb.njit(cache=True)
def _gl_increment(t, h, Y, slopes, offsets, coupling, interaction, A, B, C):
    """Increment Y_{n+1} - Y_n of one Gauss-Legendre step (linear stage system solved exactly)."""
    n = Y.shape[0]
    m = Y.shape[1]
    ls = np.empty((3, n, n), dtype=np.complex128)
    for q in range(3):
        generator(t + C[q] * h, slopes, offsets, coupling, interaction, ls[q])
    big = np.zeros((3 * n, 3 * n), dtype=np.complex128)
    rhs = np.empty((3 * n, m), dtype=np.complex128)
    for q in range(3):
        for p in range(3):
            for i in range(n):
                for k in range(n):
                    big[q * n + i, p * n + k] = -h * A[q, p] * ls[q, i, k]
        for i in range(n):
            big[q * n + i, q * n + i] += 1.0
        rhs[q * n:(q + 1) * n, :] = ls[q] @ Y
    stages = np.linalg.solve(big, rhs)
    inc = np.zeros((n, m), dtype=np.complex128)
    for q in range(3):
        inc += (h * B[q]) * stages[q * n:(q + 1) * n, :]
    return inc


@nb.njit(cache=True)
def gauss6(times, Y0, slopes, offsets, coupling, interaction, rtol, atol, h0, out):
    n = Y0.shape[0]
    m = Y0.shape[1]
    Y = Y0.copy()
    comp = np.zeros_like(Y)  # Kahan compensation for Y
    out[0] = Y
    t = times[0]
    h = h0
    accepted = 0
    rejected = 0
    for seg in range(1, times.shape[0]):
        t_end = times[seg]
        while t < t_end:
            last = False
            if t + h >= t_end:
                h = t_end - t
                last = True
            if h <= 1e-13 * max(1.0, abs(t)):
                return 1, t, accepted, rejected
            full = _gl_increment(t, h, Y, slopes, offsets, coupling, interaction, GL_A, GL_B, GL_C)
            d1 = _gl_increment(t, 0.5 * h, Y, slopes, offsets, coupling, interaction, GL_A, GL_B, GL_C)
            d2 = _gl_increment(t + 0.5 * h, 0.5 * h, Y + d1, slopes, offsets, coupling, interaction, GL_A, GL_B, GL_C)
            halves = d1 + d2
            err = 0.0
            for i in range(n):
                for j in range(m):
                    sc = atol + rtol * max(abs(Y[i, j]), abs(Y[i, j] + halves[i, j]))
                    e = abs(halves[i, j] - full[i, j]) / 63.0 / sc
                    err += e * e
            err = np.sqrt(err / (n * m))
            if err <= 1.0:
                d = halves + comp
                y_new = Y + d
                comp = d - (y_new - Y)
                Y = y_new
                t = t_end if last else t + h
                accepted += 1
                if accepted > MAX_STEPS:
                    return 2, t, accepted, rejected
                h *= min(4.0, 0.9 * max(err, 1e-12) ** (-1.0 / 7.0))
            else:
                rejected += 1
                h *= max(0.2, 0.9 * err ** (-1.0 / 7.0))
        out[seg] = Y + comp
    return 0, t, accepted, rejected


@nb.njit(cache=True)
def dop853(times, Y0, slopes, offsets, coupling, interaction, rtol, atol, h0, out):
    n = Y0.shape[0]
    m = Y0.shape[1]
    ns = 12
    Y = Y0.copy()
    out[0] = Y
    t = times[0]
    h = h0
    K = np.empty((ns + 1, n, m), dtype=np.complex128)
    L = np.empty((n, n), dtype=np.complex128)
    generator(t, slopes, offsets, coupling, interaction, L)
    K[0] = L @ Y
    accepted = 0
    rejected = 0
    for seg in range(1, times.shape[0]):
        t_end = times[seg]
        while t < t_end:
            last = False
            if t + h >= t_end:
                h = t_end - t
                last = True
            if h <= 1e-13 * max(1.0, abs(t)):
                return 1, t, accepted, rejected
            for s in range(1, ns):
                dy = np.zeros((n, m), dtype=np.complex128)
                for j in range(s):
                    dy += DOP_A[s, j] * K[j]
                generator(t + DOP_C[s] * h, slopes, offsets, coupling, interaction, L)
                K[s] = L @ (Y + h * dy)
            dy = np.zeros((n, m), dtype=np.complex128)
            for j in range(ns):
                dy += DOP_B[j] * K[j]
            y_new = Y + h * dy
            generator(t + h, slopes, offsets, coupling, interaction, L)
            K[ns] = L @ y_new
            err5 = 0.0
            err3 = 0.0
            for i in range(n):
                for j in range(m):
                    sc = atol + rtol * max(abs(Y[i, j]), abs(y_new[i, j]))
                    e5 = 0.0j
                    e3 = 0.0j
                    for q in range(ns + 1):
                        e5 += DOP_E5[q] * K[q, i, j]
                        e3 += DOP_E3[q] * K[q, i, j]
                    err5 += abs(e5 / sc) ** 2
                    err3 += abs(e3 / sc) ** 2
            if err5 == 0.0 and err3 == 0.0:
                err = 0.0
            else:
                den = err5 + 0.01 * err3
                err = abs(h) * err5 / np.sqrt(den * n * m)
            if err <= 1.0:
                Y = y_new
                t = t_end if last else t + h
                K[0] = K[ns]
                accepted += 1
                if accepted > MAX_STEPS:
                    return 2, t, accepted, rejected
                h *= min(10.0, 0.9 * max(err, 1e-12) ** (-1.0 / 8.0))
            else:
                rejected += 1
                h *= max(0.2, 0.9 * err ** (-1.0 / 8.0))
        out[seg] = Y
    return 0, t, accepted, rejected
