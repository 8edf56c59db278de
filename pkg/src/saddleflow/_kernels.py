"""Compiled inner loop for state spaces that are boxes (incl. R^n and orthants)."""

import numpy as np
from numba import njit

STATUS_HORIZON = 0
STATUS_EQUILIBRIUM = 1
STATUS_ERROR = 2

SCHEME_PROJECTED_EULER = 0
SCHEME_TANGENT_STEP = 1

EQUILIBRIUM_RUN = 10


@njit(cache=True, nogil=True)
def saddle_field_box(z, n, Q0, q0, Qg, Ag, bg, rho, tau_x, tau_mu, out):
    m = bg.shape[0]
    x = z[:n]
    gx = Q0 @ x + q0
    for i in range(m):
        gi_grad = Qg[i] @ x + Ag[i]
        gi = 0.5 * (x @ (Qg[i] @ x)) + Ag[i] @ x - bg[i]
        weight = z[n + i] + rho * max(0.0, gi)
        gx += weight * gi_grad
        out[n + i] = gi / tau_mu
    for j in range(n):
        out[j] = -gx[j] / tau_x


@njit(cache=True, nogil=True)
def tangent_box(z, v, lower, upper, eps_act, out):
    for j in range(z.shape[0]):
        w = v[j]
        if abs(z[j] - lower[j]) <= eps_act and w < 0.0:
            w = 0.0
        if abs(upper[j] - z[j]) <= eps_act and w > 0.0:
            w = 0.0
        out[j] = w


@njit(cache=True, nogil=True)
def integrate_box(z0, n, Q0, q0, Qg, Ag, bg, rho, tau_x, tau_mu, lower, upper,
                  h, n_steps, scheme, stride, eq_tol, eps_act, zref, has_ref, weights,
                  out_t, out_z, out_diss, out_lasalle, out_fnorm):
    """Fixed-step projected Euler; returns ``(n_records, status, error_step)``."""
    dim = z0.shape[0]
    z = z0.copy()
    F = np.empty(dim)
    w = np.empty(dim)
    n_rec = 0
    small_run = 0
    status = STATUS_HORIZON
    err_step = -1
    k = 0
    while True:
        saddle_field_box(z, n, Q0, q0, Qg, Ag, bg, rho, tau_x, tau_mu, F)
        record = (k % stride == 0) or (k == n_steps)
        if record:
            tangent_box(z, F, lower, upper, eps_act, w)
            out_t[n_rec] = k * h
            out_z[n_rec] = z
            fn = np.sqrt(w @ w)
            out_fnorm[n_rec] = fn
            if has_ref:
                d = 0.0
                v = 0.0
                for j in range(dim):
                    e = z[j] - zref[j]
                    d += weights[j] * e * w[j]
                    v += weights[j] * e * e
                out_diss[n_rec] = d
                out_lasalle[n_rec] = v
            else:
                out_diss[n_rec] = np.nan
                out_lasalle[n_rec] = np.nan
            n_rec += 1
            if fn <= eq_tol:
                small_run += 1
            else:
                small_run = 0
            if small_run >= EQUILIBRIUM_RUN:
                status = STATUS_EQUILIBRIUM
                break
        if k == n_steps:
            break
        if scheme == SCHEME_TANGENT_STEP:
            if not record:
                tangent_box(z, F, lower, upper, eps_act, w)
            for j in range(dim):
                F[j] = w[j]
        for j in range(dim):
            zj = z[j] + h * F[j]
            if zj < lower[j]:
                zj = lower[j]
            if zj > upper[j]:
                zj = upper[j]
            z[j] = zj
        k += 1
        finite = True
        for j in range(dim):
            if not np.isfinite(z[j]):
                finite = False
        if not finite:
            status = STATUS_ERROR
            err_step = k
            break
    return n_rec, status, err_step
