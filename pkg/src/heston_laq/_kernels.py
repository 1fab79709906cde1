"""Compiled inner loops for the Heston recursions.

All kernels consume pre-drawn noise, so the random stream layout is decided
in Python and the compiled code is deterministic arithmetic only.
"""
import math

import numpy as np
from numba import njit

# accumulator columns used by the batch kernels
INT_Y, INT_INVY, IW_INV, IB_INV, IW_SQRT, IB_SQRT, DY_OVER_Y, DX_OVER_Y = range(8)
N_ACC = 8


@njit(cache=True, nogil=True, inline="always")
def _euler_step(y, x, dw, db, a, alpha, b, beta, s1, s2, rho, rc, dt):
    yp = y if y > 0.0 else 0.0
    sy = math.sqrt(yp)
    yn = y + (a - b * yp) * dt + s1 * sy * dw
    if yn < 0.0:
        yn = 0.0
    xn = x + (alpha - beta * yp) * dt + s2 * sy * (rho * dw + rc * db)
    return yn, xn


@njit(cache=True, nogil=True, inline="always")
def _split_dw(y, z, g, a, b, s1, dt, sqdt):
    """Effective Brownian increment of one split step.

    The candidate ``c((z + sqrt(lam))^2 + g)`` has conditional mean equal to
    the Euler drift step, so the implied increment is centred with variance
    close to ``dt``.
    """
    if y <= 0.0:
        return z * sqdt
    c = 0.25 * s1 * s1 * dt
    lam = y * (1.0 - b * dt) / c
    u = z + math.sqrt(lam)
    cand = c * (u * u + g)
    return (cand - y - (a - b * y) * dt) / (s1 * math.sqrt(y))


@njit(cache=True, nogil=True)
def euler_path(y0, x0, a, alpha, b, beta, s1, s2, rho, dt, dW, dB, Y, X):
    rc = math.sqrt(1.0 - rho * rho)
    Y[0] = y0
    X[0] = x0
    for i in range(dW.shape[0]):
        Y[i + 1], X[i + 1] = _euler_step(Y[i], X[i], dW[i], dB[i], a, alpha, b, beta, s1, s2, rho, rc, dt)


@njit(cache=True, nogil=True)
def split_path(y0, x0, a, alpha, b, beta, s1, s2, rho, dt, z, g, nb, Y, X, dW, dB):
    rc = math.sqrt(1.0 - rho * rho)
    sqdt = math.sqrt(dt)
    Y[0] = y0
    X[0] = x0
    for i in range(z.shape[0]):
        dw = _split_dw(Y[i], z[i], g[i], a, b, s1, dt, sqdt)
        db = nb[i] * sqdt
        dW[i] = dw
        dB[i] = db
        Y[i + 1], X[i + 1] = _euler_step(Y[i], X[i], dw, db, a, alpha, b, beta, s1, s2, rho, rc, dt)


@njit(cache=True, nogil=True)
def accumulate_block(scheme, Y, X, z, g, a, alpha, b, beta, s1, s2, rho, dt, eps, acc, hits):
    """Advance ``M`` replicates by ``K`` steps and update running sums.

    ``scheme`` is 0 for Euler (``z`` holds standard normal pairs) and 1 for the
    split step (``z`` holds the chi-square normal and the B normal, ``g`` the
    chi-square remainder).
    """
    rc = math.sqrt(1.0 - rho * rho)
    sqdt = math.sqrt(dt)
    M, K = z.shape[0], z.shape[1]
    for m in range(M):
        y = Y[m]
        x = X[m]
        s_y = 0.0
        s_iy = 0.0
        s_wi = 0.0
        s_bi = 0.0
        s_ws = 0.0
        s_bs = 0.0
        s_dy = 0.0
        s_dx = 0.0
        nh = 0
        for k in range(K):
            if scheme == 0:
                dw = z[m, k, 0] * sqdt
            else:
                dw = _split_dw(y, z[m, k, 0], g[m, k], a, b, s1, dt, sqdt)
            db = z[m, k, 1] * sqdt
            yn, xn = _euler_step(y, x, dw, db, a, alpha, b, beta, s1, s2, rho, rc, dt)
            yc = y
            if yc < eps:
                yc = eps
                nh += 1
            sq = math.sqrt(yc)
            s_y += y
            s_iy += 1.0 / yc
            s_wi += dw / sq
            s_bi += db / sq
            s_ws += sq * dw
            s_bs += sq * db
            s_dy += (yn - y) / yc
            s_dx += (xn - x) / yc
            y = yn
            x = xn
        Y[m] = y
        X[m] = x
        acc[m, INT_Y] += s_y * dt
        acc[m, INT_INVY] += s_iy * dt
        acc[m, IW_INV] += s_wi
        acc[m, IB_INV] += s_bi
        acc[m, IW_SQRT] += s_ws
        acc[m, IB_SQRT] += s_bs
        acc[m, DY_OVER_Y] += s_dy
        acc[m, DX_OVER_Y] += s_dx
        hits[m] += nh


@njit(cache=True, nogil=True)
def cir_chi2_block(Y, S, z, g, b, s1, dt, keep):
    """Exact CIR transitions for ``M`` paths over ``K`` steps via
    ``c((z + sqrt(lam))^2 + chi2_{d-1})``; ``S`` collects left-point sums."""
    if b == 0.0:
        c = 0.25 * s1 * s1 * dt
        decay = 1.0
    else:
        c = 0.25 * s1 * s1 * (-math.expm1(-b * dt)) / b
        decay = math.exp(-b * dt)
    M, K = z.shape
    for m in range(M):
        y = Y[m]
        s = 0.0
        for k in range(K):
            s += y
            u = z[m, k] + math.sqrt(y * decay / c)
            y = c * (u * u + g[m, k])
            if keep.shape[0] > 0:
                keep[m, k] = y
        Y[m] = y
        S[m] += s * dt
