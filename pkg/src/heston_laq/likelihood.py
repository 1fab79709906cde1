"""Log-likelihood ratios between drift parameters and their exact quadratic
decomposition ``log L = h'Delta - h'Jh/2`` under a scaling matrix ``r``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functionals import FLOOR_EPS, MissingIncrementsError, PathFunctionals, functionals
from .model import DriftParams, FixedCoeffs, ParameterError, diffusion_matrices, kron_info
from .sde import SamplePath


@dataclass(frozen=True)
class QuadDecomposition:
    log_lr: float
    delta: np.ndarray
    info: np.ndarray
    scaling: np.ndarray
    h: np.ndarray

    @property
    def quadratic(self) -> float:
        """``h'Delta - h'Jh/2`` for the stored ``h``."""
        return float(self.h @ self.delta - 0.5 * self.h @ self.info @ self.h)

    @property
    def residual(self) -> float:
        return self.log_lr - self.quadratic


def _diag(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return np.diag(r).copy() if r.ndim == 2 else r


def _check_a(theta: DriftParams, fixed: FixedCoeffs):
    if theta.a < 0.5 * fixed.sigma1**2:
        raise ParameterError(f"a={theta.a} below sigma1^2/2={0.5 * fixed.sigma1**2}")


def log_rn(path: SamplePath, theta: DriftParams, theta_tilde: DriftParams, floor_eps: float = FLOOR_EPS) -> float:
    """``log dP_{theta~,T} / dP_{theta,T}`` evaluated on the observed path.

    Uses only ``Y`` and ``X`` (left-point sums with raw increments), so it
    applies to paths from any scheme.
    """
    fixed = path.fixed
    _check_a(theta, fixed)
    _check_a(theta_tilde, fixed)
    S_inv = diffusion_matrices(fixed).S_inv
    y = path.Y[:-1]
    inv = 1.0 / np.maximum(y, floor_eps)
    dt = path.dt
    m = np.stack([theta.a - theta.b * y, theta.alpha - theta.beta * y])
    mt = np.stack([theta_tilde.a - theta_tilde.b * y, theta_tilde.alpha - theta_tilde.beta * y])
    d = mt - m
    obs = np.stack([np.diff(path.Y), np.diff(path.X)])
    Sd = S_inv @ d
    first = np.sum(inv * np.sum(Sd * obs, axis=0))
    second = np.sum(inv * np.sum(Sd * (mt + m), axis=0)) * dt
    return float(first - 0.5 * second)


def log_rn_functionals(f: PathFunctionals, theta: DriftParams, theta_tilde: DriftParams,
                       fixed: FixedCoeffs) -> np.ndarray:
    """Same quantity as :func:`log_rn`, expressed through sufficient statistics.

    Works elementwise on batched functionals.
    """
    S_inv = diffusion_matrices(fixed).S_inv
    t, s = theta.as_array(), theta_tilde.as_array()
    d0, d1 = s[:2] - t[:2], s[2:] - t[2:]
    p0, p1 = s[:2] + t[:2], s[2:] + t[2:]
    first = (d0 @ S_inv @ np.array([1.0, 0.0]) * f.dy_over_y + d0 @ S_inv @ np.array([0.0, 1.0]) * f.dx_over_y
             - (d1 @ S_inv @ np.array([1.0, 0.0])) * (f.Y_T - f.y0) - (d1 @ S_inv @ np.array([0.0, 1.0])) * (f.X_T - f.x0))
    second = (d0 @ S_inv @ p0) * f.int_invY - (d0 @ S_inv @ p1 + d1 @ S_inv @ p0) * f.T + (d1 @ S_inv @ p1) * f.int_Y
    return first - 0.5 * second


def delta_brownian(f: PathFunctionals, fixed: FixedCoeffs, r) -> np.ndarray:
    """``Delta = r (I2 kron L^{-T}) [iw_inv, ib_inv, -iw_sqrt, -ib_sqrt]``."""
    if not f.has_increments:
        raise MissingIncrementsError("brownian mode needs stored increments")
    LiT = diffusion_matrices(fixed).L_inv_T
    top = np.stack([f.iw_inv, f.ib_inv], -1) @ LiT.T
    bot = -np.stack([f.iw_sqrt, f.ib_sqrt], -1) @ LiT.T
    return _diag(r) * np.concatenate([top, bot], -1)


def delta_observable(f: PathFunctionals, theta: DriftParams, fixed: FixedCoeffs, r) -> np.ndarray:
    """Delta from observable sums: ``r [S^{-1} u; -S^{-1} v]`` with
    ``u = int (dObs - m ds)/Y`` and ``v = int (dObs - m ds)``."""
    S_inv = diffusion_matrices(fixed).S_inv
    u = np.stack([f.dy_over_y - theta.a * f.int_invY + theta.b * f.T,
                  f.dx_over_y - theta.alpha * f.int_invY + theta.beta * f.T], -1)
    v = np.stack([f.Y_T - f.y0 - theta.a * f.T + theta.b * f.int_Y,
                  f.X_T - f.x0 - theta.alpha * f.T + theta.beta * f.int_Y], -1)
    return _diag(r) * np.concatenate([u @ S_inv, -(v @ S_inv)], -1)


def info_matrix(f: PathFunctionals, fixed: FixedCoeffs, r) -> np.ndarray:
    """``J = r ([[int 1/Y, -T], [-T, int Y]] kron S^{-1}) r``."""
    rd = _diag(r)
    K = kron_info(f.gram(), diffusion_matrices(fixed).S_inv)
    return rd[:, None] * K * rd[None, :]


def delta_from_observables(path: SamplePath, theta: DriftParams, r, floor_eps: float = FLOOR_EPS) -> np.ndarray:
    """Delta assembled from increments reconstructed out of ``(Y, X)``.

    ``[dW; dB]_i = L^{-1} [dY_i - (a - b Y_i)dt; dX_i - (alpha - beta Y_i)dt] / sqrt(Y_i)``.
    """
    mats = diffusion_matrices(path.fixed)
    y = np.maximum(path.Y[:-1], floor_eps)
    dt = path.dt
    res = np.stack([np.diff(path.Y) - (theta.a - theta.b * path.Y[:-1]) * dt,
                    np.diff(path.X) - (theta.alpha - theta.beta * path.Y[:-1]) * dt])
    dz = (mats.L_inv @ res) / np.sqrt(y)
    sq = np.sqrt(y)
    M = np.concatenate([np.sum(dz / sq, axis=1), -np.sum(dz * sq, axis=1)])
    LiT = mats.L_inv_T
    return _diag(r) * np.concatenate([LiT @ M[:2], LiT @ M[2:]])


def quad_decomposition(path: SamplePath, theta: DriftParams, r, h, mode: str = "brownian",
                       floor_eps: float = FLOOR_EPS) -> QuadDecomposition:
    """Quadratic decomposition of ``log_rn(theta, theta + r h)``.

    ``mode`` picks how Delta is computed: ``"brownian"`` from the stored
    increments, ``"observable"`` from the path alone. ``log_lr`` is evaluated
    independently by :func:`log_rn`, so ``residual`` measures the identity.
    """
    rd = _diag(r)
    h = np.asarray(h, dtype=float)
    if np.any(rd <= 0):
        raise ParameterError("scaling must be diagonal positive")
    fixed = path.fixed
    _check_a(theta, fixed)
    shifted = theta.shifted(rd, h)
    _check_a(shifted, fixed)
    f = functionals(path, floor_eps, warn=False)
    if mode == "brownian":
        delta = delta_brownian(f, fixed, rd)
    elif mode == "observable":
        delta = delta_from_observables(path, theta, rd, floor_eps)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    info = info_matrix(f, fixed, rd)
    return QuadDecomposition(log_rn(path, theta, shifted, floor_eps), delta, info, np.diag(rd), h)
