"""Integral functionals of a sample path and the pathwise identities used as
numerical self-checks.

Every integral is a left-point sum. The observable sums ``dy_over_y`` and
``dx_over_y`` together with ``int_Y``, ``int_invY``, ``T`` and the terminal
values are sufficient statistics for the discretised drift likelihood.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, fields

import numpy as np

from .model import DriftParams
from .sde import SamplePath

FLOOR_EPS = 1e-12


class FloorHitWarning(RuntimeWarning):
    pass


class FloorHitError(ValueError):
    pass


class MissingIncrementsError(ValueError):
    pass


@dataclass(frozen=True)
class PathFunctionals:
    """Integral functionals of one path, or of a batch when fields are arrays.

    Attributes
    ----------
    int_Y, int_invY : int Y ds and int ds / Y
    iw_inv, ib_inv : int dW / sqrt(Y) and int dB / sqrt(Y)
    iw_sqrt, ib_sqrt : int sqrt(Y) dW and int sqrt(Y) dB
    dy_over_y, dx_over_y : int dY / Y and int dX / Y on raw increments
    Y_T, X_T, y0, x0, T : boundary data
    floor_hits : number of left points with ``Y < floor_eps``
    """

    int_Y: np.ndarray | float
    int_invY: np.ndarray | float
    iw_inv: np.ndarray | float
    ib_inv: np.ndarray | float
    iw_sqrt: np.ndarray | float
    ib_sqrt: np.ndarray | float
    dy_over_y: np.ndarray | float
    dx_over_y: np.ndarray | float
    Y_T: np.ndarray | float
    X_T: np.ndarray | float
    y0: np.ndarray | float
    x0: np.ndarray | float
    T: float
    floor_hits: np.ndarray | int = 0

    @property
    def has_increments(self) -> bool:
        return bool(np.all(np.isfinite(self.iw_inv)))

    def take(self, idx) -> "PathFunctionals":
        """Sub-batch selection for array-valued functionals."""
        vals = {}
        for f in fields(self):
            v = getattr(self, f.name)
            vals[f.name] = v if f.name == "T" or np.ndim(v) == 0 else np.asarray(v)[idx]
        return PathFunctionals(**vals)

    def gram(self) -> np.ndarray:
        """``[[int 1/Y, -T], [-T, int Y]]`` with any leading batch axes."""
        T = np.broadcast_to(self.T, np.shape(self.int_Y))
        return np.stack([np.stack([self.int_invY, -T], -1), np.stack([-T, self.int_Y], -1)], -2)


def functionals(path: SamplePath, floor_eps: float = FLOOR_EPS, warn: bool = True) -> PathFunctionals:
    """Left-point integral functionals of ``path``.

    Stochastic integrals against ``W`` and ``B`` are NaN when the path does not
    carry increments. A ``FloorHitWarning`` is emitted when some ``Y_i``
    falls below ``floor_eps``; those points use ``floor_eps`` in ``1/Y``.
    """
    dt = path.dt
    y = path.Y[:-1]
    hits = int(np.count_nonzero(y < floor_eps))
    if hits and warn:
        warnings.warn(f"{hits} grid points below floor {floor_eps:g}", FloorHitWarning, stacklevel=2)
    yc = np.maximum(y, floor_eps)
    inv = 1.0 / yc
    sq = np.sqrt(yc)
    if path.has_increments:
        iw_inv, ib_inv = np.sum(path.dW / sq), np.sum(path.dB / sq)
        iw_sqrt, ib_sqrt = np.sum(sq * path.dW), np.sum(sq * path.dB)
    else:
        iw_inv = ib_inv = iw_sqrt = ib_sqrt = math.nan
    return PathFunctionals(
        int_Y=float(np.sum(y) * dt),
        int_invY=float(np.sum(inv) * dt),
        iw_inv=float(iw_inv), ib_inv=float(ib_inv),
        iw_sqrt=float(iw_sqrt), ib_sqrt=float(ib_sqrt),
        dy_over_y=float(np.sum(np.diff(path.Y) * inv)),
        dx_over_y=float(np.sum(np.diff(path.X) * inv)),
        Y_T=float(path.Y[-1]), X_T=float(path.X[-1]),
        y0=float(path.Y[0]), x0=float(path.X[0]),
        T=path.T, floor_hits=hits,
    )


def weight_values(weight, y: np.ndarray) -> np.ndarray:
    """Evaluate a weight tag on left points.

    ``weight`` is ``"one_over_Y"``, ``"const"``, a tuple ``("affine", c0, c1)``
    meaning ``(c0 + c1 Y) / Y``, or any callable of ``Y``.
    """
    if callable(weight):
        return np.asarray(weight(y), dtype=float)
    if weight == "one_over_Y":
        return 1.0 / y
    if weight == "const":
        return np.ones_like(y)
    if isinstance(weight, tuple) and weight[0] == "affine":
        _, c0, c1 = weight
        return (c0 + c1 * y) / y
    raise ValueError(f"unknown weight {weight!r}")


def observable_integrals(path: SamplePath, theta0: DriftParams, weight="one_over_Y",
                         floor_eps: float = FLOOR_EPS):
    """``(int w(Y)[dY - (a0 - b0 Y)ds], int w(Y)[dX - (alpha0 - beta0 Y)ds])``."""
    dt = path.dt
    y = np.maximum(path.Y[:-1], floor_eps)
    w = weight_values(weight, y)
    ry = np.diff(path.Y) - (theta0.a - theta0.b * path.Y[:-1]) * dt
    rx = np.diff(path.X) - (theta0.alpha - theta0.beta * path.Y[:-1]) * dt
    return float(np.sum(w * ry)), float(np.sum(w * rx))


def check_log_identity(path: SamplePath, a: float, b: float, floor_eps: float = FLOOR_EPS) -> float:
    """Residual of ``s1 int dW/sqrt(Y) = log Y_T - log y0 + (s1^2/2 - a) int ds/Y + bT``.

    Nonzero under discretisation; it shrinks as the grid is refined.
    """
    if not path.has_increments:
        raise MissingIncrementsError("log identity needs Brownian increments")
    if np.any(path.Y <= floor_eps):
        raise FloorHitError("path touches the floor; log identity not evaluable")
    f = functionals(path, floor_eps)
    s1 = path.fixed.sigma1
    rhs = math.log(f.Y_T) - math.log(f.y0) + (0.5 * s1 * s1 - a) * f.int_invY + b * f.T
    return s1 * f.iw_inv - rhs


def check_linear_identity(path: SamplePath, a: float, b: float) -> float:
    """Residual of ``s1 int sqrt(Y) dW = Y_T - y0 - aT + b int Y``.

    Zero up to rounding on Euler paths that never hit the truncation floor.
    """
    if not path.has_increments:
        raise MissingIncrementsError("linear identity needs Brownian increments")
    f = functionals(path, warn=False)
    s1 = path.fixed.sigma1
    return s1 * f.iw_sqrt - (f.Y_T - f.y0 - a * f.T + b * f.int_Y)
