"""Parameter containers, regime classification and the fixed diffusion matrices."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Regime(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


class Domain(enum.Enum):
    INTERIOR = "interior"
    BOUNDARY = "boundary"
    INVALID = "invalid"


class ParameterError(ValueError):
    """Raised when drift or diffusion parameters fall outside the admissible set."""


def _coerce(obj, names):
    for name in names:
        object.__setattr__(obj, name, float(getattr(obj, name)))


def _finite(**values):
    for name, v in values.items():
        if not np.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class FixedCoeffs:
    """Known diffusion coefficients and initial state.

    Parameters
    ----------
    sigma1, sigma2 : float
        Volatility of the variance and of the log-price, both positive.
    rho : float
        Correlation of the two driving Brownian motions, in (-1, 1).
    y0 : float
        Initial variance, positive.
    x0 : float
        Initial log-price.
    """

    sigma1: float = 1.0
    sigma2: float = 1.0
    rho: float = 0.0
    y0: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        _coerce(self, ("sigma1", "sigma2", "rho", "y0", "x0"))
        _finite(sigma1=self.sigma1, sigma2=self.sigma2, rho=self.rho, y0=self.y0, x0=self.x0)
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ParameterError("sigma1 and sigma2 must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ParameterError("rho must lie strictly inside (-1, 1)")
        if self.y0 <= 0:
            raise ParameterError("y0 must be positive")


@dataclass(frozen=True)
class DriftParams:
    """Drift vector theta = (a, alpha, b, beta).

    ``Y`` has drift ``a - b Y`` and ``X`` has drift ``alpha - beta Y``.
    """

    a: float
    alpha: float = 0.0
    b: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        _coerce(self, ("a", "alpha", "b", "beta"))
        _finite(a=self.a, alpha=self.alpha, b=self.b, beta=self.beta)
        if self.a <= 0:
            raise ParameterError("a must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.alpha, self.b, self.beta], dtype=float)

    @classmethod
    def from_array(cls, v) -> "DriftParams":
        v = np.asarray(v, dtype=float)
        if v.shape != (4,):
            raise ValueError("drift vector must have four entries")
        return cls(*map(float, v))

    def shifted(self, r, h) -> "DriftParams":
        """Return theta + r h for a diagonal scaling ``r`` (matrix or diagonal)."""
        r = np.asarray(r, dtype=float)
        rd = np.diag(r) if r.ndim == 2 else r
        return DriftParams.from_array(self.as_array() + rd * np.asarray(h, dtype=float))

    @property
    def regime(self) -> Regime:
        return classify_regime(self.b)


@dataclass(frozen=True)
class DiffusionMatrices:
    """Lower-triangular factor ``L`` with ``S = L L^T`` and its inverse."""

    L: np.ndarray
    S: np.ndarray
    S_inv: np.ndarray
    L_inv: np.ndarray = field(repr=False)

    @property
    def L_inv_T(self) -> np.ndarray:
        return self.L_inv.T


def classify_regime(b: float) -> Regime:
    if b > 0:
        return Regime.SUBCRITICAL
    if b < 0:
        return Regime.SUPERCRITICAL
    if b == 0:
        return Regime.CRITICAL
    raise ParameterError(f"cannot classify b={b!r}")


def inv2(m: np.ndarray) -> np.ndarray:
    """Closed-form inverse of a 2x2 matrix."""
    (p, q), (r, s) = m
    det = p * s - q * r
    if det == 0:
        raise np.linalg.LinAlgError("singular 2x2 matrix")
    return np.array([[s, -q], [-r, p]], dtype=float) / det


def diffusion_matrices(fixed: FixedCoeffs) -> DiffusionMatrices:
    s1, s2, rho = fixed.sigma1, fixed.sigma2, fixed.rho
    c = math.sqrt(1.0 - rho * rho)
    L = np.array([[s1, 0.0], [s2 * rho, s2 * c]])
    S = np.array([[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]])
    L_inv = np.array([[1.0 / s1, 0.0], [-rho / (s1 * c), 1.0 / (s2 * c)]])
    for a in (L, S, L_inv):
        a.setflags(write=False)
    S_inv = inv2(S)
    S_inv.setflags(write=False)
    return DiffusionMatrices(L=L, S=S, S_inv=S_inv, L_inv=L_inv)


def parameter_domain_check(a: float, sigma1: float, regime: Regime | None = None) -> Domain:
    """Place ``a`` relative to the bound ``sigma1**2 / 2``.

    The boundary value is reported as ``BOUNDARY`` only for the supercritical
    regime, the one case where likelihood operations accept it.
    """
    if sigma1 <= 0:
        raise ParameterError("sigma1 must be positive")
    bound = 0.5 * sigma1 * sigma1
    if a > bound:
        return Domain.INTERIOR
    if a == bound and regime is Regime.SUPERCRITICAL:
        return Domain.BOUNDARY
    return Domain.INVALID


def require_admissible(theta: DriftParams, fixed: FixedCoeffs, allow_boundary: bool | None = None):
    """Raise ``ParameterError`` unless ``theta.a`` is usable for likelihood work.

    ``allow_boundary`` defaults to "only when theta is supercritical".
    """
    if allow_boundary is None:
        allow_boundary = theta.regime is Regime.SUPERCRITICAL
    regime = Regime.SUPERCRITICAL if allow_boundary else theta.regime
    dom = parameter_domain_check(theta.a, fixed.sigma1, regime)
    if dom is Domain.INVALID:
        raise ParameterError(
            f"a={theta.a} is not admissible for sigma1={fixed.sigma1} "
            f"(need a > sigma1^2/2{' or equality' if allow_boundary else ''})"
        )
    return dom


def kron_info(block: np.ndarray, S_inv: np.ndarray) -> np.ndarray:
    """``block (x) S_inv`` for a 2x2 ``block``; supports stacked leading axes."""
    block = np.asarray(block, dtype=float)
    out = block[..., :, None, :, None] * S_inv[None, :, None, :]
    return out.reshape(block.shape[:-2] + (4, 4))
