"""Regime-specific scalings, the stationary CIR law, limit-law samplers and
closed-form Laplace oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .model import (DriftParams, FixedCoeffs, ParameterError, Regime, classify_regime,
                    diffusion_matrices, kron_info)
from .sde import as_rng, critical_limit_triplets, supercritical_limit_pairs

LIMIT_N_STEPS = 4000


def scaling_matrix(regime: Regime, theta: DriftParams, T: float) -> np.ndarray:
    """Diagonal 4x4 local scaling ``r_{theta,T}``.

    >>> scaling_matrix(Regime.SUBCRITICAL, DriftParams(1, 0, 1, 0), 4.0).diagonal()
    array([0.5, 0.5, 0.5, 0.5])
    """
    if T <= 0:
        raise ParameterError("T must be positive")
    if regime is Regime.SUBCRITICAL:
        d = np.full(4, 1.0 / math.sqrt(T))
    elif regime is Regime.CRITICAL:
        if T <= 1:
            raise ParameterError("critical scaling needs T > 1")
        s = 1.0 / math.sqrt(math.log(T))
        d = np.array([s, s, 1.0 / T, 1.0 / T])
    elif regime is Regime.SUPERCRITICAL:
        if not theta.b < 0:
            raise ParameterError("supercritical scaling needs b < 0")
        e = math.exp(0.5 * theta.b * T)
        d = np.array([1.0, 1.0, e, e])
    else:
        raise ValueError(regime)
    return np.diag(d)


@dataclass(frozen=True)
class GammaLaw:
    """Gamma law with ``shape`` and ``rate``; the CIR stationary distribution."""

    shape: float
    rate: float

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ParameterError("shape and rate must be positive")

    def moment(self, kappa: float) -> float:
        """``E Y^kappa = Gamma(shape + kappa) / (rate^kappa Gamma(shape))``, via log-Gamma."""
        if kappa <= -self.shape:
            raise ParameterError(f"moment of order {kappa} does not exist for shape {self.shape}")
        return math.exp(special.gammaln(self.shape + kappa) - special.gammaln(self.shape)
                        - kappa * math.log(self.rate))

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    def sample(self, rng, size) -> np.ndarray:
        return as_rng(rng).gamma(self.shape, 1.0 / self.rate, size)

    def cdf(self, x):
        return stats.gamma.cdf(x, self.shape, scale=1.0 / self.rate)


def stationary_law(a: float, b: float, sigma1: float) -> GammaLaw:
    if not b > 0:
        raise ParameterError("stationary law exists only for b > 0")
    return GammaLaw(2.0 * a / sigma1**2, 2.0 * b / sigma1**2)


def _subcritical_factor(theta: DriftParams, fixed: FixedCoeffs) -> np.ndarray:
    if classify_regime(theta.b) is not Regime.SUBCRITICAL:
        raise ParameterError("subcritical information needs b > 0")
    s2 = fixed.sigma1**2
    if not theta.a > 0.5 * s2:
        raise ParameterError("subcritical information needs a > sigma1^2/2")
    e_inv = 2.0 * theta.b / (2.0 * theta.a - s2)
    return np.array([[e_inv, -1.0], [-1.0, theta.a / theta.b]])


def subcritical_info(theta: DriftParams, fixed: FixedCoeffs) -> np.ndarray:
    """``[[E 1/Y_inf, -1], [-1, E Y_inf]] kron S^{-1}``."""
    return kron_info(_subcritical_factor(theta, fixed), diffusion_matrices(fixed).S_inv)


def chol2(m: np.ndarray) -> np.ndarray:
    """Closed-form lower Cholesky factor of a 2x2 SPD matrix."""
    l11 = math.sqrt(m[0, 0])
    l21 = m[1, 0] / l11
    l22 = math.sqrt(m[1, 1] - l21 * l21)
    return np.array([[l11, 0.0], [l21, l22]])


@dataclass(frozen=True)
class LimitDraw:
    """Draws of the limit pair ``(Delta, J)``.

    ``delta`` has shape ``(..., k)`` and ``info`` shape ``(..., k, k)``; a
    single draw has no leading axis.
    """

    delta: np.ndarray
    info: np.ndarray
    regime: Regime

    def __len__(self):
        return 1 if self.delta.ndim == 1 else self.delta.shape[0]

    def laqdj(self, h) -> np.ndarray:
        """``exp{h'Delta - h'Jh/2}`` per draw."""
        h = np.asarray(h, dtype=float)
        q = self.delta @ h - 0.5 * np.einsum("...i,...ij,...j->...", h, self.info, h)
        return np.exp(q)

    def block(self, idx) -> "LimitDraw":
        idx = np.asarray(idx)
        return LimitDraw(self.delta[..., idx], self.info[..., idx[:, None], idx[None, :]], self.regime)


def _squeeze(delta, info, regime, size):
    if size is None:
        return LimitDraw(delta[0], info[0], regime)
    return LimitDraw(delta, info, regime)


def sample_subcritical_limit(theta: DriftParams, fixed: FixedCoeffs, seed=0, size: int | None = None) -> LimitDraw:
    """``Delta ~ N4(0, J)`` with the constant information ``J``.

    The factor of ``A kron S^{-1}`` is ``chol(A) kron chol(S^{-1})``.
    """
    A = _subcritical_factor(theta, fixed)
    S_inv = diffusion_matrices(fixed).S_inv
    C = np.kron(chol2(A), chol2(S_inv))
    m = 1 if size is None else int(size)
    z = as_rng(seed).standard_normal((m, 4))
    J = kron_info(A, S_inv)
    return _squeeze(z @ C.T, np.broadcast_to(J, (m, 4, 4)), Regime.SUBCRITICAL, size)


def sample_critical_limit(theta: DriftParams, fixed: FixedCoeffs, n_steps: int = LIMIT_N_STEPS, seed=0,
                          size: int | None = None, method: str = "poisson") -> LimitDraw:
    """Limit pair of the critical regime.

    ``Delta = [(a - s1^2/2)^{-1/2} L^{-T} Z2 ; S^{-1}(a - Y_1, alpha - X_1)]`` and
    ``J = diag((a - s1^2/2)^{-1}, int_0^1 Y) kron S^{-1}``.
    """
    if theta.b != 0:
        raise ParameterError("critical limit needs b = 0")
    gap = theta.a - 0.5 * fixed.sigma1**2
    if gap <= 0:
        raise ParameterError("critical limit needs a > sigma1^2/2")
    mats = diffusion_matrices(fixed)
    m = 1 if size is None else int(size)
    rng = as_rng(seed)
    y1, iy, x1 = critical_limit_triplets(theta.a, theta.alpha, fixed, n_steps, rng, m, method)
    z2 = rng.standard_normal((m, 2))
    top = gap**-0.5 * z2 @ mats.L_inv
    bot = np.stack([theta.a - y1, theta.alpha - x1], -1) @ mats.S_inv
    A = np.zeros((m, 2, 2))
    A[:, 0, 0] = 1.0 / gap
    A[:, 1, 1] = iy
    return _squeeze(np.concatenate([top, bot], -1), kron_info(A, mats.S_inv), Regime.CRITICAL, size)


def sample_supercritical_limit(theta: DriftParams, fixed: FixedCoeffs, n_steps: int = LIMIT_N_STEPS, seed=0,
                               size: int | None = None, method: str = "poisson") -> LimitDraw:
    """Limit pair of the supercritical regime.

    ``Delta = (I2 kron L^{-T}) [V/s1, Z1, (-Y~/b)^{1/2} Z2]`` with
    ``V = log Y~ - log y0 - (a - s1^2/2) int Y~`` and
    ``J = diag(int Y~, -Y~/b) kron S^{-1}``, where ``Y~`` runs over ``[0, -1/b]``.
    """
    if not theta.b < 0:
        raise ParameterError("supercritical limit needs b < 0")
    s1 = fixed.sigma1
    mats = diffusion_matrices(fixed)
    m = 1 if size is None else int(size)
    rng = as_rng(seed)
    ye, iy = supercritical_limit_pairs(theta.a, s1, theta.b, fixed.y0, n_steps, rng, m, method)
    z = rng.standard_normal((m, 3))
    V = np.log(ye) - math.log(fixed.y0) - (theta.a - 0.5 * s1 * s1) * iy
    q = -ye / theta.b
    top = np.stack([V / s1, z[:, 0]], -1) @ mats.L_inv
    bot = np.sqrt(q)[:, None] * (z[:, 1:] @ mats.L_inv)
    A = np.zeros((m, 2, 2))
    A[:, 0, 0] = iy
    A[:, 1, 1] = q
    return _squeeze(np.concatenate([top, bot], -1), kron_info(A, mats.S_inv), Regime.SUPERCRITICAL, size)


def sample_limit(theta: DriftParams, fixed: FixedCoeffs, seed=0, size: int | None = None,
                 n_steps: int = LIMIT_N_STEPS, method: str = "poisson") -> LimitDraw:
    regime = classify_regime(theta.b)
    if regime is Regime.SUBCRITICAL:
        return sample_subcritical_limit(theta, fixed, seed, size)
    if regime is Regime.CRITICAL:
        return sample_critical_limit(theta, fixed, n_steps, seed, size, method)
    return sample_supercritical_limit(theta, fixed, n_steps, seed, size, method)


def cir_integral_laplace(a: float, sigma1: float, y0: float, t: float, mu: float) -> float:
    """``E exp{-2 mu^2 int_0^t Y~}`` for ``dY~ = a dt + s1 sqrt(Y~) dW``, ``Y~_0 = y0``.

    Equals ``cosh(s1 mu t)^{-2a/s1^2} exp{-(2 mu y0 / s1) tanh(s1 mu t)}``.
    The tanh term enters with a negative sign; with a positive sign the value
    could exceed 1, which a Laplace transform of a nonnegative variable cannot.
    """
    if mu < 0 or t <= 0:
        raise ParameterError("need mu >= 0 and t > 0")
    x = sigma1 * mu * t
    # log cosh without overflow
    log_cosh = x + math.log1p(math.exp(-2.0 * x)) - math.log(2.0)
    return math.exp(-2.0 * a / sigma1**2 * log_cosh - 2.0 * mu * y0 / sigma1 * math.tanh(x))


def laq_violation_value(theta: DriftParams, fixed: FixedCoeffs) -> float:
    """Closed form of ``E exp{h'Delta - h'Jh/2}`` at ``h = (0, 1, 0, 0)`` under
    the supercritical limit law: ``e^c E exp{-c int Y~}``, ``c = 1/(2 s2^2 (1 - rho^2))``."""
    if not theta.b < 0:
        raise ParameterError("violation value is defined for the supercritical regime")
    c = 1.0 / (2.0 * fixed.sigma2**2 * (1.0 - fixed.rho**2))
    return math.exp(c) * cir_integral_laplace(theta.a, fixed.sigma1, fixed.y0, -1.0 / theta.b, math.sqrt(0.5 * c))


def gaussian_mgf_check(v) -> float:
    """``E exp(v'Z) = exp(|v|^2 / 2)`` for standard normal ``Z``."""
    v = np.asarray(v, dtype=float)
    return float(np.exp(0.5 * v @ v))
