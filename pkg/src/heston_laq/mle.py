"""Closed-form drift MLE and the local asymptotic minimax experiment."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import simulate_functionals
from .functionals import FLOOR_EPS, PathFunctionals, functionals
from .limits import LIMIT_N_STEPS, sample_supercritical_limit, scaling_matrix
from .model import DriftParams, FixedCoeffs, ParameterError, Regime, classify_regime, diffusion_matrices
from .sde import SamplePath, Scheme, SeedSpec, as_rng, grid_steps

GRAM_TOL = 1e-12


class DegenerateGramError(ArithmeticError):
    pass


@dataclass(frozen=True)
class MleResult:
    """Estimate ``(a, alpha, b, beta)`` with the Gram matrix it came from.

    ``domain_flag`` is set when the estimated ``a`` is at or below
    ``sigma1^2/2``; the raw value is kept.
    """

    theta_hat: np.ndarray
    gram: np.ndarray
    conditioning: float
    domain_flag: bool


def _solve(f: PathFunctionals):
    """Batched normal equations; returns ``(theta_hat, det, ok)``."""
    iy, iiy, T = np.asarray(f.int_Y, float), np.asarray(f.int_invY, float), f.T
    det = iiy * iy - T * T
    ok = det > GRAM_TOL * iiy * iy
    safe = np.where(ok, det, 1.0)
    ry = (f.dy_over_y, -(f.Y_T - f.y0))
    rx = (f.dx_over_y, -(f.X_T - f.x0))
    # inverse of [[iiy, -T], [-T, iy]] is [[iy, T], [T, iiy]] / det
    a = (iy * ry[0] + T * ry[1]) / safe
    b = (T * ry[0] + iiy * ry[1]) / safe
    al = (iy * rx[0] + T * rx[1]) / safe
    be = (T * rx[0] + iiy * rx[1]) / safe
    return np.stack([a, al, b, be], -1), det, ok


def mle_from_functionals(f: PathFunctionals, fixed: FixedCoeffs) -> MleResult:
    th, det, ok = _solve(f)
    if not np.all(ok):
        raise DegenerateGramError(f"Gram determinant {det} too small")
    return MleResult(th, f.gram(), det, bool(np.any(th[..., 0] <= 0.5 * fixed.sigma1**2)))


def mle_drift(path: SamplePath, floor_eps: float = FLOOR_EPS) -> MleResult:
    """Maximiser over ``theta`` of the discretised log-likelihood of ``path``.

    Solves ``[[int 1/Y, -T], [-T, int Y]] (a, b) = (int dY/Y, -(Y_T - y0))`` and
    the same system for ``(alpha, beta)`` with ``X``.
    """
    f = functionals(path, floor_eps)
    res = mle_from_functionals(f, path.fixed)
    return MleResult(res.theta_hat, res.gram, float(res.conditioning), res.domain_flag)


def scaled_errors(f: PathFunctionals, theta: DriftParams, r):
    """``r^{-1}(theta_hat - theta)`` per replicate and a mask of usable rows."""
    th, _, ok = _solve(f)
    rd = np.diag(np.asarray(r, float)) if np.ndim(r) == 2 else np.asarray(r, float)
    return (th - theta.as_array()) / rd, ok


def scaled_error_distribution(regime: Regime, theta: DriftParams, fixed: FixedCoeffs, T: float, M: int, seed: int,
                              n_steps: int | None = None, scheme: Scheme | str = Scheme.SPLIT):
    """Matrix of scaled estimation errors, degenerate replicates dropped.

    Returns ``(errors, n_dropped)``.
    """
    if classify_regime(theta.b) is not regime:
        raise ParameterError("theta does not match the regime")
    n_steps = grid_steps(theta, T) if n_steps is None else n_steps
    f = simulate_functionals(theta, fixed, T, n_steps, seed, M=M, scheme=scheme)
    e, ok = scaled_errors(f, theta, scaling_matrix(regime, theta, T))
    return e[ok], int(np.count_nonzero(~ok))


def submodel_mle_b_beta(f: PathFunctionals, theta: DriftParams) -> np.ndarray:
    """MLE of ``(b, beta)`` with ``a`` and ``alpha`` known."""
    b = (theta.a * f.T - (f.Y_T - f.y0)) / f.int_Y
    beta = (theta.alpha * f.T - (f.X_T - f.x0)) / f.int_Y
    return np.stack([b, beta], -1)


@dataclass(frozen=True)
class Loss:
    """Bounded bowl-shaped loss.

    ``bounded_quadratic``: ``min(|x|^2, c)``. ``indicator``: ``1{|x| > c}``.
    """

    kind: str
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bounded_quadratic", "indicator"):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.c <= 0:
            raise ValueError("c must be positive")

    def __call__(self, x) -> np.ndarray:
        n2 = np.sum(np.asarray(x, float) ** 2, axis=-1)
        if self.kind == "bounded_quadratic":
            return np.minimum(n2, self.c)
        return (n2 > self.c**2).astype(float)


@dataclass(frozen=True)
class MinimaxResult:
    mle_risk: float
    mle_se: float
    bound: float
    bound_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.mle_se, self.bound_se)


def minimax_bound_draws(theta: DriftParams, fixed: FixedCoeffs, seed, size: int,
                        n_steps: int = LIMIT_N_STEPS, method: str = "poisson") -> np.ndarray:
    """Draws of ``(eta^T)^{-1} Z = (-Y~/b)^{-1/2} L Z`` for the (b, beta) block."""
    rng = as_rng(seed)
    lim = sample_supercritical_limit(theta, fixed, n_steps, rng, size, method)
    q = lim.info[:, 2, 2] / diffusion_matrices(fixed).S_inv[0, 0]
    z = rng.standard_normal((size, 2))
    return (z @ diffusion_matrices(fixed).L.T) / np.sqrt(q)[:, None]


def minimax_experiment(theta: DriftParams, fixed: FixedCoeffs, loss: Loss, T: float, M: int, seed: int,
                       n_steps: int | None = None, bound_size: int | None = None,
                       scheme: Scheme | str = Scheme.SPLIT, limit_n_steps: int = LIMIT_N_STEPS) -> MinimaxResult:
    """MLE risk in the supercritical (b, beta) submodel against the
    asymptotic minimax lower bound."""
    if classify_regime(theta.b) is not Regime.SUPERCRITICAL:
        raise ParameterError("minimax experiment is defined for the supercritical submodel")
    n_steps = grid_steps(theta, T) if n_steps is None else n_steps
    f = simulate_functionals(theta, fixed, T, n_steps, seed, M=M, scheme=scheme)
    err = (submodel_mle_b_beta(f, theta) - np.array([theta.b, theta.beta])) * math.exp(-0.5 * theta.b * T)
    w = loss(err)
    # separate stream index range for the limit draws
    bd = minimax_bound_draws(theta, fixed, SeedSpec(seed, 2**63 + 1), bound_size or M, limit_n_steps)
    wb = loss(bd)
    return MinimaxResult(float(w.mean()), float(w.std(ddof=1) / math.sqrt(len(w))),
                         float(wb.mean()), float(wb.std(ddof=1) / math.sqrt(len(wb))))
