"""Sample paths of the Heston SDE, the exact CIR sampler and the auxiliary
processes that appear in the critical and supercritical limit laws."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .model import DriftParams, FixedCoeffs, ParameterError

# Steps drawn per RNG call. Fixed so that a replicate's noise does not depend
# on how many replicates are simulated alongside it.
CHUNK = 1024


class Scheme(enum.Enum):
    EULER = "euler"
    SPLIT = "split"
    EXACT = "exact"


@dataclass(frozen=True)
class SeedSpec:
    """Stateless address of a random stream.

    ``(master_seed, stream_index)`` is hashed by ``numpy.random.SeedSequence``
    with ``stream_index`` as the spawn key, which gives statistically
    independent PCG64 streams for distinct indices.
    """

    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for v in (self.master_seed, self.stream_index):
            if not (0 <= int(v) < 2**64):
                raise ValueError("seed components must be unsigned 64-bit integers")

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.master_seed), spawn_key=(int(self.stream_index),))
        return np.random.Generator(np.random.PCG64(ss))


def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, SeedSpec):
        return seed.rng()
    return SeedSpec(int(seed)).rng()


def default_n_steps(T: float) -> int:
    return max(1000, math.ceil(200 * T))


def grid_steps(theta: DriftParams, T: float) -> int:
    """Default grid, refined for ``b < 0``.

    On an explosive path the Euler growth factor ``(1 - b dt)^n`` differs from
    ``exp(-bT)`` by about ``exp(-b^2 T^2 / (2n))``; ``100 b^2 T^2`` steps keep
    that below 0.5%.
    """
    n = default_n_steps(T)
    if theta.b < 0:
        n = max(n, math.ceil(100 * theta.b**2 * T**2))
    return n


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Discretised path on a uniform grid of ``n_steps`` steps over ``[0, T]``.

    ``dW`` and ``dB`` are the Brownian increments that reproduce ``Y`` and
    ``X`` through the Euler recursion; they are ``None`` for exact-CIR paths.
    """

    T: float
    Y: np.ndarray
    X: np.ndarray
    theta_gen: DriftParams
    fixed: FixedCoeffs
    scheme: Scheme = Scheme.EULER
    dW: np.ndarray | None = None
    dB: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.Y.shape[0] - 1

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @property
    def has_increments(self) -> bool:
        return self.dW is not None


def _check_grid(T, n_steps):
    if not np.isfinite(T) or T <= 0:
        raise ParameterError(f"T must be positive and finite, got {T!r}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ParameterError(f"n_steps must be a positive integer, got {n_steps!r}")
    return float(T), int(n_steps)


def _params(theta, fixed):
    return (theta.a, theta.alpha, theta.b, theta.beta, fixed.sigma1, fixed.sigma2, fixed.rho)


def draw_block(rng: np.random.Generator, scheme: Scheme, K: int, gamma_shape: float):
    """Noise for ``K`` steps of one replicate, as ``(z, g)``.

    ``z`` has shape ``(K, 2)``. For the split scheme ``g`` holds ``K``
    chi-square variates with ``d - 1`` degrees of freedom, else it is empty.
    """
    z = rng.standard_normal((K, 2))
    if scheme is Scheme.SPLIT:
        g = 2.0 * rng.standard_gamma(gamma_shape, K)
    else:
        g = np.empty(0)
    return z, g


def split_gamma_shape(theta: DriftParams, fixed: FixedCoeffs, dt: float) -> float:
    d = 4.0 * theta.a / fixed.sigma1**2
    if d <= 1.0:
        raise ParameterError("split scheme needs 4a/sigma1^2 > 1")
    if theta.b * dt >= 1.0:
        raise ParameterError("split scheme needs b*dt < 1")
    return 0.5 * (d - 1.0)


def _iter_chunks(n):
    for start in range(0, n, CHUNK):
        yield start, min(CHUNK, n - start)


def simulate_with_increments(theta: DriftParams, fixed: FixedCoeffs, T: float, dW, dB,
                             scheme: Scheme = Scheme.EULER) -> SamplePath:
    """Run the full-truncation Euler recursion on supplied increments."""
    dW = np.ascontiguousarray(dW, dtype=float)
    dB = np.ascontiguousarray(dB, dtype=float)
    if dW.ndim != 1 or dW.shape != dB.shape:
        raise ValueError("dW and dB must be one-dimensional arrays of equal length")
    T, n = _check_grid(T, dW.shape[0])
    Y = np.empty(n + 1)
    X = np.empty(n + 1)
    _kernels.euler_path(fixed.y0, fixed.x0, *_params(theta, fixed), T / n, dW, dB, Y, X)
    return SamplePath(T, Y, X, theta, fixed, scheme, dW, dB)


def simulate_heston_euler(theta: DriftParams, fixed: FixedCoeffs, T: float, n_steps: int | None = None,
                          seed=0) -> SamplePath:
    """Full-truncation Euler path with stored increments.

    Examples
    --------
    >>> p = simulate_heston_euler(DriftParams(1, 0, 1, 0), FixedCoeffs(), 1.0, 100, SeedSpec(1))
    >>> p.Y.shape, p.dW.shape
    ((101,), (100,))
    """
    n_steps = default_n_steps(T) if n_steps is None else n_steps
    T, n = _check_grid(T, n_steps)
    rng = as_rng(seed)
    z = np.concatenate([draw_block(rng, Scheme.EULER, k, 0.0)[0] for _, k in _iter_chunks(n)])
    sq = math.sqrt(T / n)
    return simulate_with_increments(theta, fixed, T, z[:, 0] * sq, z[:, 1] * sq)


def simulate_heston_split(theta: DriftParams, fixed: FixedCoeffs, T: float, n_steps: int | None = None,
                          seed=0) -> SamplePath:
    """Positivity-preserving variant of the Euler scheme.

    Each variance step is drawn from a scaled noncentral chi-square whose mean
    is the Euler drift step. The implied Brownian increment is stored, and the
    path is then recomputed by the Euler recursion, so replay and all Euler
    algebraic identities hold exactly. Requires ``4a > sigma1**2`` and
    ``b dt < 1``.
    """
    n_steps = default_n_steps(T) if n_steps is None else n_steps
    T, n = _check_grid(T, n_steps)
    dt = T / n
    shape = split_gamma_shape(theta, fixed, dt)
    rng = as_rng(seed)
    blocks = [draw_block(rng, Scheme.SPLIT, k, shape) for _, k in _iter_chunks(n)]
    z = np.concatenate([b[0] for b in blocks])
    g = np.concatenate([b[1] for b in blocks])
    Y, X, dW, dB = (np.empty(n + 1), np.empty(n + 1), np.empty(n), np.empty(n))
    _kernels.split_path(fixed.y0, fixed.x0, *_params(theta, fixed), dt,
                        np.ascontiguousarray(z[:, 0]), g, np.ascontiguousarray(z[:, 1]), Y, X, dW, dB)
    return SamplePath(T, Y, X, theta, fixed, Scheme.SPLIT, dW, dB)


def _cir_constants(b, sigma1, dt):
    if b == 0:
        c = 0.25 * sigma1**2 * dt
        decay = 1.0
    else:
        c = 0.25 * sigma1**2 * (-math.expm1(-b * dt)) / b
        decay = math.exp(-b * dt)
    return c, decay


def _cir_step_poisson(rng, y, c, decay, half_d):
    lam = y * decay / c
    k = rng.poisson(0.5 * lam)
    return 2.0 * c * rng.standard_gamma(half_d + k)


def simulate_cir_exact(a: float, b: float, sigma1: float, y0: float, T: float, n_steps: int,
                       seed=0, size: int | None = None) -> np.ndarray:
    """Exact CIR transitions on a uniform grid.

    Each step draws ``Y' = 2c Gamma(d/2 + N)`` with ``N ~ Poisson(lam/2)``,
    the Poisson mixture form of the scaled noncentral chi-square with
    ``d = 4a/sigma1**2`` degrees of freedom. ``y0 = 0`` is allowed.

    Returns an array of shape ``(n_steps + 1,)``, or ``(size, n_steps + 1)``.
    """
    for name, v in dict(a=a, b=b, sigma1=sigma1, y0=y0).items():
        if not np.isfinite(v):
            raise ParameterError(f"{name} must be finite")
    if a <= 0 or sigma1 <= 0 or y0 < 0:
        raise ParameterError("need a > 0, sigma1 > 0, y0 >= 0")
    T, n = _check_grid(T, n_steps)
    rng = as_rng(seed)
    c, decay = _cir_constants(b, sigma1, T / n)
    half_d = 2.0 * a / sigma1**2
    m = 1 if size is None else int(size)
    out = np.empty((m, n + 1))
    out[:, 0] = y0
    for i in range(n):
        out[:, i + 1] = _cir_step_poisson(rng, out[:, i], c, decay, half_d)
    return out[0] if size is None else out


def cir_end_and_integral(a: float, b: float, sigma1: float, y0: float, t: float, n_steps: int,
                         seed, size: int, method: str = "poisson"):
    """Terminal value and left-point time integral of ``size`` exact CIR paths.

    ``method="poisson"`` uses the Gamma-Poisson mixture; ``"chi2"`` uses the
    decomposition ``(Z + sqrt(lam))^2 + chi2_{d-1}`` (needs ``d > 1``) with a
    compiled loop, which is considerably faster for large batches.
    """
    t, n = _check_grid(t, n_steps)
    if a <= 0 or sigma1 <= 0 or y0 < 0:
        raise ParameterError("need a > 0, sigma1 > 0, y0 >= 0")
    rng = as_rng(seed)
    dt = t / n
    y = np.full(int(size), float(y0))
    s = np.zeros(int(size))
    if method == "poisson":
        c, decay = _cir_constants(b, sigma1, dt)
        half_d = 2.0 * a / sigma1**2
        for _ in range(n):
            s += y
            y = _cir_step_poisson(rng, y, c, decay, half_d)
        return y, s * dt
    if method == "chi2":
        d = 4.0 * a / sigma1**2
        if d <= 1.0:
            raise ParameterError("chi2 method needs 4a/sigma1^2 > 1")
        empty = np.empty((0, 0))
        for _, k in _iter_chunks(n):
            z = rng.standard_normal((int(size), k))
            g = 2.0 * rng.standard_gamma(0.5 * (d - 1.0), (int(size), k))
            _kernels.cir_chi2_block(y, s, z, g, float(b), float(sigma1), dt, empty)
        return y, s
    raise ValueError(f"unknown method {method!r}")


def simulate_heston_exact(theta: DriftParams, fixed: FixedCoeffs, T: float, n_steps: int | None = None,
                          seed=0) -> SamplePath:
    """Exact CIR variance with an Euler-consistent log-price.

    ``X`` uses the Brownian increment implied by each exact variance step and
    an independent normal for the orthogonal component. Increments are not
    stored, so downstream code must work from the observable path.
    """
    n_steps = default_n_steps(T) if n_steps is None else n_steps
    T, n = _check_grid(T, n_steps)
    rng = as_rng(seed)
    Y = simulate_cir_exact(theta.a, theta.b, fixed.sigma1, fixed.y0, T, n, rng)
    dt = T / n
    y = Y[:-1]
    sy = np.sqrt(y)
    with np.errstate(divide="ignore", invalid="ignore"):
        dw = np.where(y > 0, (np.diff(Y) - (theta.a - theta.b * y) * dt) / (fixed.sigma1 * sy), 0.0)
    db = rng.standard_normal(n) * math.sqrt(dt)
    rc = math.sqrt(1 - fixed.rho**2)
    steps = (theta.alpha - theta.beta * y) * dt + fixed.sigma2 * sy * (fixed.rho * dw + rc * db)
    X = np.concatenate([[fixed.x0], fixed.x0 + np.cumsum(steps)])
    return SamplePath(T, Y, X, theta, fixed, Scheme.EXACT)


def simulate_heston(theta, fixed, T, n_steps=None, seed=0, scheme: Scheme | str = Scheme.EULER) -> SamplePath:
    scheme = Scheme(scheme)
    fn = {Scheme.EULER: simulate_heston_euler, Scheme.SPLIT: simulate_heston_split,
          Scheme.EXACT: simulate_heston_exact}[scheme]
    return fn(theta, fixed, T, n_steps, seed)


def critical_limit_triplets(a: float, alpha: float, fixed: FixedCoeffs, n_steps: int, seed, size: int,
                            method: str = "poisson"):
    """Vectorised draws of ``(Y_1, int_0^1 Y, X_1)`` for the limit process
    ``dY = a dt + s1 sqrt(Y) dW``, ``dX = alpha dt + s2 sqrt(Y)(rho dW + rc dB)``
    started at ``(0, 0)``.

    ``Y`` is sampled exactly. Given the ``Y`` path, ``s1 int sqrt(Y) dW`` equals
    ``Y_1 - a`` and ``int sqrt(Y) dB`` is centred normal with variance
    ``int Y``, so ``X_1`` is drawn from that conditional law.
    """
    if a <= fixed.sigma1**2 / 2:
        raise ParameterError("critical limit needs a > sigma1^2/2")
    rng = as_rng(seed)
    y1, iy = cir_end_and_integral(a, 0.0, fixed.sigma1, 0.0, 1.0, n_steps, rng, size, method)
    z3 = rng.standard_normal(int(size))
    rc = math.sqrt(1 - fixed.rho**2)
    x1 = alpha + fixed.sigma2 * fixed.rho * (y1 - a) / fixed.sigma1 + fixed.sigma2 * rc * np.sqrt(iy) * z3
    return y1, iy, x1


def simulate_critical_limit_triplet(a: float, alpha: float, fixed: FixedCoeffs, n_steps: int = 4000, seed=0):
    y1, iy, x1 = critical_limit_triplets(a, alpha, fixed, n_steps, seed, 1)
    return float(y1[0]), float(iy[0]), float(x1[0])


def supercritical_limit_pairs(a: float, sigma1: float, b: float, y0: float, n_steps: int, seed, size: int,
                              method: str = "poisson"):
    """Vectorised ``(Y~_{-1/b}, int_0^{-1/b} Y~)`` for ``dY~ = a dt + s1 sqrt(Y~) dW``."""
    if not b < 0:
        raise ParameterError("supercritical limit needs b < 0")
    if a < sigma1**2 / 2 or y0 <= 0:
        raise ParameterError("need a >= sigma1^2/2 and y0 > 0")
    return cir_end_and_integral(a, 0.0, sigma1, y0, -1.0 / b, n_steps, seed, size, method)


def simulate_supercritical_limit_pair(a: float, sigma1: float, b: float, y0: float, n_steps: int = 4000, seed=0):
    ye, iy = supercritical_limit_pairs(a, sigma1, b, y0, n_steps, seed, 1)
    return float(ye[0]), float(iy[0])


def write_path_csv(path: SamplePath, dest) -> Path:
    """Dump a path as ``t,Y,X,dW,dB``; increments sit on their left endpoint row."""
    dest = Path(dest)
    t = path.t_grid
    with dest.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "Y", "X", "dW", "dB"])
        for i in range(path.n_steps + 1):
            if path.has_increments and i < path.n_steps:
                inc = [repr(float(path.dW[i])), repr(float(path.dB[i]))]
            else:
                inc = ["", ""]
            w.writerow([repr(float(t[i])), repr(float(path.Y[i])), repr(float(path.X[i])), *inc])
    return dest
