"""Replicate orchestration, two-sample distances and empirical checks of the
LAQ conditions and of convergence to the regime limit laws."""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .engine import simulate_functionals
from .functionals import FLOOR_EPS, PathFunctionals
from .likelihood import delta_brownian, info_matrix, log_rn_functionals
from .limits import LIMIT_N_STEPS, LimitDraw, laq_violation_value, sample_limit, scaling_matrix, stationary_law
from .mle import _solve
from .model import DriftParams, FixedCoeffs, ParameterError, Regime, classify_regime
from .optimal_tests import scores_from_functionals
from .sde import Scheme, SeedSpec, default_n_steps, grid_steps, simulate_heston_split

SCHEMA = 1
# stream indices reserved for reference samples, far from replicate indices
LIMIT_STREAM = 2**63
REFERENCE_STREAM = 2**63 + 2
ABORT_FRACTION = 0.5

_UPPER = [(i, j) for i in range(4) for j in range(i, 4)]
DELTA_INFO_COLUMNS = [f"delta{i + 1}" for i in range(4)] + [f"J{i + 1}{j + 1}" for i, j in _UPPER]


class JobKind(enum.Enum):
    FUNCTIONALS = "functionals"
    DELTA_INFO = "delta_info"
    SCORES = "scores"
    MLE_ERRORS = "mle_errors"
    LOG_RN = "log_rn"


class McAbortError(RuntimeError):
    pass


@dataclass(frozen=True)
class McJob:
    """One Monte Carlo job; replicate ``i`` uses ``SeedSpec(master_seed, i)``.

    ``theta0`` is the null for score jobs, ``theta_tilde`` the alternative
    for log-likelihood-ratio jobs. ``r`` defaults to the regime scaling.
    """

    kind: JobKind
    theta: DriftParams
    fixed: FixedCoeffs
    T: float
    M: int
    master_seed: int
    n_steps: int | None = None
    scheme: Scheme = Scheme.SPLIT
    theta0: DriftParams | None = None
    theta_tilde: DriftParams | None = None
    r: np.ndarray | None = None
    floor_eps: float = FLOOR_EPS

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be at least 1")
        object.__setattr__(self, "kind", JobKind(self.kind))
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n_steps is None:
            object.__setattr__(self, "n_steps", grid_steps(self.theta, self.T))

    @property
    def scaling(self) -> np.ndarray:
        if self.r is not None:
            return np.asarray(self.r, float)
        return scaling_matrix(classify_regime(self.theta.b), self.theta, self.T)


@dataclass
class ReplicateSample:
    columns: list
    data: np.ndarray
    flags: np.ndarray  # per-replicate strings, "" when clean
    counts: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def delta_info_pairs(f: PathFunctionals, theta: DriftParams, fixed: FixedCoeffs, r):
    """Finite-T ``(Delta, J)`` arrays for batched functionals."""
    return delta_brownian(f, fixed, r), info_matrix(f, fixed, r)


def _flatten(delta, info):
    return np.concatenate([delta, np.stack([info[:, i, j] for i, j in _UPPER], -1)], -1)


def run_replicates(job: McJob, threads: int | None = None) -> ReplicateSample:
    """Simulate ``job.M`` replicates and reduce each to a row.

    Flagged replicates (floor hits, degenerate Gram) are kept and marked.
    Raises ``McAbortError`` when more than half are flagged.
    """
    f = simulate_functionals(job.theta, job.fixed, job.T, job.n_steps, job.master_seed, M=job.M,
                             scheme=job.scheme, floor_eps=job.floor_eps, threads=threads)
    fh = np.asarray(f.floor_hits) > 0
    dg = np.zeros(job.M, bool)
    if job.kind is JobKind.FUNCTIONALS:
        cols = ["int_Y", "int_invY", "iw_inv", "ib_inv", "iw_sqrt", "ib_sqrt", "dy_over_y", "dx_over_y",
                "Y_T", "X_T"]
        data = np.stack([getattr(f, c) for c in cols], -1)
    elif job.kind is JobKind.DELTA_INFO:
        cols = DELTA_INFO_COLUMNS
        data = _flatten(*delta_info_pairs(f, job.theta, job.fixed, job.scaling))
    elif job.kind is JobKind.SCORES:
        theta0 = job.theta0 or job.theta
        data = scores_from_functionals(f, theta0, job.fixed)
        cols = [f"S{i + 1}" for i in range(data.shape[1])]
    elif job.kind is JobKind.MLE_ERRORS:
        th, _, ok = _solve(f)
        dg = ~ok
        rd = np.diag(job.scaling)
        data = (th - job.theta.as_array()) / rd
        cols = ["err_a", "err_alpha", "err_b", "err_beta"]
    elif job.kind is JobKind.LOG_RN:
        if job.theta_tilde is None:
            raise ValueError("log_rn job needs theta_tilde")
        data = log_rn_functionals(f, job.theta, job.theta_tilde, job.fixed)[:, None]
        cols = ["log_rn"]
    else:  # pragma: no cover
        raise ValueError(job.kind)
    flags = np.array([("F" if a else "") + ("D" if b else "") for a, b in zip(fh, dg)], dtype=object)
    counts = {"floor_hit": int(fh.sum()), "degenerate_gram": int(dg.sum())}
    if np.count_nonzero(flags != "") > ABORT_FRACTION * job.M:
        raise McAbortError(f"more than half of the replicates are flagged: {counts}")
    return ReplicateSample(cols, np.asarray(data, float), flags, counts)


def two_sample_ks(x, y) -> float:
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_x - F_y|``."""
    x = np.sort(np.asarray(x, float).ravel())
    y = np.sort(np.asarray(y, float).ravel())
    if x.size == 0 or y.size == 0:
        raise ValueError("samples must be nonempty")
    pooled = np.concatenate([x, y])
    fx = np.searchsorted(x, pooled, side="right") / x.size
    fy = np.searchsorted(y, pooled, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def _mean_pdist(A, B, chunk=1024):
    total = 0.0
    for s in range(0, A.shape[0], chunk):
        total += cdist(A[s:s + chunk], B).sum()
    return total / (A.shape[0] * B.shape[0])


def energy_distance(X, Y) -> float:
    """``2 E|x - y| - E|x - x'| - E|y - y'|`` over all pairs (V-statistic form)."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    X = X[:, None] if X.ndim == 1 else X
    Y = Y[:, None] if Y.ndim == 1 else Y
    if X.shape[1] != Y.shape[1]:
        raise ValueError("dimension mismatch")
    e = 2 * _mean_pdist(X, Y) - _mean_pdist(X, X) - _mean_pdist(Y, Y)
    return max(float(e), 0.0)


def mean_and_se(v) -> tuple[float, float]:
    v = np.asarray(v, float)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class LaqReport:
    regime: Regime
    h_list: list
    limit_laqdj: list  # (mean, se) per h
    finite_laqdj: dict  # T -> list of (mean, se)
    laqo: dict  # T -> quantiles of |Delta| and |J|
    laqj: dict  # T -> fraction of replicates with J positive definite
    limit_laqj: float
    violation_value: float | None = None

    def to_dict(self):
        return {
            "regime": self.regime.value,
            "h_list": [list(map(float, h)) for h in self.h_list],
            "limit_laqdj": [{"mean": m, "se": s} for m, s in self.limit_laqdj],
            "finite_laqdj": {str(T): [{"mean": m, "se": s} for m, s in v] for T, v in self.finite_laqdj.items()},
            "laqo": {str(T): v for T, v in self.laqo.items()},
            "laqj": {str(T): v for T, v in self.laqj.items()},
            "limit_laqj": self.limit_laqj,
            "violation_value": self.violation_value,
        }


def _pd_fraction(info) -> float:
    return float(np.mean(np.linalg.eigvalsh(info)[..., 0] > 0))


def _laqdj(delta, info, h):
    h = np.asarray(h, float)
    return mean_and_se(np.exp(delta @ h - 0.5 * np.einsum("i,...ij,j->...", h, info, h)))


def check_laq_conditions(regime: Regime, theta: DriftParams, fixed: FixedCoeffs, h_list, T_list, M: int, seed: int,
                         limit_size: int | None = None, n_steps=None, scheme: Scheme | str = Scheme.SPLIT,
                         limit_n_steps: int = LIMIT_N_STEPS) -> LaqReport:
    """Empirical LAQ checks on finite-T statistics and on limit-law draws.

    ``n_steps`` may be an int, a callable of ``T``, or ``None`` for the default
    grid rule.
    """
    if classify_regime(theta.b) is not regime:
        raise ParameterError("theta does not match the regime")
    h_list = [np.asarray(h, float) for h in h_list]
    lim = sample_limit(theta, fixed, SeedSpec(seed, LIMIT_STREAM), limit_size or M, limit_n_steps)
    limit_laqdj = [_laqdj(lim.delta, lim.info, h) for h in h_list]
    finite, laqo, laqj = {}, {}, {}
    for T in T_list:
        n = (n_steps(T) if callable(n_steps) else n_steps) or grid_steps(theta, T)
        f = simulate_functionals(theta, fixed, T, n, seed, M=M, scheme=scheme)
        d, J = delta_info_pairs(f, theta, fixed, scaling_matrix(regime, theta, T))
        finite[T] = [_laqdj(d, J, h) for h in h_list]
        nd = np.linalg.norm(d, axis=1)
        nj = np.linalg.norm(J, axis=(1, 2))
        laqo[T] = {"delta_norm_q": np.quantile(nd, [0.5, 0.9, 0.99]).tolist(),
                   "info_norm_q": np.quantile(nj, [0.5, 0.9, 0.99]).tolist()}
        laqj[T] = _pd_fraction(J)
    viol = laq_violation_value(theta, fixed) if regime is Regime.SUPERCRITICAL else None
    return LaqReport(regime, h_list, limit_laqdj, finite, laqo, laqj, _pd_fraction(lim.info), viol)


@dataclass
class DistanceReport:
    T: float
    ks: dict
    energy: float
    n_finite: int
    n_limit: int
    info_median_abs: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    @property
    def max_ks(self) -> float:
        return max(self.ks.values()) if self.ks else 0.0

    def to_dict(self):
        d = asdict(self)
        d["max_ks"] = self.max_ks
        return d


def _default_block(regime: Regime):
    return (2, 3) if regime is Regime.SUPERCRITICAL else (0, 1, 2, 3)


def compare_to_limit(delta, info, lim: LimitDraw, block, T, flags=None,
                     energy_size: int | None = None) -> DistanceReport:
    """KS per coordinate and joint energy distance between finite-T pairs and
    limit draws, restricted to the coordinates in ``block``.

    KS is reported for every Delta coordinate and for those J entries whose
    limit law is not a point mass; J entries with a point-mass limit are
    summarised by the median absolute deviation instead. ``energy_size``
    caps the number of limit draws used by the quadratic-cost energy distance.
    """
    block = list(block)
    pairs = [(i, j) for i, j in _UPPER if i in block and j in block]
    ks, mad = {}, {}
    for i in block:
        ks[f"delta{i + 1}"] = two_sample_ks(delta[:, i], lim.delta[:, i])
    for i, j in pairs:
        name = f"J{i + 1}{j + 1}"
        ref = lim.info[:, i, j]
        if np.ptp(ref) > 0:
            ks[name] = two_sample_ks(info[:, i, j], ref)
        else:
            mad[name] = float(np.median(np.abs(info[:, i, j] - ref[0])))
    feats = lambda d, J: np.concatenate([d[:, block], np.stack([J[:, i, j] for i, j in pairs], -1)], -1)
    ne = len(lim) if energy_size is None else min(energy_size, len(lim))
    e = energy_distance(feats(delta, info), feats(lim.delta[:ne], lim.info[:ne]))
    return DistanceReport(T, ks, e, len(delta), len(lim), mad, flags or {})


def check_convergence(regime: Regime, theta: DriftParams, fixed: FixedCoeffs, T_list, M: int, seed: int,
                      limit_size: int | None = None, n_steps=None, block=None,
                      scheme: Scheme | str = Scheme.SPLIT, limit_n_steps: int = LIMIT_N_STEPS,
                      energy_limit_size: int | None = 5000) -> list:
    """Distances between finite-T ``(Delta, J)`` samples and limit draws, per ``T``.

    The limit sample is shared across ``T``. ``energy_limit_size`` caps the
    number of limit draws entering the quadratic-cost energy distance.
    """
    if classify_regime(theta.b) is not regime:
        raise ParameterError("theta does not match the regime")
    block = _default_block(regime) if block is None else block
    lim = sample_limit(theta, fixed, SeedSpec(seed, LIMIT_STREAM), limit_size or M, limit_n_steps)
    reports = []
    for T in T_list:
        n = (n_steps(T) if callable(n_steps) else n_steps) or grid_steps(theta, T)
        f = simulate_functionals(theta, fixed, T, n, seed, M=M, scheme=scheme)
        d, J = delta_info_pairs(f, theta, fixed, scaling_matrix(regime, theta, T))
        flags = {"floor_hit": int(np.count_nonzero(np.asarray(f.floor_hits) > 0))}
        reports.append(compare_to_limit(d, J, lim, block, T, flags, energy_limit_size))
    return reports


@dataclass(frozen=True)
class ErgodicResult:
    avg_Y: float
    avg_invY: float
    gamma_ks: float
    mean_Y: float
    mean_invY: float


def ergodic_check(theta: DriftParams, fixed: FixedCoeffs, T: float, n_steps: int | None, seed: int,
                  M_marginal: int = 10_000, T_marginal: float = 50.0, n_marginal: int | None = None,
                  ref_size: int | None = None) -> ErgodicResult:
    """Time averages of ``Y`` and ``1/Y`` along one long path, and KS of the
    ``Y_{T_marginal}`` sample across replicates against the stationary Gamma law."""
    if classify_regime(theta.b) is not Regime.SUBCRITICAL:
        raise ParameterError("ergodic check needs b > 0")
    if not theta.a > 0.5 * fixed.sigma1**2:
        raise ParameterError("ergodic check needs a > sigma1^2/2")
    law = stationary_law(theta.a, theta.b, fixed.sigma1)
    n_steps = default_n_steps(T) if n_steps is None else n_steps
    p = simulate_heston_split(theta, fixed, T, n_steps, SeedSpec(seed, 0))
    y = p.Y[:-1]
    avg_Y = float(np.mean(y))
    avg_inv = float(np.mean(1.0 / y))
    nm = default_n_steps(T_marginal) if n_marginal is None else n_marginal
    f = simulate_functionals(theta, fixed, T_marginal, nm, seed + 1, M=M_marginal)
    ref = law.sample(SeedSpec(seed, REFERENCE_STREAM), ref_size or 10 * M_marginal)
    return ErgodicResult(avg_Y, avg_inv, two_sample_ks(f.Y_T, ref), law.moment(1), law.moment(-1))


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, enum.Enum):
        return v.value
    return v


def write_summary_json(dest, job: str, params: dict, T, M, statistics: dict, flags: dict, seed) -> Path:
    """JSON summary ``{schema, job, params, T, M, statistics, flags, seed}``."""
    doc = {"schema": SCHEMA, "job": job, "params": params, "T": T, "M": M,
           "statistics": statistics, "flags": flags, "seed": seed}
    dest = Path(dest)
    dest.write_text(json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n")
    return dest


def write_replicates_csv(dest, sample: ReplicateSample) -> Path:
    """CSV ``replicate,<columns>,flags`` with a leading ``# schema: 1`` line."""
    dest = Path(dest)
    with dest.open("w", newline="") as fh:
        fh.write(f"# schema: {SCHEMA}\n")
        w = csv.writer(fh)
        w.writerow(["replicate", *sample.columns, "flags"])
        for i, row in enumerate(sample.data):
            w.writerow([i, *(repr(float(x)) for x in row), sample.flags[i]])
    return dest
