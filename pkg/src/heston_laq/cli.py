"""Batch command line front end.

Usage: ``heston-laq <subcommand> --config FILE [--seed N] [--out DIR]``.

The config is flat ``key = value`` text; ``#`` starts a comment and
``[section]`` headers are accepted and ignored. Exit codes: 0 success,
1 usage or configuration error, 2 acceptance threshold violated.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import harness
from .functionals import functionals
from .likelihood import quad_decomposition
from .limits import cir_integral_laplace, laq_violation_value, subcritical_info, scaling_matrix
from .mle import Loss, minimax_experiment
from .model import (Domain, DriftParams, FixedCoeffs, ParameterError, Regime, classify_regime,
                    parameter_domain_check)
from .optimal_tests import TestSpec, asymptotic_power, empirical_power
from .sde import Scheme, SeedSpec, cir_end_and_integral, simulate_heston, simulate_heston_euler, write_path_csv

EXPERIMENTS = ("simulate", "quadcheck", "laq", "converge", "power", "mle", "ergodic", "oracle")
EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def _vectors(text):
    return [_floats(part) for part in text.split(";") if part.strip()]


# key -> (parser, default); None default means "required" or "derived"
KEYS = {
    "experiment": (str, None),
    "seed": (int, None),
    "a": (float, 1.0), "alpha": (float, 0.0), "b": (float, 1.0), "beta": (float, 0.0),
    "sigma1": (float, 1.0), "sigma2": (float, 1.0), "rho": (float, 0.0), "y0": (float, 1.0), "x0": (float, 0.0),
    "T": (float, 50.0),
    "T_list": (_floats, None),
    "n_steps": (int, 0),
    "M": (int, 500),
    "scheme": (str, "split"),
    "out_dir": (str, "out"),
    "h": (_floats, [0.0, 0.0, 1.0, 0.0]),
    "h_list": (_vectors, None),
    "level": (float, 0.05),
    "coord": (int, 3),
    "loss": (str, "bounded_quadratic"),
    "loss_c": (float, 1.0),
    "limit_size": (int, 20000),
    "limit_n_steps": (int, 1000),
    "mu": (float, 0.5),
    "tol_ks": (float, 0.05),
    "tol_se": (float, 3.0),
    "tol_power": (float, 0.05),
    "tol_rel": (float, 0.05),
    "tol_cov": (float, 0.15),
    "tol_quad": (float, 1e-8),
}
REQUIRED = ("experiment", "seed")

# desk-scale defaults per experiment, applied below the config file
EXPERIMENT_DEFAULTS = {
    "simulate": {"T": 5.0},
    "quadcheck": {"T": 5.0, "n_steps": 5000, "M": 20, "scheme": "euler"},
    "laq": {"T_list": [20.0, 50.0], "M": 1000},
    "converge": {"T_list": [50.0, 200.0], "M": 2000, "limit_size": 20000},
    "power": {"T": 200.0, "M": 1000},
    "mle": {"T": 200.0, "M": 500},
    "ergodic": {"T": 500.0, "M": 2000, "tol_ks": 0.03},
    "oracle": {"T": 1.0, "M": 20000, "limit_n_steps": 1000, "b": 0.0},
}
# explosive paths need short horizons and fine grids
SUPERCRITICAL_DEFAULTS = {"T": 20.0, "T_list": [10.0, 20.0]}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict
    lines: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def theta(self) -> DriftParams:
        v = self.values
        return DriftParams(v["a"], v["alpha"], v["b"], v["beta"])

    @property
    def fixed(self) -> FixedCoeffs:
        v = self.values
        return FixedCoeffs(v["sigma1"], v["sigma2"], v["rho"], v["y0"], v["x0"])

    @property
    def regime(self) -> Regime:
        return classify_regime(self.values["b"])

    def steps(self, T):
        """Configured grid size, or ``None`` for the regime-aware default."""
        n = self.values["n_steps"]
        return n if n > 0 else None

    def resolved_text(self) -> str:
        out = []
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, list) and v and isinstance(v[0], list):
                s = "; ".join(", ".join(repr(x) for x in h) for h in v)
            elif isinstance(v, list):
                s = ", ".join(repr(x) for x in v)
            else:
                s = repr(v) if isinstance(v, float) else str(v)
            out.append(f"{k} = {s}")
        return "\n".join(out) + "\n"


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse, validate and resolve a flat ``key = value`` config.

    ``overrides`` (from the command line) win over file values; experiment
    defaults sit below the file.
    """
    raw, lines = {}, {}
    for no, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s or (s.startswith("[") and s.endswith("]")):
            continue
        if "=" not in s:
            raise ConfigError(f"line {no}: expected 'key = value', got {line.strip()!r}")
        key, val = (p.strip() for p in s.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {no}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {no}: duplicate key {key!r} (first set on line {lines[key]})")
        try:
            raw[key] = KEYS[key][0](val)
        except ValueError:
            raise ConfigError(f"line {no}: cannot parse {key} = {val!r} as {KEYS[key][0].__name__.lstrip('_')}") from None
        lines[key] = no
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
            lines[k] = "command line"
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    exp = raw["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"line {lines['experiment']}: unknown experiment {exp!r}")
    values = {k: d for k, (_, d) in KEYS.items()}
    values.update(EXPERIMENT_DEFAULTS[exp])
    values.update(raw)
    if isinstance(values["b"], float) and values["b"] < 0:
        values.update({k: v for k, v in SUPERCRITICAL_DEFAULTS.items() if k not in raw})
    if values["T_list"] is None:
        values["T_list"] = [values["T"]]
    if values["h_list"] is None:
        values["h_list"] = [values["h"]]
    cfg = RunConfig(values, lines)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    v, ln = cfg.values, cfg.lines

    def where(key):
        return f"line {ln[key]}: " if isinstance(ln.get(key), int) else ""

    try:
        fixed = cfg.fixed
        theta = cfg.theta
    except ParameterError as e:
        raise ConfigError(str(e)) from None
    if parameter_domain_check(theta.a, fixed.sigma1, cfg.regime) is Domain.INVALID:
        raise ConfigError(f"{where('a')}a = {theta.a} is outside the admissible domain a > sigma1^2/2 "
                          f"= {fixed.sigma1**2 / 2}")
    for key in ("M", "limit_size", "limit_n_steps"):
        if v[key] < 1:
            raise ConfigError(f"{where(key)}{key} must be positive")
    if v["T"] <= 0 or any(t <= 0 for t in v["T_list"]):
        raise ConfigError(f"{where('T')}T must be positive")
    if v["scheme"] not in {s.value for s in Scheme}:
        raise ConfigError(f"{where('scheme')}unknown scheme {v['scheme']!r}")
    if any(len(h) != 4 for h in v["h_list"]) or len(v["h"]) != 4:
        raise ConfigError(f"{where('h')}h vectors must have four entries")
    if not 0 < v["level"] < 1:
        raise ConfigError(f"{where('level')}level must lie in (0, 1)")
    if v["seed"] < 0:
        raise ConfigError(f"{where('seed')}seed must be nonnegative")


def _params(cfg):
    keys = ("a", "alpha", "b", "beta", "sigma1", "sigma2", "rho", "y0", "x0")
    return {k: cfg.values[k] for k in keys}


def _within(mean, se, target, k):
    return abs(mean - target) <= k * se


def run_simulate(cfg, out):
    p = simulate_heston(cfg.theta, cfg.fixed, cfg.T, cfg.steps(cfg.T), SeedSpec(cfg.seed, 0), cfg.scheme)
    write_path_csv(p, out / "path.csv")
    f = functionals(p, warn=False)
    stats = {k: getattr(f, k) for k in ("int_Y", "int_invY", "iw_inv", "ib_inv", "iw_sqrt", "ib_sqrt", "Y_T", "X_T")}
    return stats, {"floor_hit": f.floor_hits}, True, None


def run_quadcheck(cfg, out):
    rng = SeedSpec(cfg.seed, harness.REFERENCE_STREAM).rng()
    theta, fixed = cfg.theta, cfg.fixed
    r = scaling_matrix(cfg.regime, theta, cfg.T)
    rows, worst, skipped = [], 0.0, 0
    for i in range(cfg.M):
        p = simulate_heston_euler(theta, fixed, cfg.T, cfg.steps(cfg.T), SeedSpec(cfg.seed, i))
        if np.any(p.Y[:-1] < 1e-12):
            skipped += 1
            continue
        h = rng.uniform(-1, 1, 4)
        h *= rng.uniform(0, 2) / np.linalg.norm(h)
        h[0] = max(h[0], (fixed.sigma1**2 / 2 - theta.a) / r[0, 0] + 1e-9)
        q = quad_decomposition(p, theta, r, h)
        rel = abs(q.residual) / (1 + abs(q.log_lr))
        worst = max(worst, rel)
        rows.append([q.log_lr, q.quadratic, rel])
    sample = harness.ReplicateSample(["log_rn", "quadratic", "rel_residual"], np.array(rows).reshape(-1, 3),
                                     np.array([""] * len(rows), dtype=object))
    harness.write_replicates_csv(out / "replicates.csv", sample)
    ok = worst <= cfg.tol_quad
    return {"max_rel_residual": worst, "checked": len(rows)}, {"floor_hit": skipped}, ok, None


def run_laq(cfg, out):
    h_list = cfg.h_list
    if cfg.regime is Regime.SUPERCRITICAL and [0.0, 1.0, 0.0, 0.0] not in h_list:
        h_list = h_list + [[0.0, 1.0, 0.0, 0.0]]
    rep = harness.check_laq_conditions(cfg.regime, cfg.theta, cfg.fixed, h_list, cfg.T_list, cfg.M, cfg.seed,
                                       cfg.limit_size, cfg.steps, cfg.scheme, cfg.limit_n_steps)
    ok = True
    for h, (m, se) in zip(rep.h_list, rep.limit_laqdj):
        if cfg.regime is Regime.SUPERCRITICAL and np.array_equal(h, [0, 1, 0, 0]):
            ok &= _within(m, se, rep.violation_value, cfg.tol_se) and abs(m - 1) > 5 * se
        elif cfg.regime is not Regime.SUPERCRITICAL or h[0] == h[1] == 0:
            ok &= _within(m, se, 1.0, cfg.tol_se)
    stats = rep.to_dict()
    if rep.violation_value is not None:
        stats["violation_closed_form"] = rep.violation_value
    return stats, {}, bool(ok), None


def run_converge(cfg, out):
    reps = harness.check_convergence(cfg.regime, cfg.theta, cfg.fixed, cfg.T_list, cfg.M, cfg.seed,
                                     cfg.limit_size, cfg.steps, scheme=cfg.scheme, limit_n_steps=cfg.limit_n_steps,
                                     energy_limit_size=5000)
    if cfg.regime is Regime.CRITICAL:
        e = [r.energy for r in reps]
        ok = all(x > y for x, y in zip(e, e[1:]))
    else:
        ok = reps[-1].max_ks <= cfg.tol_ks
    return {"reports": [r.to_dict() for r in reps]}, {}, ok, None


def run_power(cfg, out):
    theta0 = cfg.theta
    spec = TestSpec(cfg.regime, cfg.coord, theta0, cfg.level)
    size, size_se = empirical_power(spec, np.zeros(4), cfg.T, cfg.fixed, cfg.M, cfg.seed, cfg.steps(cfg.T), cfg.scheme)
    pw, pw_se = empirical_power(spec, cfg.h, cfg.T, cfg.fixed, cfg.M, cfg.seed + 1, cfg.steps(cfg.T), cfg.scheme)
    stats = {"size": size, "size_se": size_se, "power": pw, "power_se": pw_se}
    ok = abs(size - cfg.level) <= cfg.tol_se * math.sqrt(cfg.level * (1 - cfg.level) / cfg.M)
    if cfg.regime is Regime.SUBCRITICAL:
        psi = np.eye(4)[cfg.coord - 1]
        ap = asymptotic_power(psi, cfg.h, subcritical_info(theta0, cfg.fixed), cfg.level)
        stats["asymptotic_power"] = ap
        ok &= abs(pw - ap) <= cfg.tol_power
    return stats, {}, bool(ok), None


def run_mle(cfg, out):
    theta, fixed = cfg.theta, cfg.fixed
    if cfg.regime is Regime.SUPERCRITICAL:
        res = minimax_experiment(theta, fixed, Loss(cfg.loss, cfg.loss_c), cfg.T, cfg.M, cfg.seed,
                                 cfg.steps(cfg.T), cfg.limit_size, cfg.scheme, cfg.limit_n_steps)
        stats = {"mle_risk": res.mle_risk, "mle_se": res.mle_se, "bound": res.bound, "bound_se": res.bound_se}
        return stats, {}, res.mle_risk >= res.bound - cfg.tol_se * res.combined_se, None
    job = harness.McJob(harness.JobKind.MLE_ERRORS, theta, fixed, cfg.T, cfg.M, cfg.seed, cfg.steps(cfg.T), cfg.scheme)
    sample = harness.run_replicates(job)
    harness.write_replicates_csv(out / "replicates.csv", sample)
    errs = sample.data[sample.flags == ""]
    cov = np.cov(errs, rowvar=False)
    stats = {"covariance": cov, "mean": errs.mean(0)}
    ok = True
    if cfg.regime is Regime.SUBCRITICAL:
        target = np.linalg.inv(subcritical_info(theta, fixed))
        stats["target_covariance"] = target
        ok = covariance_close(cov, target, cfg.tol_cov)
    return stats, sample.counts, bool(ok), None


def covariance_close(cov, target, tol) -> bool:
    """Entrywise relative check; structural zeros are compared on the
    correlation scale ``tol * sqrt(C_ii C_jj)``."""
    d = np.sqrt(np.outer(np.diag(target), np.diag(target)))
    nz = np.abs(target) > 1e-12 * d
    err = np.abs(cov - target)
    return bool(np.all(err[nz] <= tol * np.abs(target[nz])) and np.all(err[~nz] <= tol * d[~nz]))


def run_ergodic(cfg, out):
    res = harness.ergodic_check(cfg.theta, cfg.fixed, cfg.T, cfg.steps(cfg.T), cfg.seed, M_marginal=cfg.M)
    ok = (abs(res.avg_Y - res.mean_Y) <= cfg.tol_rel * res.mean_Y
          and abs(res.avg_invY - res.mean_invY) <= cfg.tol_rel * res.mean_invY and res.gamma_ks <= cfg.tol_ks)
    return vars(res), {}, bool(ok), None


def run_oracle(cfg, out):
    fixed = cfg.fixed
    mu, t = cfg.mu, cfg.T
    _, iy = cir_end_and_integral(cfg.a, 0.0, fixed.sigma1, fixed.y0, t, cfg.limit_n_steps, SeedSpec(cfg.seed, 0), cfg.M)
    m, se = harness.mean_and_se(np.exp(-2 * mu * mu * iy))
    closed = cir_integral_laplace(cfg.a, fixed.sigma1, fixed.y0, t, mu)
    stats = {"mc_mean": m, "mc_se": se, "closed_form": closed}
    if cfg.regime is Regime.SUPERCRITICAL:
        stats["laq_violation_value"] = laq_violation_value(cfg.theta, fixed)
    return stats, {}, _within(m, se, closed, cfg.tol_se), None


RUNNERS = {"simulate": run_simulate, "quadcheck": run_quadcheck, "laq": run_laq, "converge": run_converge,
           "power": run_power, "mle": run_mle, "ergodic": run_ergodic, "oracle": run_oracle}


def dispatch(cfg: RunConfig) -> int:
    """Run the configured experiment and write outputs; return the exit code."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfg.resolved_text())
    stats, flags, ok, _ = RUNNERS[cfg.experiment](cfg, out)
    stats = dict(stats)
    stats["accepted"] = bool(ok)
    T = cfg.T_list if cfg.experiment in ("laq", "converge") else cfg.T
    harness.write_summary_json(out / "summary.json", cfg.experiment, _params(cfg), T, cfg.M, stats, flags, cfg.seed)
    return EXIT_OK if ok else EXIT_FAIL


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="heston-laq", description="Heston drift-likelihood experiments")
    p.add_argument("subcommand", choices=EXPERIMENTS)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=str)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text(encoding="utf-8")
        cfg = parse_config(text, {"experiment": args.subcommand, "seed": args.seed, "out_dir": args.out})
    except (OSError, ConfigError) as e:
        print(f"heston-laq: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return dispatch(cfg)
    except (ParameterError, ValueError) as e:
        print(f"heston-laq: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
