"""Acceptance criteria at full scale. Each test records one PASS/FAIL line,
printed in the terminal summary and as it runs."""
import math
import time

import numpy as np
import pytest

from heston_laq.engine import simulate_functionals
from heston_laq.functionals import check_linear_identity, functionals
from heston_laq.harness import JobKind, McJob, check_convergence, ergodic_check, run_replicates
from heston_laq.likelihood import delta_brownian, delta_observable, info_matrix, quad_decomposition
from heston_laq.limits import (cir_integral_laplace, laq_violation_value, sample_critical_limit,
                               sample_subcritical_limit, sample_supercritical_limit, scaling_matrix, subcritical_info)
from heston_laq.mle import Loss, minimax_experiment, scaled_error_distribution
from heston_laq.model import DriftParams, FixedCoeffs, Regime
from heston_laq.optimal_tests import TestSpec, asymptotic_power, empirical_power
from heston_laq.sde import SeedSpec, cir_end_and_integral, simulate_heston_euler, simulate_with_increments

from conftest import ACCEPTANCE

pytestmark = pytest.mark.acceptance
SEED = 20261017


def record(k, ok, detail, t0):
    detail = f"{detail} [{time.perf_counter() - t0:.0f}s]"
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"\ncriterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def unit_ball(rng, n, dim=4, radius=1.0):
    v = rng.standard_normal((n, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.uniform(0, 1, (n, 1)) ** (1 / dim)


def test_c01_exact_quadratic_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst, done, i = 0.0, 0, 0
    while done < 200:
        i += 1
        fx = FixedCoeffs(rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(-0.8, 0.8),
                         rng.uniform(0.5, 2.0), rng.uniform(-1, 1))
        b = (1.0, 0.0, -0.3)[done % 3] * rng.uniform(0.5, 1.5)
        th = DriftParams(fx.sigma1**2 * rng.uniform(0.8, 2.0), rng.normal(), b, rng.normal())
        p = simulate_heston_euler(th, fx, 5.0, 5000, SeedSpec(SEED, i))
        if p.Y[:-1].min() <= 1e-12:
            continue
        r = scaling_matrix(th.regime, th, 5.0)
        h = unit_ball(rng, 1, radius=2.0)[0]
        h[0] = max(h[0], (0.5 * fx.sigma1**2 - th.a) / r[0, 0] + 1e-9)
        q = quad_decomposition(p, th, r, h)
        worst = max(worst, abs(q.residual) / (1 + abs(q.log_lr)))
        done += 1
    record(1, worst <= 1e-8, f"max relative residual {worst:.2e} over 200 paths ({i - 200} skipped)", t0)


def test_c02_martingale_unit_mean():
    t0 = time.perf_counter()
    th, fx = DriftParams(1, 0, 1, 0), FixedCoeffs(1, 1, 0.3)
    job = McJob(JobKind.LOG_RN, th, fx, 1.0, 100_000, SEED, 2000, "euler",
                theta_tilde=DriftParams(1.1, 0.1, 1.1, 0.1))
    s = run_replicates(job)
    v = np.exp(s.column("log_rn"))
    m, se = v.mean(), v.std(ddof=1) / math.sqrt(v.size)
    record(2, abs(m - 1) <= 3 * se, f"mean {m:.5f} se {se:.5f} floor-hit paths {s.counts['floor_hit']}", t0)


def test_c03_ergodic_limits():
    t0 = time.perf_counter()
    res = ergodic_check(DriftParams(1, 0, 1, 0), FixedCoeffs(), 2000.0, None, SEED, M_marginal=10_000,
                        T_marginal=50.0)
    ok = abs(res.avg_Y - 1) <= 0.05 and abs(res.avg_invY - 2) <= 0.1 and res.gamma_ks <= 0.03
    record(3, ok, f"avg Y {res.avg_Y:.4f}, avg 1/Y {res.avg_invY:.4f}, Gamma KS {res.gamma_ks:.4f}", t0)


def test_c04_laplace_oracle():
    t0 = time.perf_counter()
    _, iy = cir_end_and_integral(1.0, 0.0, 1.0, 1.0, 1.0, 2000, SeedSpec(SEED), 100_000, "chi2")
    v = np.exp(-2 * 0.25 * iy)
    m, se = v.mean(), v.std(ddof=1) / math.sqrt(v.size)
    closed = cir_integral_laplace(1.0, 1.0, 1.0, 1.0, 0.5)
    record(4, abs(m - closed) <= 3 * se, f"MC {m:.5f} se {se:.5f} closed form {closed:.5f}", t0)


def test_c05_laq_trichotomy():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 5)
    fx = FixedCoeffs()
    lines, ok = [], True
    for name, draw in (
        ("sub", sample_subcritical_limit(DriftParams(1, 0, 1, 0), fx, SeedSpec(SEED, 1), 100_000)),
        ("crit", sample_critical_limit(DriftParams(1, 0, 0, 0), fx, 4000, SeedSpec(SEED, 2), 100_000, "chi2")),
    ):
        for h in unit_ball(rng, 5):
            v = draw.laqdj(h)
            m, se = v.mean(), v.std(ddof=1) / math.sqrt(v.size)
            ok &= abs(m - 1) <= 3 * se
            lines.append(f"{name} {(m - 1) / se:+.1f}se")
    th = DriftParams(1, 0, -1, 0)
    sup = sample_supercritical_limit(th, fx, 4000, SeedSpec(SEED, 3), 100_000, "chi2")
    v = sup.laqdj([0, 1, 0, 0])
    m, se = v.mean(), v.std(ddof=1) / math.sqrt(v.size)
    target = laq_violation_value(th, fx)
    ok &= abs(m - 1) > 5 * se and abs(m - target) <= 3 * se
    record(5, ok, f"{', '.join(lines)}; sup mean {m:.4f} se {se:.4f} closed form {target:.4f}", t0)


def test_c06_subcritical_lan():
    t0 = time.perf_counter()
    th, fx = DriftParams(1, 0, 1, 0), FixedCoeffs()
    rep = check_convergence(Regime.SUBCRITICAL, th, fx, [500.0], 2000, SEED, limit_size=100_000,
                            n_steps=100_000)[0]
    ks = max(rep.ks[f"delta{i}"] for i in range(1, 5))
    med = max(rep.info_median_abs.values())
    record(6, ks <= 0.05 and med <= 0.1, f"max KS {ks:.4f}, max median |J - J_theta| {med:.4f}", t0)


def test_c07_supercritical_lamn():
    t0 = time.perf_counter()
    th, fx = DriftParams(1, 0, -1, 0), FixedCoeffs()
    rep = check_convergence(Regime.SUPERCRITICAL, th, fx, [30.0], 2000, SEED, limit_size=100_000)[0]
    detail = ", ".join(f"{k} {v:.4f}" for k, v in rep.ks.items())
    record(7, rep.max_ks <= 0.05, f"KS {detail}", t0)


def test_c08_critical_trend():
    t0 = time.perf_counter()
    th, fx = DriftParams(1, 0, 0, 0), FixedCoeffs()
    reps = check_convergence(Regime.CRITICAL, th, fx, [1e2, 1e3, 1e4], 1000, SEED, limit_size=20_000)
    e = [r.energy for r in reps]
    record(8, e[0] > e[1] > e[2], "energy " + " > ".join(f"{x:.4f}" for x in e), t0)


def test_c09_optimal_test():
    t0 = time.perf_counter()
    th0, fx = DriftParams(1, 0, 1, 0), FixedCoeffs()
    spec = TestSpec(Regime.SUBCRITICAL, 3, th0, 0.05)
    e3 = np.eye(4)[2]
    size, _ = empirical_power(spec, np.zeros(4), 500.0, fx, 5000, SEED, 100_000)
    power, _ = empirical_power(spec, e3, 500.0, fx, 5000, SEED + 1, 100_000)
    ap = asymptotic_power(e3, e3, np.kron([[2.0, -1.0], [-1.0, 1.0]], np.eye(2)), 0.05)
    size_se = math.sqrt(0.05 * 0.95 / 5000)
    ok = abs(size - 0.05) <= 3 * size_se and abs(power - ap) <= 0.05
    record(9, ok, f"size {size:.4f} (3se {3 * size_se:.4f}), power {power:.4f} vs {ap:.4f}", t0)


def test_c10_mle_minimax():
    from heston_laq.cli import covariance_close
    t0 = time.perf_counter()
    th, fx = DriftParams(1, 0, 1, 0), FixedCoeffs()
    e, dropped = scaled_error_distribution(Regime.SUBCRITICAL, th, fx, 500.0, 2000, SEED)
    cov = np.cov(e, rowvar=False)
    target = np.linalg.inv(subcritical_info(th, fx))
    rel = np.max(np.abs(cov - target)[target != 0] / np.abs(target[target != 0]))
    cov_ok = covariance_close(cov, target, 0.15)
    res = minimax_experiment(DriftParams(1, 0, -1, 0), fx, Loss("bounded_quadratic", 1.0), 30.0, 2000, SEED,
                             bound_size=20_000)
    mm_ok = res.mle_risk >= res.bound - 3 * res.combined_se
    record(10, cov_ok and mm_ok, f"max rel cov error {rel:.3f} ({dropped} dropped); risk {res.mle_risk:.4f} "
                                 f"vs bound {res.bound:.4f} (combined se {res.combined_se:.4f})", t0)


def test_c11_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 11)
    fx = FixedCoeffs(0.9, 1.2, -0.35, 0.8, 0.1)
    # discrete Cauchy-Schwarz on 10^4 random paths, J PSD
    f = simulate_functionals(DriftParams(1.0, 0.2, 0.5, -0.1), fx, 2.0, 200, SEED, M=10_000, scheme="euler")
    J = info_matrix(f, fx, np.eye(4))
    psd = bool(np.all(f.int_Y * f.int_invY >= f.T**2 * (1 - 1e-12)) and np.linalg.eigvalsh(J)[:, 0].min() >= -1e-9)
    lin, agree, replay, n_lin = 0.0, 0.0, True, 0
    for i in range(50):
        th = DriftParams(rng.uniform(0.6, 2.0), rng.normal(), rng.choice([1.0, 0.0, -0.5]), rng.normal())
        p = simulate_heston_euler(th, fx, 3.0, 3000, SeedSpec(SEED, i))
        q = simulate_heston_euler(th, fx, 3.0, 3000, SeedSpec(SEED, i))
        w = simulate_with_increments(th, fx, 3.0, p.dW, p.dB)
        replay &= np.array_equal(p.Y, q.Y) and np.array_equal(p.X, w.X)
        if p.Y[:-1].min() <= 1e-12:
            continue
        n_lin += 1
        lin = max(lin, abs(check_linear_identity(p, th.a, th.b)) / (1 + abs(p.Y[-1])))
        g = functionals(p)
        r = scaling_matrix(th.regime, th, 3.0)
        db, do = delta_brownian(g, fx, r), delta_observable(g, th, fx, r)
        agree = max(agree, np.max(np.abs(db - do)) / np.max(np.abs(db)))
    ok = psd and lin <= 1e-10 and agree <= 1e-12 and replay
    record(11, ok, f"PSD {psd}, linear residual {lin:.1e} on {n_lin} paths, delta agreement {agree:.1e}, "
                   f"replay {replay}", t0)
