import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from heston_laq.engine import simulate_functionals
from heston_laq.functionals import functionals
from heston_laq.harness import two_sample_ks
from heston_laq.limits import stationary_law
from heston_laq.model import DriftParams, FixedCoeffs, ParameterError
from heston_laq.sde import (CHUNK, Scheme, SeedSpec, cir_end_and_integral, critical_limit_triplets, default_n_steps,
                            grid_steps, simulate_cir_exact, simulate_heston, simulate_heston_euler,
                            simulate_heston_exact, simulate_heston_split, simulate_with_increments,
                            supercritical_limit_pairs, write_path_csv)


def cir_mean(a, b, y0, t):
    # solution of m' = a - b m
    if b == 0:
        return y0 + a * t
    return y0 * math.exp(-b * t) + a / b * (1 - math.exp(-b * t))


def test_grid_defaults():
    assert default_n_steps(1.0) == 1000
    assert default_n_steps(50.0) == 10000
    assert grid_steps(DriftParams(1, 0, 1, 0), 50.0) == 10000
    assert grid_steps(DriftParams(1, 0, -1, 0), 30.0) == 90000


@pytest.mark.parametrize("scheme", list(Scheme))
def test_same_seed_is_bit_identical(scheme, sub_theta, corr_fixed):
    p = simulate_heston(sub_theta, corr_fixed, 2.0, 3000, SeedSpec(7, 3), scheme)
    q = simulate_heston(sub_theta, corr_fixed, 2.0, 3000, SeedSpec(7, 3), scheme)
    assert np.array_equal(p.Y, q.Y) and np.array_equal(p.X, q.X)
    r = simulate_heston(sub_theta, corr_fixed, 2.0, 3000, SeedSpec(7, 4), scheme)
    assert not np.array_equal(p.Y, r.Y)


def test_seed_spec_bounds():
    with pytest.raises(ValueError):
        SeedSpec(-1)
    with pytest.raises(ValueError):
        SeedSpec(0, 2**64)


def test_zero_increments_follow_drift_flow(corr_fixed):
    th = DriftParams(1.3, 0.2, 0.7, -0.4)
    n, T = 500, 2.0
    p = simulate_with_increments(th, corr_fixed, T, np.zeros(n), np.zeros(n))
    dt = T / n
    y, x = corr_fixed.y0, corr_fixed.x0
    for _ in range(n):
        y, x = y + (th.a - th.b * y) * dt, x + (th.alpha - th.beta * y) * dt
    assert p.Y[-1] == pytest.approx(y, rel=1e-12)
    assert p.X[-1] == pytest.approx(x, rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("scheme", [Scheme.EULER, Scheme.SPLIT])
def test_stored_increments_replay(scheme, sub_theta, corr_fixed):
    p = simulate_heston(sub_theta, corr_fixed, 3.0, 2500, SeedSpec(11), scheme)
    q = simulate_with_increments(sub_theta, corr_fixed, 3.0, p.dW, p.dB)
    np.testing.assert_array_equal(p.Y, q.Y)
    np.testing.assert_array_equal(p.X, q.X)


def test_split_path_stays_positive():
    th = DriftParams(0.6, 0.0, 2.0, 0.0)
    p = simulate_heston_split(th, FixedCoeffs(sigma1=1.0, y0=0.05), 20.0, 4000, 3)
    assert p.Y.min() > 0


def test_split_requirements():
    with pytest.raises(ParameterError):
        simulate_heston_split(DriftParams(0.2, 0, 1, 0), FixedCoeffs(), 1.0, 100)
    with pytest.raises(ParameterError):
        simulate_heston_split(DriftParams(1, 0, 200, 0), FixedCoeffs(), 1.0, 100)


@pytest.mark.parametrize("bad", [dict(T=0.0), dict(T=float("nan")), dict(n_steps=0), dict(n_steps=2.5)])
def test_invalid_grid(bad, sub_theta, unit_fixed):
    kw = dict(T=1.0, n_steps=10) | bad
    with pytest.raises(ParameterError):
        simulate_heston_euler(sub_theta, unit_fixed, kw["T"], kw["n_steps"])


@pytest.mark.parametrize("scheme", ["euler", "split"])
def test_batch_engine_matches_single_paths(scheme, sub_theta, corr_fixed):
    n = CHUNK + 300  # spans a chunk boundary
    f = simulate_functionals(sub_theta, corr_fixed, 2.0, n, 21, M=5, scheme=scheme, threads=2)
    for i in range(5):
        g = functionals(simulate_heston(sub_theta, corr_fixed, 2.0, n, SeedSpec(21, i), scheme))
        for name in ("int_Y", "int_invY", "iw_inv", "ib_sqrt", "dy_over_y", "dx_over_y", "Y_T", "X_T"):
            assert getattr(f, name)[i] == pytest.approx(getattr(g, name), rel=1e-12, abs=1e-12)


def test_batch_independent_of_thread_count(sub_theta, unit_fixed):
    f1 = simulate_functionals(sub_theta, unit_fixed, 1.0, 200, 5, M=300, threads=1)
    f4 = simulate_functionals(sub_theta, unit_fixed, 1.0, 200, 5, M=300, threads=4)
    assert np.array_equal(f1.int_Y, f4.int_Y) and np.array_equal(f1.X_T, f4.X_T)
    sub = simulate_functionals(sub_theta, unit_fixed, 1.0, 200, 5, indices=[7, 250])
    assert np.array_equal(sub.Y_T, f1.Y_T[[7, 250]])


def test_exact_cir_mean():
    y = simulate_cir_exact(1.0, 1.0, 1.0, 1.0, 1.0, 4, seed=2, size=100_000)[:, -1]
    se = y.std() / math.sqrt(y.size)
    assert abs(y.mean() - cir_mean(1, 1, 1, 1)) < 3 * se


def test_euler_mean_matches_exact():
    th, fx = DriftParams(1, 0, 1, 0), FixedCoeffs()
    f = simulate_functionals(th, fx, 1.0, 1000, 3, M=100_000, scheme="euler")
    ye, _ = cir_end_and_integral(1.0, 1.0, 1.0, 1.0, 1.0, 10, 4, 100_000)
    se = math.hypot(f.Y_T.std(), ye.std()) / math.sqrt(100_000)
    assert abs(f.Y_T.mean() - ye.mean()) < 4 * se


def test_weak_order_gap_halves():
    th, fx = DriftParams(1.0, 0.0, 1.0, 0.0), FixedCoeffs(sigma1=0.5, y0=2.0)
    exact = cir_end_and_integral(1.0, 1.0, 0.5, 2.0, 1.0, 1, 9, 200_000)[0].mean()
    gaps = []
    for n in (2, 4):
        f = simulate_functionals(th, fx, 1.0, n, 8, M=200_000, scheme="euler")
        gaps.append(abs(f.Y_T.mean() - exact))
    noise = 3 * 0.6 / math.sqrt(200_000)
    assert gaps[1] + noise <= 0.5 * gaps[0] + noise and gaps[0] > 10 * noise


@pytest.mark.parametrize("method", ["poisson", "chi2"])
def test_critical_limit_means(method):
    fx = FixedCoeffs(sigma1=1.0, sigma2=1.5, rho=0.3)
    y1, iy, x1 = critical_limit_triplets(1.0, 0.4, fx, 200, 5, 100_000, method)
    assert abs(y1.mean() - 1.0) < 3 * y1.std() / math.sqrt(y1.size)
    assert abs(x1.mean() - 0.4) < 3 * x1.std() / math.sqrt(x1.size)
    # E int_0^1 Y = a/2 from the zero start
    assert abs(iy.mean() - 0.5) < 3 * iy.std() / math.sqrt(iy.size) + 1.0 / 200


def test_critical_zero_start_mean_linear():
    y = simulate_cir_exact(1.0, 0.0, 1.0, 0.0, 2.0, 4, seed=6, size=100_000)
    for k, t in ((2, 1.0), (4, 2.0)):
        assert abs(y[:, k].mean() - t) < 3 * y[:, k].std() / math.sqrt(len(y))


def test_supercritical_pair_mean():
    ye, iy = supercritical_limit_pairs(1.0, 1.0, -2.0, 1.0, 100, 7, 100_000)
    target = 1.0 + 1.0 * 0.5
    assert abs(ye.mean() - target) < 3 * ye.std() / math.sqrt(ye.size)
    assert np.all(iy > 0)


def test_stationary_marginal():
    th, fx = DriftParams(1, 0, 1, 0), FixedCoeffs()
    ye, _ = cir_end_and_integral(1.0, 1.0, 1.0, 1.0, 30.0, 30, 1, 10_000)
    ref = stationary_law(1.0, 1.0, 1.0).sample(2, 100_000)
    assert two_sample_ks(ye, ref) < 0.03


def test_exact_path_has_no_increments(sub_theta, corr_fixed):
    p = simulate_heston_exact(sub_theta, corr_fixed, 1.0, 200, 1)
    assert not p.has_increments and p.scheme is Scheme.EXACT
    assert np.all(p.Y >= 0)


def test_path_csv(tmp_path, sub_theta, unit_fixed):
    p = simulate_heston_euler(sub_theta, unit_fixed, 1.0, 10, 0)
    out = write_path_csv(p, tmp_path / "p.csv")
    rows = out.read_text().splitlines()
    assert rows[0] == "t,Y,X,dW,dB" and len(rows) == 12
    assert rows[-1].endswith(",,")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 3000))
def test_replay_property(seed, n):
    th, fx = DriftParams(1.2, 0.1, 0.8, 0.3), FixedCoeffs(0.9, 1.1, 0.5, 0.8, 0.0)
    p = simulate_heston_euler(th, fx, 1.5, n, seed)
    q = simulate_with_increments(th, fx, 1.5, p.dW, p.dB)
    assert np.array_equal(p.Y, q.Y)
