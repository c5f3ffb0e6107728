"""Statistical machinery checked against brute-force re-derivations.

Each estimator in sdlab.stats is exercised two ways: on synthetic data
whose law is exact (so the right answer is known in closed form) and on
small chain or billiard runs where only consistency and ordering can be
asserted.  Oracles recompute everything with math.fsum loops or scipy
reference routines, never by calling back into the module under test.
"""

import math

import numpy as np
import pytest
import scipy.stats

from sdlab.chain import build_linear_kernel, explicit_row, stationary_law
from sdlab.errors import ConfigError
from sdlab.geometry import build_drivebelt, build_stadium
from sdlab.martingale import truncation_level
from sdlab.stats import (autocovariance, clt_experiment,
                         kernel_constant_from_u, ks_distance,
                         path_experiment, sample_moments, tail_constant,
                         tail_constant_from_counts, transition_estimate)
from sdlab.stats import _chain_tail_constant, _model_cell_prob
from sdlab.stats import truncated_variance

SEED = 20260815


# ---------------------------------------------------------------------------
# oracles


def oracle_truncated_variance(samples, t):
    """Var(X 1_{|X|<t}) for X centered at the sample mean, via fsum."""
    xs = [float(v) for v in samples]
    mean = math.fsum(xs) / len(xs)
    y = [v - mean if abs(v - mean) < t else 0.0 for v in xs]
    my = math.fsum(y) / len(y)
    return math.fsum((v - my) ** 2 for v in y) / len(y)


def oracle_autocovariance(series, k):
    """Biased acov at lag k by explicit double indexing."""
    xs = [float(v) for v in series]
    mean = math.fsum(xs) / len(xs)
    c = [v - mean for v in xs]
    return math.fsum(c[i] * c[i + k] for i in range(len(c) - k)) / len(c)


def power_tail_counts(grid, n_samples, const, shoulder=0.0):
    """Exact cumulative counts for P(X >= g) = const/g^2 (1 + shoulder/g)."""
    grid = np.asarray(grid, dtype=np.int64)
    p = const / grid.astype(np.float64) ** 2 \
        * (1.0 + shoulder / grid.astype(np.float64))
    return np.round(p * n_samples).astype(np.int64)


def row_cell_prob(kernel, m, a, b):
    """Exact kernel mass on [a, b) by summing the explicit row."""
    lo, probs = explicit_row(kernel, m)
    ns = np.arange(lo, lo + probs.size)
    sel = (ns >= a) & (ns < b)
    return math.fsum(probs[sel].tolist())


# ---------------------------------------------------------------------------
# truncated variance


def test_truncated_variance_matches_fsum_oracle():
    rng = np.random.default_rng(SEED)
    x = rng.standard_cauchy(5000) * 3.0 + 1.5
    for t in (0.5, 2.0, 10.0, 1e6):
        assert truncated_variance(x, t) == pytest.approx(
            oracle_truncated_variance(x, t), rel=1e-12)


def test_truncated_variance_zeroes_rather_than_drops():
    # dropping the cut value would give variance of [-10/3, -10/3],
    # which is 0; zeroing keeps a third point and does not
    x = np.array([0.0, 0.0, 10.0])
    got = truncated_variance(x, 5.0)
    assert got == pytest.approx(oracle_truncated_variance(x, 5.0), rel=1e-14)
    assert got > 1.0


def test_truncated_variance_validation():
    with pytest.raises(ConfigError):
        truncated_variance(np.arange(10.0), 0.0)
    with pytest.raises(ConfigError):
        truncated_variance(np.array([1.0]), 1.0)
    with pytest.raises(ConfigError):
        truncated_variance(np.ones((3, 3)), 1.0)


# ---------------------------------------------------------------------------
# tail constant estimation


GRID = np.array([50, 80, 110, 150, 210, 280, 380, 500], dtype=np.int64)


def test_tail_constant_exact_power_law_counts():
    n = 10**8
    counts = power_tail_counts(GRID, n, 0.125)
    est = tail_constant_from_counts(GRID, counts, n)
    assert est.c_hat == pytest.approx(0.125, rel=0.01)
    assert est.ci[0] <= est.c_hat <= est.ci[1]
    assert est.plateau_start == 0
    assert np.array_equal(est.prob, counts / n)
    # n2p recomputed independently
    want = GRID.astype(np.float64) ** 2 * counts / n
    assert np.allclose(est.n2p, want, rtol=1e-14)


def test_tail_constant_skips_preasymptotic_shoulder():
    # inflate the shallow grid points by a 1/g correction large enough
    # that a flat fit over the whole grid is untenable
    n = 10**8
    counts = power_tail_counts(GRID, n, 0.125, shoulder=40.0)
    est = tail_constant_from_counts(GRID, counts, n)
    assert est.plateau_start > 0
    assert est.c_hat == pytest.approx(0.125, rel=0.35)
    # strictly better than the inverse-variance fit over the whole grid,
    # which the shallow points drag upward
    p = counts / n
    w = 1.0 / (GRID.astype(np.float64) ** 4 * p * (1.0 - p) / n)
    naive = float((w * est.n2p).sum() / w.sum())
    assert abs(est.c_hat - 0.125) < abs(naive - 0.125)


def test_tail_constant_bounded_law_and_thin_tail():
    n = 10**6
    zero = np.zeros(GRID.size, dtype=np.int64)
    est = tail_constant_from_counts(GRID, zero, n)
    assert est.c_hat == 0.0 and est.ci == (0.0, 0.0)
    thin = np.array([40, 20, 10, 5, 2, 1, 0, 0], dtype=np.int64)
    with pytest.raises(ConfigError):
        tail_constant_from_counts(GRID, thin, n)


def test_tail_constant_validation():
    n = 10**6
    good = power_tail_counts(GRID, n, 0.125)
    with pytest.raises(ConfigError):
        tail_constant_from_counts(GRID[::-1], good[::-1], n)
    bad = good.copy()
    bad[3] = bad[2] + 1  # tail counts must not increase with the level
    with pytest.raises(ConfigError):
        tail_constant_from_counts(GRID, bad, n)
    with pytest.raises(ConfigError):
        tail_constant_from_counts(GRID, good, int(good.max()) - 1)
    with pytest.raises(ConfigError):
        tail_constant_from_counts(GRID[:3], good, n)


def test_tail_constant_from_pareto_samples():
    # X = x0 / sqrt(U) has P(X >= x) = (x0/x)^2 exactly, so the
    # plateau of x^2 P(X >= x) is x0^2 at every level beyond x0
    rng = np.random.default_rng(SEED)
    x0 = 20.0
    x = x0 / np.sqrt(rng.random(4 * 10**6))
    est = tail_constant(x)
    assert est.c_hat == pytest.approx(x0 * x0, rel=0.02)
    assert est.ci[0] < x0 * x0 < est.ci[1]
    assert est.n_samples == x.size


# ---------------------------------------------------------------------------
# normality diagnostics


def test_ks_distance_matches_scipy():
    rng = np.random.default_rng(SEED)
    for sample in (rng.standard_normal(id(None) % 97 + 400),
                   rng.standard_normal(1000) * 1.4,
                   rng.random(500) * 4 - 2):
        want = scipy.stats.kstest(sample, "norm").statistic
        assert ks_distance(sample) == pytest.approx(want, abs=1e-12)
    with pytest.raises(ConfigError):
        ks_distance(np.array([]))


def test_sample_moments_against_scipy():
    rng = np.random.default_rng(SEED + 1)
    v = rng.gamma(2.0, size=4000)
    got = sample_moments(v)
    assert got["mean"] == pytest.approx(float(v.mean()), rel=1e-12)
    assert got["var"] == pytest.approx(float(v.var()), rel=1e-12)
    assert got["skew"] == pytest.approx(
        float(scipy.stats.skew(v, bias=True)), rel=1e-10)
    assert got["kurt"] == pytest.approx(
        float(scipy.stats.kurtosis(v, bias=True, fisher=False)), rel=1e-10)
    flat = sample_moments(np.full(10, 2.5))
    assert flat == {"mean": 2.5, "var": 0.0, "skew": 0.0, "kurt": 0.0}


# ---------------------------------------------------------------------------
# chain tail constant


def test_chain_tail_constant_matches_direct_sum():
    kernel = build_linear_kernel(3.0, m_max=10**6)
    pi = stationary_law(kernel)
    g = kernel.m_max // 10
    want = g * g * math.fsum(pi[g:].tolist())
    got = _chain_tail_constant(kernel)
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(0.6527104061593142, rel=1e-10)


# ---------------------------------------------------------------------------
# replica CLT experiments


def test_clt_normal_control_is_near_standard_normal():
    res = clt_experiment("normal", 400, 3000, SEED)
    assert res.values.shape == (3000,)
    assert res.D < 0.03
    assert res.moments["mean"] == pytest.approx(0.0, abs=0.1)
    assert res.moments["var"] == pytest.approx(1.0, rel=0.1)
    assert res.moments["kurt"] == pytest.approx(3.0, abs=0.4)
    assert res.meta["normalizer_ratio"] == pytest.approx(1.0, rel=1e-12)
    # theta = 0 and H = 1, so all three normalizers coincide
    for norm in ("closed-form", "uncorrected"):
        alt = clt_experiment("normal", 400, 3000, SEED, normalizer=norm)
        assert np.array_equal(alt.values, res.values)


def test_clt_is_deterministic_given_seed():
    a = clt_experiment("normal", 100, 500, SEED)
    b = clt_experiment("normal", 100, 500, SEED)
    assert np.array_equal(a.values, b.values)
    c = clt_experiment("normal", 100, 500, SEED + 1)
    assert not np.array_equal(a.values, c.values)


def test_clt_chain_uncorrected_scaling_is_detectably_wrong():
    kernel = build_linear_kernel(3.0, m_max=10**5)
    emp = clt_experiment(kernel, 2000, 400, SEED, burn_in=10**4)
    unc = clt_experiment(kernel, 2000, 400, SEED, burn_in=10**4,
                         normalizer="uncorrected")
    # dropping the (1+theta)/(1-theta) factor widens the values by
    # sqrt(10.36) ~ 3.2, an error KS cannot miss at 400 replicas
    assert unc.D > 0.20
    assert unc.D > emp.D + 0.05
    assert unc.moments["var"] > 4.0 * emp.moments["var"]
    ratio = emp.values / unc.values
    factor = (1.0 + kernel.theta) / (1.0 - kernel.theta)
    assert np.allclose(ratio, 1.0 / math.sqrt(factor), rtol=1e-12)
    assert emp.meta["c_M"] == pytest.approx(0.653, rel=2e-3)
    assert emp.meta["H_cn"] > 0
    assert 0.2 < emp.meta["normalizer_ratio"] < 1.5


def test_clt_billiard_runs_and_reports_meta():
    table = build_stadium(1.0)
    res = clt_experiment(table, 500, 200, SEED, threads=2)
    assert res.values.shape == (200,)
    assert res.meta["c_M"] == pytest.approx(0.125, abs=1e-15)
    assert res.meta["errors"] == 0
    unc = clt_experiment(table, 500, 200, SEED, threads=2,
                         normalizer="uncorrected")
    assert unc.moments["var"] > 4.0 * res.moments["var"]


def test_clt_validation():
    with pytest.raises(ConfigError):
        clt_experiment("normal", 1, 100, SEED)
    with pytest.raises(ConfigError):
        clt_experiment("normal", 100, 100, SEED, normalizer="exact")
    with pytest.raises(ConfigError):
        clt_experiment("gaussian", 100, 100, SEED)
    with pytest.raises(ConfigError):
        clt_experiment(3.14, 100, 100, SEED)
    with pytest.raises(ConfigError):
        clt_experiment(build_drivebelt(7 * math.pi / 6, 0.6, 1.0),
                       100, 100, SEED)  # no closed-form tail constant


# ---------------------------------------------------------------------------
# functional marginals


def test_path_experiment_chain_shapes_and_linearity():
    kernel = build_linear_kernel(3.0, m_max=10**5)
    tgrid = np.arange(1, 11) / 10.0
    sample, diag = path_experiment(kernel, 2000, 1200, tgrid, SEED,
                                   burn_in=10**4)
    assert sample.t_grid[0] == 0.0 and sample.t_grid[-1] == 1.0
    assert sample.W.shape == (1200, tgrid.size + 1)
    assert np.all(sample.W[:, 0] == 0.0)
    assert 0.7 < diag["slope_over_var1"] < 1.3
    assert diag["max_abs_increment_corr"] < 0.15
    assert diag["trunc"] == pytest.approx(truncation_level(2000))
    # variance must actually grow along the grid
    assert diag["var"][-1] > 3.0 * diag["var"][0]
    assert np.all(diag["ks_t"] < 0.2)


def test_path_experiment_validation():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    with pytest.raises(ConfigError):
        path_experiment(kernel, 100, 50, [0.5, 1.5], SEED)
    with pytest.raises(ConfigError):
        path_experiment(kernel, 100, 50, [0.0, 0.5], SEED)
    with pytest.raises(ConfigError):
        path_experiment("normal", 100, 50, [0.5], SEED)


# ---------------------------------------------------------------------------
# transition kernel binning


def test_model_cell_prob_is_exact_trigamma_sum():
    for m_ref, a, b in ((150.0, 60, 90), (1000.0, 400, 2800), (75.0, 30, 31)):
        want = 3.0 * m_ref / 8.0 * math.fsum(
            1.0 / k**2 for k in range(a, b))
        assert _model_cell_prob(m_ref, a, b) == pytest.approx(want, rel=1e-12)


def test_transition_estimate_matches_explicit_row():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    m_val = 150
    lo, probs = explicit_row(kernel, m_val)
    rng = np.random.default_rng(SEED)
    n_draw = rng.choice(np.arange(lo, lo + probs.size), size=2 * 10**5,
                        p=probs)
    m_arr = np.full(n_draw.size, m_val, dtype=np.int64)
    est = transition_estimate(m_arr, n_draw, m_lo=100)
    i = np.searchsorted(est.m_edges, m_val, side="right") - 1
    assert est.m_edges[i] <= m_val < est.m_edges[i + 1]
    assert est.totals[i] == n_draw.size
    checked = 0
    for j in range(est.n_edges.size - 1):
        if est.counts[i, j] < 50:
            continue
        exact = row_cell_prob(kernel, m_val,
                              int(est.n_edges[j]), int(est.n_edges[j + 1]))
        assert abs(est.p_hat[i, j] - exact) < 6 * est.stderr[i, j] + 1e-9
        # asymptotic 3m/(8n^2) model within 12 percent of the exact row
        assert est.model_p[i, j] == pytest.approx(exact, rel=0.12)
        checked += 1
    assert checked >= 4
    # every other m-bin saw no data
    assert set(est.empty_m_bins) == set(range(est.m_edges.size - 1)) - {i}


def test_transition_estimate_validation():
    with pytest.raises(ConfigError):
        transition_estimate(np.arange(10), np.arange(9))
    with pytest.raises(ConfigError):
        transition_estimate(np.ones((2, 2)), np.ones((2, 2)))


# ---------------------------------------------------------------------------
# pooled ratio histogram


def test_kernel_constant_from_u_recovers_three_eighths():
    # edges covering the full central support [1/3, 3]; then the bin
    # frequencies of u = n/m are exactly (3/8)(1/u1 - 1/u2)
    edges = np.array([1 / 3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0])
    span = 1.0 / edges[:-1] - 1.0 / edges[1:]
    n = 10**7
    counts = np.round(0.375 * span * n).astype(np.int64)
    c_hat, se = kernel_constant_from_u(edges, counts)
    assert np.allclose(c_hat, 0.375, atol=2e-4)
    assert np.all(se > 0)
    with pytest.raises(ConfigError):
        kernel_constant_from_u(edges, counts[:-1])
    with pytest.raises(ConfigError):
        kernel_constant_from_u(edges, np.zeros_like(counts))


# ---------------------------------------------------------------------------
# autocovariance


def test_autocovariance_matches_double_loop():
    rng = np.random.default_rng(SEED + 2)
    x = rng.standard_normal(60).cumsum()
    lags = [0, 1, 2, 7, 59]
    got = autocovariance(x, lags)
    for k, g in zip(lags, got):
        assert g == pytest.approx(oracle_autocovariance(x, k), rel=1e-10)


def test_autocovariance_ar1_decay():
    rng = np.random.default_rng(SEED + 3)
    rho = 0.6
    n = 2 * 10**5
    x = np.empty(n)
    x[0] = 0.0
    eps = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + eps[i]
    acov = autocovariance(x, [0, 1, 2])
    assert acov[1] / acov[0] == pytest.approx(rho, abs=0.02)
    assert acov[2] / acov[0] == pytest.approx(rho * rho, abs=0.02)


def test_autocovariance_validation():
    with pytest.raises(ConfigError):
        autocovariance(np.arange(10.0), [10])
    with pytest.raises(ConfigError):
        autocovariance(np.arange(10.0), [-1])
    with pytest.raises(ConfigError):
        autocovariance(np.array([1.0]), [0])
