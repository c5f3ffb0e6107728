"""Spreading-chain kernels against brute-force row enumeration.

The oracle builds each row by direct summation of the defining weights
(m/n^2 for the linear family, (m+n)/n^3 for the algebraic one) with
math.fsum, independently of the prefix-sum tables that power the
production code.
"""

import math
from fractions import Fraction

import numpy as np
import pytest

from sdlab.chain import (FAMILY_ALGEBRAIC, FAMILY_LINEAR,
                         build_algebraic_kernel, build_linear_kernel,
                         chain_clt_run, chain_path, conditional_mean,
                         conditional_truncated_mean, explicit_row,
                         row_support, sample_stationary_cell,
                         stationary_law, theta_linear)
from sdlab.errors import ConfigError

SEED = 20260815


# --- oracle -----------------------------------------------------------------


def oracle_row(kernel, m):
    """Row of the transition kernel by direct weight enumeration."""
    if kernel.family == FAMILY_LINEAR:
        beta = kernel.beta
        lo = math.ceil(m / beta - 1e-12)
        hi = min(math.floor(beta * m + 1e-12), kernel.m_max)
        weights = {n: m / n**2 for n in range(max(lo, 1), hi + 1)}
    else:
        lo = math.ceil(math.sqrt(m) - 1e-12)
        hi = min(m * m, kernel.m_max)
        weights = {n: (m + n) / n**3 for n in range(max(lo, 1), hi + 1)}
    z = math.fsum(weights.values())
    return {n: w / z for n, w in weights.items()}


def test_theta_closed_form_values():
    # exact rational-log forms of the contraction factor
    assert theta_linear(3.0) == pytest.approx(3.0 * math.log(3.0) / 4.0,
                                              abs=1e-15)
    assert theta_linear(7.0) == pytest.approx(7.0 * math.log(7.0) / 24.0,
                                              abs=1e-15)
    with pytest.raises(ConfigError):
        theta_linear(1.0)


def test_theta_monotone_decreasing():
    betas = np.linspace(1.01, 50, 200)
    vals = [theta_linear(b) for b in betas]
    assert all(0 < v < 1 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("m", [1, 2, 3, 10, 97, 1000])
def test_linear_rows_match_oracle(m):
    kernel = build_linear_kernel(3.0, m_max=10**4)
    ref = oracle_row(kernel, m)
    lo, ps = explicit_row(kernel, m)
    ns = list(range(lo, lo + ps.size))
    assert set(ns) == set(ref)
    for n, p in zip(ns, ps):
        assert p == pytest.approx(ref[n], rel=1e-10)
    assert math.fsum(ps) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("m", [1, 2, 5, 30, 400])
def test_algebraic_rows_match_oracle(m):
    kernel = build_algebraic_kernel(m_max=10**4)
    ref = oracle_row(kernel, m)
    lo, ps = explicit_row(kernel, m)
    ns = list(range(lo, lo + ps.size))
    assert set(ns) == set(ref)
    for n, p in zip(ns, ps):
        assert p == pytest.approx(ref[n], rel=1e-10)


def test_row_support_band():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    lo, hi = row_support(kernel, 100)
    assert (lo, hi) == (34, 300)
    # support never leaves the state space
    for m in (1, 2, 9999, 10**4):
        lo, hi = row_support(kernel, m)
        assert 1 <= lo <= hi <= kernel.m_max


def test_conditional_mean_matches_oracle_and_contracts():
    kernel = build_linear_kernel(3.0, m_max=10**5)
    theta = kernel.theta
    for m in (10, 100, 5000):
        ref = math.fsum(n * p for n, p in oracle_row(kernel, m).items())
        assert conditional_mean(kernel, m) == pytest.approx(ref, rel=1e-10)
        # E(n | m) = theta m + O(1) far from the state-space edges
        assert conditional_mean(kernel, m) == pytest.approx(theta * m, abs=2.0)


def test_conditional_truncated_mean_matches_oracle():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    for m, c in ((100, 150.0), (100, 34.0), (40, 1000.0)):
        ref = math.fsum(n * p for n, p in oracle_row(kernel, m).items()
                        if n < c)
        assert conditional_truncated_mean(kernel, m, c) == pytest.approx(
            ref, rel=1e-10, abs=1e-12)


def test_stationary_law_normalized_and_reversible():
    kernel = build_linear_kernel(3.0, m_max=2000)
    pi = stationary_law(kernel)
    assert pi[0] == 0.0
    assert math.fsum(pi) == pytest.approx(1.0, abs=1e-12)
    # detailed balance pi(m) p(n|m) = pi(n) p(m|n) for the m/n^2 family
    for m in (3, 17, 240):
        lo, ps = explicit_row(kernel, m)
        for k in range(0, ps.size, max(1, ps.size // 7)):
            n = lo + k
            lo2, ps2 = explicit_row(kernel, n)
            j = m - lo2
            if j < 0 or j >= ps2.size:
                continue
            assert pi[m] * ps[k] == pytest.approx(pi[n] * ps2[j], rel=1e-8)


def test_stationary_mean_frozen_value():
    # oracle: E_pi(m) for beta = 3, m_max = 10^6, computed by direct
    # summation of the normalized m^-3-tilted law; frozen to 12 digits
    kernel = build_linear_kernel(3.0, m_max=10**6)
    pi = stationary_law(kernel)
    mean = float(np.arange(pi.size) @ pi)
    assert mean == pytest.approx(1.6880002299636099, rel=1e-12)


def test_chain_path_stays_in_support():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    path = chain_path(kernel, 20000, SEED)
    assert path.min() >= 1 and path.max() <= kernel.m_max
    # every transition lies in the one-step band
    m, n = path[:-1], path[1:]
    lo = np.ceil(m / 3.0 - 1e-12)
    hi = np.minimum(np.floor(3.0 * m + 1e-12), kernel.m_max)
    assert bool(np.all((n >= lo) & (n <= hi)))


def test_chain_path_deterministic_and_threads_dont_matter():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    a = chain_path(kernel, 5000, SEED)
    b = chain_path(kernel, 5000, SEED)
    assert np.array_equal(a, b)
    r1 = chain_clt_run(kernel, 2000, 6, SEED, burn_in=50, threads=1)
    r2 = chain_clt_run(kernel, 2000, 6, SEED, burn_in=50, threads=3)
    assert np.array_equal(r1["sums"], r2["sums"])
    assert np.array_equal(r1["counts"], r2["counts"])


def test_stationary_start_is_reproducible():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    s1 = sample_stationary_cell(kernel, SEED)
    s2 = sample_stationary_cell(kernel, SEED)
    assert s1.m == s2.m


def test_clt_run_grid_sums_consistent():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    n = 3000
    run = chain_clt_run(kernel, n, 4, SEED, burn_in=10,
                        tgrid=np.array([0.5, 1.0]))
    # the t = 1 grid column equals the full sum, untruncated and truncated
    assert np.array_equal(run["grid_sums"][:, -1], run["sums"])
    assert run["grid_idx"][-1] == n


def test_empirical_law_matches_stationary_law():
    # long single path vs the closed-form law, coarse chi-square
    kernel = build_linear_kernel(3.0, m_max=10**3)
    pi = stationary_law(kernel)
    path = chain_path(kernel, 4 * 10**5, SEED, burn_in=10**3)
    edges = [1, 2, 3, 5, 9, 17, 33, 1001]
    obs = np.histogram(path, bins=edges)[0]
    exp = np.array([pi[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    exp = exp * path.size
    chi2 = float(((obs - exp) ** 2 / exp).sum())
    # 6 dof at alpha = 0.001 is 22.46; correlated samples widen this,
    # so the bound is loose but still catches a wrong row family
    assert chi2 < 80.0
