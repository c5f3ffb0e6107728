"""Exactness of the truncated Doob splitting on chain trajectories.

These are identity tests: the decomposition is defined by float64
formulas that must hold to roundoff, not statistically.
"""

import math

import numpy as np
import pytest

from sdlab.chain import (build_algebraic_kernel, build_linear_kernel,
                         chain_path, conditional_truncated_mean)
from sdlab.errors import ConfigError
from sdlab.martingale import (DoobDecomposition, TruncationRule,
                              center_within_cells,
                              conditional_truncated_mean_vec,
                              doob_decompose_chain, mcleish_diagnostics,
                              truncation_level, xi_residual)

SEED = 20260815


def test_truncation_level_values():
    # sqrt(n max(1, ln ln n)); for n = 10^4 this is 149.00761075756657
    assert truncation_level(10**4) == pytest.approx(
        math.sqrt(10**4 * math.log(math.log(10**4))), abs=1e-12)
    assert truncation_level(10**4) == pytest.approx(149.00761075756657,
                                                    abs=1e-10)
    # below e^e the inner log dips under 1 and the guard takes over
    assert truncation_level(3) == pytest.approx(math.sqrt(3.0))
    assert truncation_level(15) == pytest.approx(math.sqrt(15.0))
    with pytest.raises(ConfigError):
        truncation_level(0)


def test_vectorized_truncated_mean_matches_scalar():
    for kernel in (build_linear_kernel(3.0, m_max=10**4),
                   build_algebraic_kernel(m_max=10**4)):
        m = np.array([1, 2, 7, 50, 99, 2500], dtype=np.int64)
        for c in (5.0, 60.0, 10**5):
            vec = conditional_truncated_mean_vec(kernel, m, c)
            for j, mm in enumerate(m):
                assert vec[j] == pytest.approx(
                    conditional_truncated_mean(kernel, int(mm), c),
                    rel=1e-12, abs=1e-12)


def _decomp(n=4000):
    kernel = build_linear_kernel(3.0, m_max=10**5)
    path = chain_path(kernel, n + 1, SEED, burn_in=100)
    return kernel, doob_decompose_chain(kernel, path)


def test_reconstruction_is_exact():
    _, d = _decomp()
    # X_k = Z_k + Y_k is exact by construction
    assert np.array_equal(d.X[1:], d.Z + d.Y)
    # E_k = Y_k - theta X_{k-1} likewise
    assert np.array_equal(d.E, d.Y - d.theta * d.X[:-1])


def test_telescoping_identity():
    # (1 - theta) sum X_k = sum Z + theta (X_0 - X_n) + sum E, exactly
    # up to float addition reordering
    _, d = _decomp()
    lhs = (1.0 - d.theta) * math.fsum(d.X[1:])
    rhs = (math.fsum(d.Z) + d.theta * (d.X[0] - d.X[-1]) + math.fsum(d.E))
    assert lhs == pytest.approx(rhs, abs=1e-6 * max(1.0, abs(lhs)))


def test_martingale_increment_has_zero_conditional_mean():
    # brute-force check on a handful of states: E(Z | m) = 0 where the
    # truncation does not bite, shifted by the truncated row mass when
    # it does
    kernel = build_linear_kernel(3.0, m_max=10**4)
    c = 500.0
    for m in (5, 80, 166):
        from sdlab.chain import explicit_row
        lo, ps = explicit_row(kernel, m)
        ns = np.arange(lo, lo + ps.size, dtype=np.float64)
        X = np.where(np.abs(ns) < c, ns, 0.0)
        y = conditional_truncated_mean_vec(kernel,
                                           np.array([m], dtype=np.int64),
                                           c)[0]
        assert float(X @ ps) == pytest.approx(y, rel=1e-10)


def test_truncation_zeroes_large_states():
    kernel = build_linear_kernel(3.0, m_max=10**5)
    path = chain_path(kernel, 2001, SEED + 3, burn_in=100)
    d = doob_decompose_chain(kernel, path)
    big = np.abs(d.x.astype(np.float64)) >= d.c
    assert np.all(d.X[big] == 0.0)
    assert np.all(d.X[~big] == d.x[~big])


def test_residual_bounded_in_the_bulk():
    # away from the truncation shoulder, |E_k| stays a few multiples of
    # the family's O(1) row correction
    kernel, d = _decomp(10**4)
    bulk = d.x[:-1] < d.c / 3.0
    assert bulk.sum() > 0.9 * d.n
    assert float(np.abs(d.E[bulk]).max()) < 10.0


def test_mcleish_diagnostics_fields_and_control_case():
    _, d = _decomp(2000)
    h = float(np.var(d.X))
    out = mcleish_diagnostics(d, h)
    assert out["n"] == 2000
    assert 0.0 < out["max_term"] < out["sum_sq"]
    with pytest.raises(ConfigError):
        mcleish_diagnostics(d, 0.0)


def test_decompose_rejects_foreign_trajectory():
    kernel = build_linear_kernel(3.0, m_max=10**4)
    with pytest.raises(ConfigError):
        doob_decompose_chain(kernel, np.array([10, 1000]))  # outside band
    with pytest.raises(ConfigError):
        doob_decompose_chain(kernel, np.array([5]))


def test_truncation_rule_floor():
    rule = TruncationRule(floor=50.0)
    assert rule.level(4) == 50.0
    assert rule.level(10**4) == pytest.approx(truncation_level(10**4))


def test_center_within_cells_zero_mean_per_label():
    rng = np.random.default_rng(SEED)
    values = rng.normal(size=1000) + rng.integers(0, 4, size=1000) * 2.0
    cells = rng.integers(0, 4, size=1000)
    centered = center_within_cells(values, cells)
    for lab in range(4):
        sel = cells == lab
        assert abs(centered[sel].mean()) < 1e-12


def test_xi_residual_matches_direct_computation():
    rng = np.random.default_rng(SEED + 1)
    values = rng.exponential(size=500)
    cells = rng.integers(0, 3, size=500)
    xi = xi_residual(values, cells)
    direct = center_within_cells(values, cells)
    assert np.allclose(xi, direct - direct.mean(), atol=1e-12)
