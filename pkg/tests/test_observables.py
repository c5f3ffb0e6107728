"""Observable catalog, excursion sums, and channel averages.

Oracle: excursion sums recomputed by raw orbit iteration, and channel
integrals by scipy quadrature on each flat interval.
"""

import math
import warnings

import numpy as np
import pytest
from scipy import integrate

from sdlab.errors import ConfigError
from sdlab.geometry import build_stadium, run_orbit
from sdlab.induced import long_excursion_start, return_map, sample_mu
from sdlab.observables import (CATALOG_NAMES, Observable,
                               build_catalog_entry, channel_average_stadium,
                               channel_bump, channel_integral, constant,
                               flat_sine, holder_spot_check, induced_value,
                               kac_centered)

SEED = 20260815
STADIUM = build_stadium(1.0)


# --- oracles ----------------------------------------------------------------


def oracle_induced_value(table, f, r, phi):
    """Excursion sum by raw orbit scanning: f at the start plus f at
    every intermediate collision, the closing return excluded."""
    s = return_map(table, (r, phi))
    total = f(r, phi)
    rs, ps, _ = run_orbit(table, r, phi, s.R)
    for i in range(s.R - 1):
        total += f(float(rs[i]), float(ps[i]))
    return total, s


def oracle_channel_integral(f, ranges, phi=0.0):
    out = 0.0
    for a, b in ranges:
        val, _ = integrate.quad(lambda r: f(r, phi), a, b, limit=200)
        out += val
    return out


def test_channel_integral_matches_quadrature():
    A = ((0.0, 1.0), (math.pi + 1.0, math.pi + 2.0))
    funcs = [
        lambda r, phi: 1.0,
        lambda r, phi: r,
        lambda r, phi: math.exp(-r) * (1 + 0.3 * math.cos(2 * r)),
    ]
    for f in funcs:
        assert channel_integral(f, A) == pytest.approx(
            oracle_channel_integral(f, A), rel=1e-9)


def test_channel_average_closed_forms():
    l = 1.0
    assert channel_average_stadium(constant(3.5), l) == pytest.approx(3.5)
    assert channel_average_stadium(flat_sine(STADIUM), l) == pytest.approx(
        0.0, abs=1e-12)
    # quartic bump profile integrates to 2/3 of its plateau
    bump = channel_bump(STADIUM)
    assert channel_average_stadium(bump, l) == pytest.approx(2.0 / 3.0,
                                                             rel=1e-9)
    # f = r on both flats: mean of r over the two intervals
    f_r = Observable(lambda r, phi: r, gamma=1.0, tag="ramp")
    expect = (0.5 + math.pi + 1.5) / 2.0
    assert channel_average_stadium(f_r, l) == pytest.approx(expect, rel=1e-10)


def test_induced_value_matches_oracle():
    for j in range(12):
        rs, ps, _ = sample_mu(STADIUM, 1, SEED + j)
        r, phi = float(rs[0]), float(ps[0])
        for f in (constant(1.0), channel_bump(STADIUM), flat_sine(STADIUM)):
            ref, s_ref = oracle_induced_value(STADIUM, f, r, phi)
            val, s = induced_value(STADIUM, f, r, phi)
            assert s.R == s_ref.R
            assert val == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_kac_centered_excursion_sum_is_R_minus_mean():
    f = kac_centered(STADIUM)
    er = (math.pi + 1.0) / 2.0
    for j in range(8):
        rs, ps, _ = sample_mu(STADIUM, 1, SEED + 100 + j)
        val, s = induced_value(STADIUM, f, float(rs[0]), float(ps[0]))
        assert val == pytest.approx(s.R - er, abs=1e-10)


def test_long_excursions_average_the_channel():
    # excursions sweeping the channel at shallow angle see the channel
    # mean of f: f_tilde / R approaches I_f
    bump = channel_bump(STADIUM)
    i_f = channel_average_stadium(bump, 1.0)
    devs = []
    for j, eps in enumerate((2e-3, 1e-3, 5e-4, 2.5e-4)):
        x = long_excursion_start(STADIUM, 0.37 + 0.02 * j, eps)
        if x is None:
            continue
        val, s = induced_value(STADIUM, bump, x[0], x[1])
        assert s.R > 200
        devs.append(abs(val / s.R - i_f))
    assert len(devs) >= 3
    assert float(np.median(devs)) < 0.05


def test_catalog_build_and_names():
    for name in CATALOG_NAMES:
        obs = build_catalog_entry(name, STADIUM)
        assert isinstance(obs, Observable)
        assert callable(obs)
    with pytest.raises(ConfigError):
        build_catalog_entry("no_such_observable", STADIUM)


def test_flat_sine_vanishes_off_channel_and_is_periodic():
    f = flat_sine(STADIUM, periods=2)
    assert f(2.0, 0.3) == 0.0  # on the arc
    assert f(0.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert f(1.0, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_holder_spot_check_discriminates():
    quiet = [constant(1.0), channel_bump(STADIUM), flat_sine(STADIUM)]
    for obs in quiet:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            holder_spot_check(obs, STADIUM, seed=3)
    # a genuine discontinuity in phi must trip the warning
    jumpy = Observable(lambda r, phi: float(np.sign(phi)), gamma=1.0,
                       tag="sgn")
    with pytest.warns(UserWarning):
        holder_spot_check(jumpy, STADIUM, seed=3)
    # unbounded Holder quotient: |phi|^0.2 declared with gamma = 1
    cusp = Observable(lambda r, phi: abs(phi) ** 0.2, gamma=1.0, tag="cusp")
    with pytest.warns(UserWarning):
        holder_spot_check(cusp, STADIUM, seed=3)
