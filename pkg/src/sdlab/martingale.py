"""Truncated triangular arrays and exact Doob splitting for chain runs.

Partial sums of a heavy-tailed stationary sequence are analyzed through a
level-n truncation X_k = x_k 1{|x_k| < c_n} with c_n = sqrt(n ln ln n),
followed by the Doob split X_k = Z_k + Y_k where Y_k is the one-step
conditional expectation given the previous state and Z_k is a martingale
difference.  For the surrogate spreading chains Y_k is computed exactly
from the kernel's prefix tables, so every identity here is a float64
identity rather than an estimate.  Y splits further as
Y_k = theta X_{k-1} + E_k, isolating the contraction part from the
bounded-in-the-bulk residual E_k.

For billiard data no exact filtration conditional expectation exists;
`center_within_cells` provides the labeled-cell centering proxy used for
variance-growth checks there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import (FAMILY_LINEAR, SpreadingKernel, _SUPPORT_EPS)
from .errors import ConfigError


def truncation_level(n: int) -> float:
    """c_n = sqrt(n * max(1, ln ln n)); the guard covers n < e^e."""
    if n < 1:
        raise ConfigError(f"need n >= 1, got {n}")
    return math.sqrt(n * max(1.0, math.log(math.log(max(n, 3)))))


@dataclass(frozen=True)
class TruncationRule:
    """Truncation schedule c_n with an optional floor."""

    floor: float = 1.0

    def level(self, n: int) -> float:
        return max(self.floor, truncation_level(n))


@dataclass(frozen=True)
class DoobDecomposition:
    """Arrays of one exact decomposition pass over a trajectory.

    x holds the raw states m_0..m_n; X its truncation at level c; for
    k = 1..n (array index k-1): Y[k-1] = E(X_k | m_{k-1}) exactly,
    Z = X_k - Y, E = Y - theta*X_{k-1}.  X_k = Z_k + Y_k holds to
    roundoff by construction.
    """

    x: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    E: np.ndarray
    c: float
    theta: float

    @property
    def n(self) -> int:
        return self.Y.shape[0]


def _row_windows(kernel: SpreadingKernel, m: np.ndarray):
    """Vectorized inclusive supports [lo, hi] for an array of cells."""
    mf = m.astype(np.float64)
    if kernel.family == FAMILY_LINEAR:
        lo = np.ceil(mf / kernel.beta - _SUPPORT_EPS).astype(np.int64)
        hi = np.floor(kernel.beta * mf + _SUPPORT_EPS).astype(np.int64)
    else:
        s = np.floor(np.sqrt(mf)).astype(np.int64)
        s = np.where(s * s < m, s + 1, s)
        s = np.where((s > 1) & ((s - 1) * (s - 1) >= m), s - 1, s)
        lo = s
        hi = m * m
    return np.maximum(lo, 1), np.minimum(hi, kernel.m_max)


def conditional_truncated_mean_vec(kernel: SpreadingKernel, m: np.ndarray,
                                   c: float) -> np.ndarray:
    """Exact Σ_{j < c} j·p(j|m) for every cell in m at once."""
    lo, hi = _row_windows(kernel, m)
    hi_c = np.minimum(hi, int(math.ceil(c)) - 1)
    ps1, ps2, ps3 = kernel.ps1, kernel.ps2, kernel.ps3
    mf = m.astype(np.float64)
    if kernel.family == FAMILY_LINEAR:
        z = mf * (ps2[hi] - ps2[lo - 1])
        num = mf * (ps1[np.maximum(hi_c, lo - 1)] - ps1[lo - 1])
    else:
        z = mf * (ps3[hi] - ps3[lo - 1]) + (ps2[hi] - ps2[lo - 1])
        top = np.maximum(hi_c, lo - 1)
        num = mf * (ps2[top] - ps2[lo - 1]) + (ps1[top] - ps1[lo - 1])
    out = num / z
    out[hi_c < lo] = 0.0
    return out


def doob_decompose_chain(kernel: SpreadingKernel, trajectory: np.ndarray,
                         rule: TruncationRule | None = None
                         ) -> DoobDecomposition:
    """Exact decomposition of a chain trajectory m_0..m_n.

    The trajectory must include the initial state and every consecutive
    pair must lie in the kernel's support relation; a violating pair
    means the data does not belong to this kernel and raises.
    """
    x = np.asarray(trajectory, dtype=np.int64)
    if x.ndim != 1 or x.shape[0] < 2:
        raise ConfigError("trajectory must be 1-D with at least two states")
    if x.min() < 1 or x.max() > kernel.m_max:
        raise ConfigError("trajectory leaves the kernel state space")
    lo, hi = _row_windows(kernel, x[:-1])
    nxt = x[1:]
    if np.any((nxt < lo) | (nxt > hi)):
        bad = int(np.flatnonzero((nxt < lo) | (nxt > hi))[0])
        raise ConfigError(
            f"step {bad}: {x[bad]} -> {x[bad + 1]} outside kernel support")
    n = x.shape[0] - 1
    if rule is None:
        rule = TruncationRule()
    c = rule.level(n)
    theta = kernel.theta
    X = np.where(np.abs(x) < c, x, 0).astype(np.float64)
    Y = conditional_truncated_mean_vec(kernel, x[:-1], c)
    Z = X[1:] - Y
    E = Y - theta * X[:-1]
    return DoobDecomposition(x=x, X=X, Y=Y, Z=Z, E=E, c=c, theta=theta)


def mcleish_diagnostics(decomp: DoobDecomposition, H_cn: float) -> dict:
    """Normalized martingale-square diagnostics of one decomposition.

    Returns max_term = max_k Z_k^2/(n H(c_n)) and sum_sq =
    Σ_k Z_k^2/(n H(c_n)); for an exact martingale difference array the
    first tends to 0 and the second to 1 - theta^2 as n grows.
    """
    if not H_cn > 0:
        raise ConfigError(f"H(c_n) must be positive, got {H_cn}")
    n = decomp.n
    zsq = decomp.Z * decomp.Z
    denom = n * H_cn
    return {
        "max_term": float(zsq.max() / denom),
        "sum_sq": float(zsq.sum() / denom),
        "n": n,
        "c": decomp.c,
    }


def center_within_cells(values: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Subtract the empirical cell-conditional mean from each value.

    Proxy for filtration centering when only a cell label is observable:
    values sharing a cell index get their common sample mean removed.
    The result sums to zero exactly within each cell up to roundoff.
    """
    v = np.asarray(values, dtype=np.float64)
    c = np.asarray(cells)
    if v.shape != c.shape:
        raise ConfigError("values and cells must have matching shapes")
    uniq, inv = np.unique(c, return_inverse=True)
    sums = np.bincount(inv, weights=v, minlength=uniq.shape[0])
    cnts = np.bincount(inv, minlength=uniq.shape[0])
    return v - (sums / cnts)[inv]


def xi_residual(values: np.ndarray, cells: np.ndarray) -> np.ndarray:
    """Cell-centered residual series for variance-growth checks."""
    return center_within_cells(values, cells)
