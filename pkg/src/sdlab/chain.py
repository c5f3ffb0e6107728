"""Surrogate spreading chains with exactly computable conditionals.

Two Markov families on the integer cells {1, ..., m_max} stand in for the
induced return-time process when closed-form bookkeeping is needed:

* linear spreading: from cell m the next cell n is supported on
  [ceil(m/beta), floor(beta*m)] with row weights m/n^2.  The one-step
  contraction factor of the conditional mean is
  theta = 2 ln(beta) / (beta - 1/beta) < 1.
* algebraic spreading: support [ceil(sqrt(m)), min(m^2, m_max)] with row
  weights (m + n)/n^3; the conditional mean grows like sqrt(m), so the
  contraction factor relative to m is 0.

Rows are normalized exactly on their finite support, which absorbs the
bounded lower-order corrections of the idealized kernels.  All row sums,
conditional means, and inverse-CDF draws run off three shared prefix-sum
tables (of 1/j, 1/j^2, 1/j^3) accumulated in extended precision, so row
operations are O(log m_max) and exact to float64 roundoff.

Sampling is counter-based: draw k of a replica depends only on (seed, k),
so the jit and vectorized fallback paths produce bit-identical streams.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._accel import (FORCE_FALLBACK, HAVE_NUMBA, njit, replica_seed,
                     stream_u64, u64_to_unit, unit_jit, unit_vec)
from .errors import ConfigError

_SUPPORT_EPS = 1e-12  # guards ceil/floor against float noise in m/beta

FAMILY_LINEAR = 1
FAMILY_ALGEBRAIC = 2


def theta_linear(beta: float) -> float:
    """Contraction factor 2 ln(beta)/(beta - 1/beta) of the linear family.

    Continuous on beta > 1 with limit 1 as beta -> 1+ and decreasing in
    beta; always strictly inside (0, 1).
    """
    if not beta > 1.0:
        raise ConfigError(f"linear spreading needs beta > 1, got {beta}")
    return 2.0 * math.log(beta) / (beta - 1.0 / beta)


def _prefix_tables(m_max: int):
    # accumulate in extended precision; float64-rounded differences of
    # these tables carry relative error ~1e-10 even for short windows
    j = np.arange(m_max + 1, dtype=np.longdouble)
    j[0] = 1.0  # placeholder, slot 0 is zeroed below
    inv = 1.0 / j
    inv[0] = 0.0
    ps1 = np.cumsum(inv)
    ps2 = np.cumsum(inv * inv)
    ps3 = np.cumsum(inv * inv * inv)
    return (ps1.astype(np.float64), ps2.astype(np.float64),
            ps3.astype(np.float64))


@dataclass(frozen=True)
class SpreadingKernel:
    """Immutable row tables for one spreading family on [1, m_max]."""

    family: int
    beta: float
    m_max: int
    c0: float
    ps1: np.ndarray
    ps2: np.ndarray
    ps3: np.ndarray

    @property
    def theta(self) -> float:
        if self.family == FAMILY_LINEAR:
            return theta_linear(self.beta)
        return 0.0

    @property
    def family_name(self) -> str:
        return "linear" if self.family == FAMILY_LINEAR else "algebraic"


def build_linear_kernel(beta: float, m_max: int = 10**6) -> SpreadingKernel:
    """Linear spreading kernel; rows p(n|m) ∝ m/n² on [⌈m/β⌉, ⌊βm⌋]."""
    th = theta_linear(beta)
    if not th < 1.0:
        raise ConfigError(f"contraction factor {th} not < 1 for beta={beta}")
    if m_max < 10**3:
        raise ConfigError(f"m_max must be >= 1000, got {m_max}")
    ps1, ps2, ps3 = _prefix_tables(m_max)
    c0 = 1.0 / (beta - 1.0 / beta)
    return SpreadingKernel(FAMILY_LINEAR, float(beta), int(m_max), c0,
                           ps1, ps2, ps3)


def build_algebraic_kernel(m_max: int = 10**6) -> SpreadingKernel:
    """Algebraic spreading kernel; rows ∝ (m+n)/n³ on [⌈√m⌉, min(m², m_max)]."""
    if m_max < 10**3:
        raise ConfigError(f"m_max must be >= 1000, got {m_max}")
    ps1, ps2, ps3 = _prefix_tables(m_max)
    return SpreadingKernel(FAMILY_ALGEBRAIC, 0.0, int(m_max), 0.0,
                           ps1, ps2, ps3)


def row_support(kernel: SpreadingKernel, m: int) -> tuple[int, int]:
    """Inclusive support [lo, hi] of the row at cell m."""
    if not 1 <= m <= kernel.m_max:
        raise ConfigError(f"cell {m} outside [1, {kernel.m_max}]")
    if kernel.family == FAMILY_LINEAR:
        lo = int(math.ceil(m / kernel.beta - _SUPPORT_EPS))
        hi = int(math.floor(kernel.beta * m + _SUPPORT_EPS))
    else:
        s = int(math.sqrt(m))
        while s * s < m:
            s += 1
        while s > 1 and (s - 1) * (s - 1) >= m:
            s -= 1
        lo = s
        hi = m * m
    return max(lo, 1), min(hi, kernel.m_max)


def _row_norm(kernel: SpreadingKernel, m: int, lo: int, hi: int) -> float:
    if kernel.family == FAMILY_LINEAR:
        return m * (kernel.ps2[hi] - kernel.ps2[lo - 1])
    return (m * (kernel.ps3[hi] - kernel.ps3[lo - 1])
            + (kernel.ps2[hi] - kernel.ps2[lo - 1]))


def explicit_row(kernel: SpreadingKernel, m: int):
    """Materialize one row; returns (lo, probs) with probs summing to 1.

    The returned probabilities are each weight divided by the exactly
    summed total, so math.fsum(probs) - 1 is a few ulps at most.
    """
    lo, hi = row_support(kernel, m)
    n = np.arange(lo, hi + 1, dtype=np.float64)
    if kernel.family == FAMILY_LINEAR:
        w = m / (n * n)
    else:
        w = (m + n) / (n * n * n)
    total = math.fsum(w)
    return lo, w / total


def conditional_mean(kernel: SpreadingKernel, m: int) -> float:
    """Exact Σ n·p(n|m) over the full row support."""
    lo, hi = row_support(kernel, m)
    z = _row_norm(kernel, m, lo, hi)
    if kernel.family == FAMILY_LINEAR:
        num = m * (kernel.ps1[hi] - kernel.ps1[lo - 1])
    else:
        num = (m * (kernel.ps2[hi] - kernel.ps2[lo - 1])
               + (kernel.ps1[hi] - kernel.ps1[lo - 1]))
    return num / z


def conditional_truncated_mean(kernel: SpreadingKernel, m: int,
                               c: float) -> float:
    """Exact Σ_{n < c} n·p(n|m); the row normalization stays untruncated."""
    if not c > 0:
        raise ConfigError(f"truncation level must be positive, got {c}")
    lo, hi = row_support(kernel, m)
    hi_c = min(hi, int(math.ceil(c)) - 1)
    if hi_c < lo:
        return 0.0
    z = _row_norm(kernel, m, lo, hi)
    if kernel.family == FAMILY_LINEAR:
        num = m * (kernel.ps1[hi_c] - kernel.ps1[lo - 1])
    else:
        num = (m * (kernel.ps2[hi_c] - kernel.ps2[lo - 1])
               + (kernel.ps1[hi_c] - kernel.ps1[lo - 1]))
    return num / z


def stationary_law(kernel: SpreadingKernel) -> np.ndarray:
    """Exact reversible stationary law of the chain.

    Both families satisfy detailed balance with pi(m) ∝ Z(m)/m³ where
    Z(m) is the row normalization: the joint weight pi(m)·p(n|m) is then
    symmetric in (m, n) because the support relation is.  Returns the
    normalized law indexed 0..m_max with slot 0 equal to 0.
    """
    mm = kernel.m_max
    mi = np.arange(1, mm + 1, dtype=np.int64)
    m = mi.astype(np.float64)
    if kernel.family == FAMILY_LINEAR:
        lo = np.ceil(m / kernel.beta - _SUPPORT_EPS).astype(np.int64)
        hi = np.floor(kernel.beta * m + _SUPPORT_EPS).astype(np.int64)
    else:
        s = np.floor(np.sqrt(m)).astype(np.int64)
        s = np.where(s * s < mi, s + 1, s)
        s = np.where((s > 1) & ((s - 1) * (s - 1) >= mi), s - 1, s)
        lo = s
        hi = mi * mi
    lo = np.maximum(lo, 1)
    hi = np.minimum(hi, mm)
    if kernel.family == FAMILY_LINEAR:
        z = m * (kernel.ps2[hi] - kernel.ps2[lo - 1])
    else:
        z = (m * (kernel.ps3[hi] - kernel.ps3[lo - 1])
             + (kernel.ps2[hi] - kernel.ps2[lo - 1]))
    pi = np.zeros(mm + 1, dtype=np.float64)
    pi[1:] = z / m**3
    pi /= pi.sum()
    return pi


@dataclass(frozen=True)
class ChainState:
    """Current cell plus a short history window and a draw counter."""

    m: int
    clock: int = 0
    window: tuple = field(default=())


def sample_stationary_cell(kernel: SpreadingKernel, seed: int) -> ChainState:
    """Initial cell from the heavy-tailed law pi(m) ∝ m⁻³ on [1, m_max].

    Exact finite-range inverse CDF through the 1/j³ prefix table; the
    draw consumes counter 0 of the seed's stream.
    """
    u = u64_to_unit(stream_u64(int(seed), 0))
    t = u * kernel.ps3[kernel.m_max]
    m = int(np.searchsorted(kernel.ps3, t, side="left"))
    m = min(max(m, 1), kernel.m_max)
    return ChainState(m=m, clock=1, window=(m,))


def chain_step(kernel: SpreadingKernel, state: ChainState,
               seed: int) -> ChainState:
    """One exact inverse-CDF step from the row at the current cell."""
    if not 1 <= state.m <= kernel.m_max:
        raise ConfigError(f"cell {state.m} outside [1, {kernel.m_max}]")
    u = u64_to_unit(stream_u64(int(seed), state.clock))
    n = _draw_py(kernel, state.m, u)
    window = (state.window + (n,))[-8:]
    return ChainState(m=n, clock=state.clock + 1, window=window)


def _draw_py(kernel: SpreadingKernel, m: int, u: float) -> int:
    lo, hi = row_support(kernel, m)
    if kernel.family == FAMILY_LINEAR:
        a = kernel.ps2[lo - 1]
        t = a + u * (kernel.ps2[hi] - a)
        n = int(np.searchsorted(kernel.ps2, t, side="left"))
    else:
        a3 = kernel.ps3[lo - 1]
        a2 = kernel.ps2[lo - 1]
        z3 = m * (kernel.ps3[hi] - a3)
        z2 = kernel.ps2[hi] - a2
        t = u * (z3 + z2)
        if t <= z3:
            n = int(np.searchsorted(kernel.ps3, a3 + t / m, side="left"))
        else:
            n = int(np.searchsorted(kernel.ps2, a2 + (t - z3), side="left"))
    return min(max(n, lo), hi)


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _draw_jit(family, beta, m_max, ps2, ps3, m, u):
        if family == FAMILY_LINEAR:
            lo = int(math.ceil(m / beta - _SUPPORT_EPS))
            hi = int(math.floor(beta * m + _SUPPORT_EPS))
        else:
            s = int(math.sqrt(m))
            while s * s < m:
                s += 1
            while s > 1 and (s - 1) * (s - 1) >= m:
                s -= 1
            lo = s
            hi = m * m
        if lo < 1:
            lo = 1
        if hi > m_max:
            hi = m_max
        if family == FAMILY_LINEAR:
            a = ps2[lo - 1]
            t = a + u * (ps2[hi] - a)
            n = int(np.searchsorted(ps2, t, side="left"))
        else:
            a3 = ps3[lo - 1]
            a2 = ps2[lo - 1]
            z3 = m * (ps3[hi] - a3)
            z2 = ps2[hi] - a2
            t = u * (z3 + z2)
            if t <= z3:
                n = int(np.searchsorted(ps3, a3 + t / m, side="left"))
            else:
                n = int(np.searchsorted(ps2, a2 + (t - z3), side="left"))
        if n < lo:
            n = lo
        if n > hi:
            n = hi
        return n

    @njit(cache=True, nogil=True)
    def _clt_kernel(family, beta, m_max, ps2, ps3, seeds, n, burn, trunc,
                    grid_idx, out_sums, out_tsums, out_grid, out_tgrid,
                    out_final, counts):
        for j in range(seeds.shape[0]):
            sd = seeds[j]
            u = unit_jit(sd, 0)
            t = u * ps3[m_max]
            m = int(np.searchsorted(ps3, t, side="left"))
            if m < 1:
                m = 1
            if m > m_max:
                m = m_max
            cnt = 1
            for _ in range(burn):
                u = unit_jit(sd, cnt)
                cnt += 1
                m = _draw_jit(family, beta, m_max, ps2, ps3, m, u)
            s = np.int64(0)
            st = np.int64(0)
            gi = 0
            for k in range(1, n + 1):
                u = unit_jit(sd, cnt)
                cnt += 1
                m = _draw_jit(family, beta, m_max, ps2, ps3, m, u)
                s += m
                if m < trunc:
                    st += m
                counts[m] += 1
                if gi < grid_idx.shape[0] and k == grid_idx[gi]:
                    out_grid[j, gi] = s
                    out_tgrid[j, gi] = st
                    gi += 1
            out_sums[j] = s
            out_tsums[j] = st
            out_final[j] = m

    @njit(cache=True, nogil=True)
    def _path_kernel(family, beta, m_max, ps2, ps3, sd, n, burn, out):
        u = unit_jit(sd, 0)
        t = u * ps3[m_max]
        m = int(np.searchsorted(ps3, t, side="left"))
        if m < 1:
            m = 1
        if m > m_max:
            m = m_max
        cnt = 1
        for _ in range(burn):
            u = unit_jit(sd, cnt)
            cnt += 1
            m = _draw_jit(family, beta, m_max, ps2, ps3, m, u)
        for k in range(n):
            u = unit_jit(sd, cnt)
            cnt += 1
            m = _draw_jit(family, beta, m_max, ps2, ps3, m, u)
            out[k] = m


def _draw_vec(kernel: SpreadingKernel, m: np.ndarray,
              u: np.ndarray) -> np.ndarray:
    """Vectorized row draw; same arithmetic as the scalar paths."""
    ps2, ps3 = kernel.ps2, kernel.ps3
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
    np.clip(lo, 1, None, out=lo)
    np.clip(hi, None, kernel.m_max, out=hi)
    if kernel.family == FAMILY_LINEAR:
        a = ps2[lo - 1]
        t = a + u * (ps2[hi] - a)
        n = np.searchsorted(ps2, t, side="left")
    else:
        a3 = ps3[lo - 1]
        a2 = ps2[lo - 1]
        z3 = mf * (ps3[hi] - a3)
        z2 = ps2[hi] - a2
        t = u * (z3 + z2)
        low_part = t <= z3
        n3 = np.searchsorted(ps3, a3 + t / mf, side="left")
        n2 = np.searchsorted(ps2, a2 + (t - z3), side="left")
        n = np.where(low_part, n3, n2)
    return np.clip(n, lo, hi)


def _clt_run_vec(kernel: SpreadingKernel, seeds: np.ndarray, n: int,
                 burn: int, trunc: float, grid_idx: np.ndarray):
    reps = seeds.shape[0]
    u = unit_vec(seeds, np.uint64(0))
    t = u * kernel.ps3[kernel.m_max]
    m = np.searchsorted(kernel.ps3, t, side="left")
    m = np.clip(m, 1, kernel.m_max)
    cnt = 1
    for _ in range(burn):
        u = unit_vec(seeds, np.uint64(cnt))
        cnt += 1
        m = _draw_vec(kernel, m, u)
    sums = np.zeros(reps, dtype=np.int64)
    tsums = np.zeros(reps, dtype=np.int64)
    grid_sums = np.zeros((reps, grid_idx.shape[0]), dtype=np.int64)
    tgrid_sums = np.zeros((reps, grid_idx.shape[0]), dtype=np.int64)
    counts = np.zeros(kernel.m_max + 1, dtype=np.int64)
    gi = 0
    for k in range(1, n + 1):
        u = unit_vec(seeds, np.uint64(cnt))
        cnt += 1
        m = _draw_vec(kernel, m, u)
        sums += m
        tsums += np.where(m < trunc, m, 0)
        np.add.at(counts, m, 1)
        if gi < grid_idx.shape[0] and k == grid_idx[gi]:
            grid_sums[:, gi] = sums
            tgrid_sums[:, gi] = tsums
            gi += 1
    return sums, tsums, grid_sums, tgrid_sums, m.astype(np.int64), counts


def chain_path(kernel: SpreadingKernel, n: int, seed: int,
               burn_in: int = 0) -> np.ndarray:
    """One trajectory of n cells after burn_in steps from a pi-start."""
    out = np.empty(n, dtype=np.int64)
    if HAVE_NUMBA:
        _path_kernel(kernel.family, kernel.beta, kernel.m_max,
                     kernel.ps2, kernel.ps3, np.uint64(seed), n, burn_in, out)
        return out
    seeds = np.array([seed], dtype=np.uint64)
    u = unit_vec(seeds, np.uint64(0))
    t = u * kernel.ps3[kernel.m_max]
    m = int(np.clip(np.searchsorted(kernel.ps3, t, side="left"),
                    1, kernel.m_max)[0])
    cnt = 1
    for _ in range(burn_in):
        u = float(unit_vec(seeds, np.uint64(cnt))[0])
        cnt += 1
        m = _draw_py(kernel, m, u)
    for k in range(n):
        u = float(unit_vec(seeds, np.uint64(cnt))[0])
        cnt += 1
        m = _draw_py(kernel, m, u)
        out[k] = m
    return out


def chain_clt_run(kernel: SpreadingKernel, n: int, replicas: int,
                  master_seed: int, burn_in: int = 10**4,
                  tgrid=None, trunc: float = math.inf,
                  threads: int | None = None) -> dict:
    """Replica partial sums of the chain plus a pooled cell histogram.

    Each replica r runs its own counter stream with seed split from
    master_seed, starts from the m⁻³ law, discards burn_in steps, then
    sums n further cells.  Returns raw sums, sums of cells truncated at
    `trunc`, both also at the ⌊t·n⌋ marks of the optional t-grid, final
    states, and pooled visit counts (for the empirical truncated
    variance and mean).  Deterministic for fixed (master_seed, kernel,
    n, burn_in) regardless of thread count.
    """
    seeds = np.array([replica_seed(master_seed, r) for r in range(replicas)],
                     dtype=np.uint64)
    if tgrid is None:
        grid_idx = np.empty(0, dtype=np.int64)
    else:
        grid_idx = np.unique(np.maximum(1, (np.asarray(tgrid, dtype=np.float64)
                                            * n).astype(np.int64)))
    if not HAVE_NUMBA:
        sums, tsums, grid_sums, tgrid_sums, final, counts = _clt_run_vec(
            kernel, seeds, n, burn_in, trunc, grid_idx)
        return {"sums": sums, "sums_trunc": tsums, "grid_sums": grid_sums,
                "grid_sums_trunc": tgrid_sums, "grid_idx": grid_idx,
                "final": final, "counts": counts, "n": n,
                "replicas": replicas, "burn_in": burn_in, "trunc": trunc}
    if threads is None or threads < 1:
        threads = 1
    threads = min(threads, replicas)
    bounds = np.linspace(0, replicas, threads + 1).astype(np.int64)
    sums = np.zeros(replicas, dtype=np.int64)
    tsums = np.zeros(replicas, dtype=np.int64)
    grid_sums = np.zeros((replicas, grid_idx.shape[0]), dtype=np.int64)
    tgrid_sums = np.zeros((replicas, grid_idx.shape[0]), dtype=np.int64)
    final = np.zeros(replicas, dtype=np.int64)
    counts_loc = np.zeros((threads, kernel.m_max + 1), dtype=np.int64)

    def run_slice(i):
        a, b = bounds[i], bounds[i + 1]
        if a == b:
            return
        _clt_kernel(kernel.family, kernel.beta, kernel.m_max,
                    kernel.ps2, kernel.ps3, seeds[a:b], n, burn_in,
                    float(trunc), grid_idx, sums[a:b], tsums[a:b],
                    grid_sums[a:b], tgrid_sums[a:b], final[a:b],
                    counts_loc[i])

    if threads == 1:
        run_slice(0)
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run_slice, range(threads)))
    return {"sums": sums, "sums_trunc": tsums, "grid_sums": grid_sums,
            "grid_sums_trunc": tgrid_sums, "grid_idx": grid_idx,
            "final": final, "counts": counts_loc.sum(axis=0), "n": n,
            "replicas": replicas, "burn_in": burn_in, "trunc": trunc}
