"""Empirical limit-theorem machinery for heavy-tailed return processes.

The processes studied here have exact tails P(X >= n) ~ c/n^2, so the
variance diverges and partial sums are normalized by sqrt(n H(c_n))
with H the truncated variance and c_n = sqrt(n ln ln n) the truncation
level.  This module estimates the tail constant from streamed counts,
runs replica Monte Carlo instantiations of the central limit theorem
and its functional version, bins transition-kernel frequencies against
the 3m/(8n^2) model, and measures autocovariance decay.

Convergence under sqrt(n ln n) normalizations is logarithmic, so the
Kolmogorov-Smirnov tolerances used downstream are deliberately loose
(0.05 to 0.08) and reported alongside the statistics rather than being
enforced here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, polygamma
from scipy.stats import chi2 as _chi2

from .errors import ConfigError
from ._accel import replica_seed
from .chain import SpreadingKernel, chain_clt_run, stationary_law
from .geometry import BilliardTable
from .martingale import truncation_level
from . import induced as _ind

BOOTSTRAP_RESAMPLES = 200
PLATEAU_MIN_COUNT = 100
PLATEAU_CHI2_Q = 0.99


# ---------------------------------------------------------------------------
# truncated variance and tails


def truncated_variance(samples, t: float) -> float:
    """H(t): population variance of the centered samples cut at |x| < t.

    The samples are centered at their own mean first; values at or
    beyond the cut are zeroed, not dropped, matching the definition
    Var(X 1_{|X|<t}) for centered X.
    """
    if not t > 0:
        raise ConfigError(f"truncation level must be positive, got {t}")
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ConfigError("need a 1-D sample of size >= 2")
    c = x - x.mean()
    y = np.where(np.abs(c) < t, c, 0.0)
    return float(y.var())


@dataclass(frozen=True)
class TailEstimate:
    """Grid scan of n^2 P(X >= n) with a plateau estimate and CI."""

    grid: np.ndarray
    counts: np.ndarray
    n_samples: int
    n2p: np.ndarray
    c_hat: float
    ci: tuple
    plateau_start: int

    @property
    def prob(self) -> np.ndarray:
        return self.counts / self.n_samples


def _plateau(grid, counts, n_samples):
    """Weighted mean over the longest flat trailing suffix of the scan.

    Grid points with fewer than PLATEAU_MIN_COUNT hits carry too much
    relative noise and are ignored.  Among the rest, the estimate uses
    the longest suffix whose inverse-variance-weighted dispersion
    passes a chi-square flatness test: early grid points sit on the
    pre-asymptotic shoulder of the law and must not dilute the limit.
    Returns (c_hat, index of first grid point used).
    """
    el = np.flatnonzero(counts >= PLATEAU_MIN_COUNT)
    if el.size == 0:
        raise ValueError("no eligible grid points")
    v = grid[el] ** 2 * (counts[el] / n_samples)
    p = counts[el] / n_samples
    var = grid[el].astype(np.float64) ** 4 * p * (1.0 - p) / n_samples
    w = 1.0 / np.maximum(var, 1e-300)
    best = el.size - 1  # the deepest eligible point always qualifies
    for start in range(el.size - 2, -1, -1):
        ws, vs = w[start:], v[start:]
        mean = float((ws * vs).sum() / ws.sum())
        chi2 = float((ws * (vs - mean) ** 2).sum())
        if chi2 > _chi2.ppf(PLATEAU_CHI2_Q, df=ws.size - 1):
            break
        best = start
    ws, vs = w[best:], v[best:]
    c_hat = float((ws * vs).sum() / ws.sum())
    return c_hat, int(el[best])


def tail_constant_from_counts(grid, counts, n_samples: int) -> TailEstimate:
    """Plateau of n^2 P(X >= n) from streamed cumulative tail counts.

    counts[i] is the number of samples with X >= grid[i]; this is the
    entry point for runs too large to keep in memory.  All-zero counts
    signal a bounded law and give estimate 0; counts that are nonzero
    but everywhere below the reliability cut mean the grid probes
    deeper than the sample can support.
    """
    grid = np.asarray(grid, dtype=np.int64)
    counts = np.asarray(counts, dtype=np.int64)
    if grid.ndim != 1 or grid.shape != counts.shape or grid.size == 0:
        raise ConfigError("grid and counts must be matching 1-D arrays")
    if np.any(np.diff(grid) <= 0):
        raise ConfigError("grid must be strictly increasing")
    if np.any(counts < 0) or np.any(np.diff(counts) > 0):
        raise ConfigError("tail counts must be nonnegative and nonincreasing")
    if n_samples < int(counts.max(initial=0)):
        raise ConfigError("sample size smaller than a tail count")
    n2p = grid.astype(np.float64) ** 2 * counts / n_samples
    if counts.max(initial=0) == 0:
        return TailEstimate(grid=grid, counts=counts, n_samples=n_samples,
                            n2p=n2p, c_hat=0.0, ci=(0.0, 0.0),
                            plateau_start=0)
    if counts.max() < PLATEAU_MIN_COUNT:
        raise ConfigError(
            "insufficient tail mass: no grid point reaches "
            f"{PLATEAU_MIN_COUNT} hits; the grid probes too deep")
    c_hat, start = _plateau(grid, counts, n_samples)

    # bootstrap over the layered multinomial: resample the disjoint
    # occupancy (below grid, between grid points, beyond last point)
    layers = np.concatenate((
        [n_samples - counts[0]], counts[:-1] - counts[1:], [counts[-1]]))
    rng = np.random.default_rng(int(grid[-1]) * 1000003 + n_samples % 999983)
    boots = np.empty(BOOTSTRAP_RESAMPLES)
    prob = layers / n_samples
    with np.errstate(invalid="ignore", divide="ignore"):
        for b in range(BOOTSTRAP_RESAMPLES):
            lay = rng.multinomial(n_samples, prob)
            cnt = lay[::-1].cumsum()[::-1][1:]
            try:
                boots[b], _ = _plateau(grid, cnt, n_samples)
            except ValueError:
                boots[b] = np.nan
    lo, hi = np.nanpercentile(boots, [2.5, 97.5])
    return TailEstimate(grid=grid, counts=counts, n_samples=n_samples,
                        n2p=n2p, c_hat=c_hat, ci=(float(lo), float(hi)),
                        plateau_start=start)


def tail_constant(samples, grid=None) -> TailEstimate:
    """Plateau of n^2 P(|X| >= n) from raw samples on a grid of levels."""
    x = np.abs(np.asarray(samples, dtype=np.float64))
    if x.ndim != 1 or x.size == 0:
        raise ConfigError("need a nonempty 1-D sample")
    if grid is None:
        grid = np.unique(np.round(
            np.geomspace(50, 500, 9)).astype(np.int64))
    grid = np.asarray(grid, dtype=np.int64)
    counts = np.array([(x >= g).sum() for g in grid], dtype=np.int64)
    return tail_constant_from_counts(grid, counts, x.size)


# ---------------------------------------------------------------------------
# normality diagnostics


def ks_distance(values) -> float:
    """Sup distance between the empirical CDF and the standard normal."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.ndim != 1 or v.size == 0:
        raise ConfigError("need a nonempty 1-D sample")
    n = v.size
    cdf = ndtr(v)
    i = np.arange(1, n + 1)
    d_plus = float((i / n - cdf).max())
    d_minus = float((cdf - (i - 1) / n).max())
    return max(d_plus, d_minus)


def sample_moments(values) -> dict:
    """Mean, variance, skewness and standardized kurtosis (normal: 3)."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise ConfigError("need a 1-D sample of size >= 2")
    m = float(v.mean())
    c = v - m
    var = float((c ** 2).mean())
    if var == 0.0:
        return {"mean": m, "var": 0.0, "skew": 0.0, "kurt": 0.0}
    s = math.sqrt(var)
    return {
        "mean": m,
        "var": var,
        "skew": float((c ** 3).mean() / s ** 3),
        "kurt": float((c ** 4).mean() / s ** 4),
    }


# ---------------------------------------------------------------------------
# replica experiments


@dataclass(frozen=True)
class CltResult:
    values: np.ndarray
    D: float
    moments: dict
    meta: dict = field(default_factory=dict)


def _chain_tail_constant(kernel: SpreadingKernel) -> float:
    """c_M = lim g^2 P(m >= g) under the exact stationary law."""
    pi = stationary_law(kernel)
    g = kernel.m_max // 10
    return float(g * g * pi[g:].sum())


def _chain_small_stats(kernel: SpreadingKernel, counts: np.ndarray,
                       c: float):
    """Mean and H(c) of the cell law from pooled occupation counts."""
    m = np.arange(counts.shape[0], dtype=np.float64)
    tot = counts.sum()
    mean = float((m * counts).sum() / tot)
    x = m - mean
    mask = np.abs(x) < c
    ex = float((x * counts)[mask].sum() / tot)
    ex2 = float((x * x * counts)[mask].sum() / tot)
    return mean, ex2 - ex * ex


def clt_experiment(source, n: int, replicas: int, master_seed: int,
                   normalizer: str = "empirical", burn_in: int = 10 ** 4,
                   threads: int | None = None) -> CltResult:
    """Replica partial sums, centered and normalized toward N(0, 1).

    source is a SpreadingKernel (surrogate chain), a BilliardTable (its
    return-time process under the induced map), or the string "normal"
    (i.i.d. standard normal control, theta = 0, H = 1).  The empirical
    normalizer is sqrt((1+theta)/(1-theta) n H(c_n)) with H estimated
    from the run itself; the closed-form variant replaces n H(c_n) by
    c_M n ln n.  Pass normalizer="uncorrected" to drop the
    (1+theta)/(1-theta) factor (a deliberately wrong scaling that the
    distance to N(0,1) must detect).  The meta dict reports the
    empirical-to-closed-form normalizer ratio and simulation error
    counts.
    """
    if n < 2 or replicas < 2:
        raise ConfigError("need n >= 2 and replicas >= 2")
    if normalizer not in ("empirical", "closed-form", "uncorrected"):
        raise ConfigError(f"unknown normalizer {normalizer!r}")
    c_n = truncation_level(n)
    meta = {"normalizer": normalizer, "n": n, "replicas": replicas,
            "errors": 0}

    if isinstance(source, str):
        if source != "normal":
            raise ConfigError(f"unknown source {source!r}")
        rng = np.random.default_rng(master_seed)
        sums = rng.standard_normal((replicas, n)).sum(axis=1)
        theta = 0.0
        h_emp = 1.0
        closed = math.sqrt(n)
        denom = math.sqrt(n * h_emp) if normalizer != "closed-form" else closed
        meta["normalizer_ratio"] = math.sqrt(n * h_emp) / closed
    elif isinstance(source, SpreadingKernel):
        run = chain_clt_run(source, n, replicas, master_seed,
                            burn_in=burn_in, threads=threads)
        theta = source.theta
        mean, h_emp = _chain_small_stats(source, run["counts"], c_n)
        c_m = _chain_tail_constant(source)
        sums = run["sums"] - n * mean
        factor = (1.0 + theta) / (1.0 - theta)
        closed = math.sqrt(factor * c_m * n * math.log(n))
        emp = math.sqrt(factor * n * h_emp)
        denom = {"empirical": emp, "closed-form": closed,
                 "uncorrected": math.sqrt(n * h_emp)}[normalizer]
        meta["normalizer_ratio"] = emp / closed
        meta["c_M"] = c_m
        meta["H_cn"] = h_emp
    elif isinstance(source, BilliardTable):
        theta = 3.0 * math.log(3.0) / 4.0  # spreading ratio 3 dynamics
        e_r = 1.0 / _ind.measure_M_closed_form(source)
        s_raw, sing = _ind.replica_return_sums(
            source, n, replicas, master_seed,
            threads=threads if threads else 1)
        meta["errors"] = sing
        sums = s_raw.astype(np.float64) - n * e_r
        stats = _ind.collect_return_stats(
            source, min(2 * 10 ** 6, 200 * n), replica_seed(master_seed, 10 ** 6),
            return_samples=min(2 * 10 ** 6, 200 * n))
        h_emp = truncated_variance(stats.samples.astype(np.float64), c_n)
        c_m = _billiard_tail_constant(source)
        factor = (1.0 + theta) / (1.0 - theta)
        closed = math.sqrt(factor * c_m * n * math.log(n))
        emp = math.sqrt(factor * n * h_emp)
        denom = {"empirical": emp, "closed-form": closed,
                 "uncorrected": math.sqrt(n * h_emp)}[normalizer]
        meta["normalizer_ratio"] = emp / closed
        meta["c_M"] = c_m
        meta["H_cn"] = h_emp
    else:
        raise ConfigError("source must be a kernel, a table, or 'normal'")

    values = sums / denom
    return CltResult(values=values, D=ks_distance(values),
                     moments=sample_moments(values), meta=meta)


def _billiard_tail_constant(table: BilliardTable) -> float:
    """Closed-form tail constant of the return time where available."""
    if table.family == "stadium":
        l = table.params["l"]
        return l * l / 8.0
    raise ConfigError(
        f"no closed-form return tail constant for {table.family!r}")


@dataclass(frozen=True)
class PathSample:
    """Replica paths W(t) on a fixed t-grid (t=0 prepended, W(0)=0)."""

    t_grid: np.ndarray
    W: np.ndarray
    meta: dict = field(default_factory=dict)


def path_experiment(source, n: int, replicas: int, t_grid, master_seed: int,
                    burn_in: int = 10 ** 4,
                    threads: int | None = None) -> tuple:
    """Functional-limit marginals from truncated partial sums.

    W(t) accumulates the first floor(t n) cells truncated at c_n,
    centered and divided by sqrt(n H(c_n)); truncation removes the rare
    giant cells whose squared contribution would otherwise dominate
    every variance estimate on the grid.  Returns (PathSample, diag)
    where diag holds the per-t variances, the regression slope of
    Var W(t) against t, its ratio to Var W(1), the disjoint-increment
    correlation matrix, and per-t distances to N(0, sigma2 t) with
    sigma2 the empirical variance at t = 1.
    """
    t = np.asarray(t_grid, dtype=np.float64)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0) or np.any(t > 1):
        raise ConfigError("t-grid must lie in (0, 1]")
    t = np.unique(t)
    c_n = truncation_level(n)
    if isinstance(source, SpreadingKernel):
        run = chain_clt_run(source, n, replicas, master_seed,
                            burn_in=burn_in, tgrid=t, trunc=c_n,
                            threads=threads)
        mean, h_emp = _chain_small_stats(source, run["counts"], c_n)
        marks = run["grid_idx"]
        sums_t = run["grid_sums_trunc"].astype(np.float64)
    elif isinstance(source, BilliardTable):
        marks = np.unique(np.maximum(1, (t * n).astype(np.int64)))
        sums_t, mean, h_emp = _billiard_grid_sums(
            source, n, replicas, marks, c_n, master_seed,
            threads if threads else 1)
    else:
        raise ConfigError("source must be a kernel or a table")
    # truncation changes the mean of a cell; center with the truncated mean
    mu_trunc = mean + _truncated_mean_shift(source, c_n)
    W = (sums_t - np.outer(np.ones(replicas), marks) * mu_trunc) \
        / math.sqrt(n * h_emp)
    tt = marks / n
    var = W.var(axis=0)
    fit = np.polyfit(tt, var, 1)
    slope = float(fit[0])
    var1 = float(var[-1]) if tt[-1] == 1.0 else float(np.polyval(fit, 1.0))
    inc = np.diff(np.concatenate(
        (np.zeros((replicas, 1)), W), axis=1), axis=1)
    corr = np.corrcoef(inc, rowvar=False)
    off = corr - np.eye(corr.shape[0])
    sigma2 = float(W[:, -1].var()) / tt[-1]
    ks_t = np.array([ks_distance(W[:, j] / math.sqrt(sigma2 * tt[j]))
                     for j in range(tt.size)])
    t_full = np.concatenate(([0.0], tt))
    W_full = np.concatenate((np.zeros((replicas, 1)), W), axis=1)
    diag = {
        "t": tt, "var": var, "slope": slope,
        "slope_over_var1": slope / var1,
        "increment_corr": corr,
        "max_abs_increment_corr": float(np.abs(off).max()),
        "ks_t": ks_t, "sigma2": sigma2, "trunc": c_n,
    }
    sample = PathSample(t_grid=t_full, W=W_full,
                        meta={"n": n, "replicas": replicas, "trunc": c_n})
    return sample, diag


def _truncated_mean_shift(source, c: float) -> float:
    """E[X 1_{X>=c}] removed by truncation, per cell, sign flipped.

    For the nonnegative heavy-tailed cells here the truncated mean is
    mean - E[X 1_{X >= c}]; the tail integral is ~ c_M / c and matters
    because it is multiplied by n >> c downstream.
    """
    if isinstance(source, SpreadingKernel):
        pi = stationary_law(source)
        m = np.arange(pi.shape[0], dtype=np.float64)
        return -float((m * pi)[m >= c].sum())
    # P(R = k) ~ 2 c_M / k^3, so E[R 1_{R >= c}] ~ 2 c_M / c
    c_m = _billiard_tail_constant(source)
    return -2.0 * c_m / c


def _billiard_grid_sums(table, n, replicas, marks, trunc, master_seed,
                        threads):
    """Per-replica truncated return-sum marks via the streaming kernel."""
    from concurrent.futures import ThreadPoolExecutor

    from .geometry import sample_collision_measure, piece_of

    is_m = _ind._is_m_array(table)
    first = 1 if table.m_first_only else 0
    mode, half = _ind._label_mode(table)
    seeds = [int(replica_seed(master_seed, r)) for r in range(replicas)]
    out = np.zeros((replicas, marks.size), dtype=np.float64)
    pooled = []

    def run_replica(r):
        rs, ps = sample_collision_measure(table, 1, seeds[r], start=0)
        state_f = np.array([rs[0], ps[0]], dtype=np.float64)
        state_i = np.array([int(piece_of(table, rs[0])), 0, 0, 1, 2, 0],
                           dtype=np.int64)
        out_R = np.empty(n, dtype=np.int64)
        out_flag = np.empty(n, dtype=np.int8)
        out_k = np.empty(n, dtype=np.int8)
        filled, _ = _ind._collect_kernel(
            table.kind, table.prm, table.r0, is_m, first, mode, half,
            state_f, state_i, np.uint64(seeds[r]), out_R, out_flag, out_k,
            n, _ind.DEFAULT_CAP)
        x = np.where(out_R[:filled] < trunc, out_R[:filled], 0)
        cs = np.cumsum(x)
        out[r] = cs[np.minimum(marks, filled) - 1]
        return out_R[:filled] if r < 8 else None

    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        for res in ex.map(run_replica, range(replicas)):
            if res is not None:
                pooled.append(res)
    samples = np.concatenate(pooled).astype(np.float64)
    mean = 1.0 / _ind.measure_M_closed_form(table)
    h_emp = truncated_variance(samples, trunc)
    return out, mean, h_emp


# ---------------------------------------------------------------------------
# transition kernel estimation


@dataclass(frozen=True)
class TransitionEstimate:
    """Binned conditional frequencies p(n-bin | m-bin) with errors."""

    m_edges: np.ndarray
    n_edges: np.ndarray
    counts: np.ndarray
    totals: np.ndarray
    p_hat: np.ndarray
    stderr: np.ndarray
    model_p: np.ndarray
    empty_m_bins: np.ndarray


def _model_cell_prob(m_ref: float, a: int, b: int) -> float:
    """Model mass 3m/8 sum_{a <= n < b} 1/n^2 via trigamma differences."""
    s = float(polygamma(1, a) - polygamma(1, b))
    return 3.0 * m_ref / 8.0 * s


def transition_estimate(m, n, m_lo: int = 50, m_hi: int | None = None,
                        n_bins_per_decade: int = 8) -> TransitionEstimate:
    """Conditional frequencies of consecutive return pairs.

    m-bins are geometric with ratio 1.2 (width 20% of m, matching how
    slowly the kernel varies in its first argument); n-bins are
    logarithmic.  p_hat rows are conditional on the m-bin; stderr is
    the per-cell multinomial standard error; model_p evaluates the
    3m/(8n^2) kernel at the m-bin's mean.  Empty m-bins are reported
    in empty_m_bins, not fatal.
    """
    m = np.asarray(m, dtype=np.int64)
    n = np.asarray(n, dtype=np.int64)
    if m.shape != n.shape or m.ndim != 1:
        raise ConfigError("m and n must be matching 1-D arrays")
    if m_hi is None:
        m_hi = max(int(m.max(initial=2)), m_lo + 1)
    edges = [float(m_lo)]
    while edges[-1] < m_hi:
        edges.append(edges[-1] * 1.2)
    m_edges = np.array(edges)
    n_min = max(1, int(n.min(initial=1)))
    n_max = max(int(n.max(initial=2)), n_min + 1)
    kbins = max(2, int(math.ceil(
        math.log10(n_max / n_min) * n_bins_per_decade)))
    n_edges = np.unique(np.round(
        np.geomspace(n_min, n_max + 1, kbins + 1)).astype(np.int64))
    nm = m_edges.size - 1
    nn = n_edges.size - 1
    counts = np.zeros((nm, nn), dtype=np.int64)
    m_sum = np.zeros(nm)
    mi = np.digitize(m, m_edges) - 1
    ni = np.digitize(n, n_edges) - 1
    ok = (mi >= 0) & (mi < nm) & (ni >= 0) & (ni < nn)
    np.add.at(counts, (mi[ok], ni[ok]), 1)
    np.add.at(m_sum, mi[ok], m[ok])
    totals = counts.sum(axis=1)
    empty = np.flatnonzero(totals == 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        p_hat = counts / totals[:, None]
        stderr = np.sqrt(p_hat * (1.0 - p_hat) / totals[:, None])
    model = np.zeros_like(p_hat)
    for i in range(nm):
        m_ref = m_sum[i] / totals[i] if totals[i] > 0 else \
            0.5 * (m_edges[i] + m_edges[i + 1])
        for j in range(nn):
            model[i, j] = _model_cell_prob(m_ref, int(n_edges[j]),
                                           int(n_edges[j + 1]))
    return TransitionEstimate(
        m_edges=m_edges, n_edges=n_edges, counts=counts, totals=totals,
        p_hat=p_hat, stderr=stderr, model_p=model, empty_m_bins=empty)


def kernel_constant_from_u(u_edges, u_counts) -> tuple:
    """Per-u-bin kernel constants from pooled ratio counts.

    If p(n | m) = c / n^2 on the central support then the ratio
    u = n/m falls in [u1, u2) with probability ~ (c/m)(m/u1 - m/u2)
    / m = c (1/u1 - 1/u2), so the bin frequency divided by
    (1/u1 - 1/u2) estimates c (model value 3/8).  Returns (c_hat,
    stderr) arrays, one entry per bin.
    """
    u_edges = np.asarray(u_edges, dtype=np.float64)
    u_counts = np.asarray(u_counts, dtype=np.int64)
    if u_edges.size != u_counts.size + 1:
        raise ConfigError("need one more edge than bins")
    tot = int(u_counts.sum())
    if tot == 0:
        raise ConfigError("no pooled pairs")
    p = u_counts / tot
    se = np.sqrt(p * (1.0 - p) / tot)
    span = 1.0 / u_edges[:-1] - 1.0 / u_edges[1:]
    return p / span, se / span


# ---------------------------------------------------------------------------
# autocovariance


def autocovariance(series, lags) -> np.ndarray:
    """Biased-normalization autocovariances at the requested lags.

    acov(k) = (1/N) sum_{i<N-k} (x_i - mean)(x_{i+k} - mean); lag 0 is
    the population variance.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ConfigError("need a 1-D series of length >= 2")
    lags = np.asarray(lags, dtype=np.int64)
    if np.any(lags < 0) or np.any(lags >= x.size):
        raise ConfigError("lags must lie in [0, len(series))")
    c = x - x.mean()
    out = np.empty(lags.size)
    for i, k in enumerate(lags):
        out[i] = float((c[: x.size - k] * c[k:]).sum() / x.size)
    return out
