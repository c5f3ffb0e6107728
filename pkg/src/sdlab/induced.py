"""First-return dynamics on the dominating collision set M.

For the stadium and drivebelt, M consists of first collisions with the
focusing arcs (a collision on an arc whose predecessor lies on a
different piece); for the Lorentz rectangle, M is every collision with
a dispersing scatterer.  The induced map F sends x in M to the next
collision in M, and the return time R counts the billiard-map steps in
between.  Return times have a 1/n^2 tail, which is what this module is
built to measure at scale: the collection kernels stream hundreds of
millions of returns through fixed-size chunks.

Membership in M is decidable from (current piece, previous piece)
alone, so the kernels carry one extra integer of state.  Singular
events (tangency, junction, no hit) are resolved by resampling a fresh
state from the collision measure; occurrences are counted and the
excursion in progress is discarded, which perturbs the collected law on
a set of empirical rate below 1e-6.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, replica_seed, unit_jit
from .errors import ConfigError, CornerError, IterationCapError, TangencyError
from .geometry import (
    STATUS_CORNER,
    STATUS_NOHIT,
    STATUS_OK,
    STATUS_TANGENT,
    BilliardTable,
    piece_of,
    sample_collision_measure,
    step_kernel,
)

DEFAULT_CAP = 10 ** 9


@dataclass(frozen=True)
class ReducedSpaceSpec:
    """Membership rule for M: which pieces count, and whether only first
    collisions on a piece belong (arc rule) or all of them (scatterer rule)."""

    family: str
    m_pieces: np.ndarray
    first_only: bool


@dataclass(frozen=True)
class ReturnSample:
    """One induced-map step: start and end states, return time, channel label."""

    start: tuple
    end: tuple
    R: int
    k: int


def reduced_space(table: BilliardTable) -> ReducedSpaceSpec:
    return ReducedSpaceSpec(
        family=table.family,
        m_pieces=table.m_pieces.copy(),
        first_only=table.m_first_only,
    )


def _is_m_array(table: BilliardTable) -> np.ndarray:
    is_m = np.zeros(table.npieces, dtype=np.int64)
    is_m[table.m_pieces] = 1
    return is_m


def _label_mode(table: BilliardTable):
    """Channel-label rule: (mode, half) consumed by the kernels.

    stadium: 4 families, by entry arc and sliding direction sign(phi).
    drivebelt: 4 families on the major arc by half and sign(phi); minor
    arc entries are labeled -1.  lorentz: single channel, label 0.
    """
    if table.family == "stadium":
        return 1, 0.0
    if table.family == "drivebelt":
        return 2, 0.5 * table.params["theta0"]
    return 0, 0.0


def in_M(table: BilliardTable, r: float, phi: float, prev_piece: int | None = None) -> bool:
    """Whether (r, phi) belongs to M.

    For first-collision rules the predecessor piece is required; when
    not supplied it is computed with one reverse map step (raises the
    usual singular-event errors in that case).
    """
    p = int(piece_of(table, r))
    is_m = _is_m_array(table)
    if is_m[p] == 0:
        return False
    if not table.m_first_only:
        return True
    if prev_piece is None:
        r2, phi2, st, q = step_kernel(table.kind, table.prm, table.r0,
                                      float(r), -float(phi))
        if st == STATUS_TANGENT:
            raise TangencyError("reverse step tangential while testing membership")
        if st == STATUS_CORNER:
            raise CornerError("reverse step hit a junction while testing membership")
        if st == STATUS_NOHIT:
            raise IterationCapError("reverse step found no intersection")
        prev_piece = q
    return int(prev_piece) != p


def channel_label(table: BilliardTable, r: float, phi: float) -> int:
    mode, half = _label_mode(table)
    if mode == 1:
        p = int(piece_of(table, r))
        return 2 * (1 if p == 3 else 0) + (1 if phi > 0.0 else 0)
    if mode == 2:
        p = int(piece_of(table, r))
        if p != 0:
            return -1
        return 2 * (1 if r > half else 0) + (1 if phi > 0.0 else 0)
    return 0


def return_map(table: BilliardTable, x, cap: int = DEFAULT_CAP) -> ReturnSample:
    """Apply the induced map once, iterating T until re-entry into M."""
    r, phi = float(x[0]), float(x[1])
    is_m = _is_m_array(table)
    p_cur = int(piece_of(table, r))
    if is_m[p_cur] == 0:
        raise ConfigError("return_map requires a start state in M")
    steps = 0
    cr, cp = r, phi
    while True:
        r2, phi2, st, q = step_kernel(table.kind, table.prm, table.r0, cr, cp)
        if st == STATUS_TANGENT:
            raise TangencyError(f"tangential collision after {steps} steps")
        if st == STATUS_CORNER:
            raise CornerError(f"junction hit after {steps} steps")
        if st == STATUS_NOHIT:
            raise IterationCapError("ray tracer found no intersection")
        steps += 1
        if steps > cap:
            raise IterationCapError(f"return time exceeded cap {cap}")
        member = is_m[q] == 1 and (not table.m_first_only or q != p_cur)
        if member:
            return ReturnSample(start=(r, phi), end=(r2, phi2), R=steps,
                                k=channel_label(table, r2, phi2))
        cr, cp = r2, phi2
        p_cur = q


def measure_M_closed_form(table: BilliardTable) -> float:
    """Closed-form mu_M(M) where one is available."""
    if table.family == "stadium":
        return 2.0 / (math.pi + table.params["l"])
    if table.family == "lorentz_rect":
        rho_c = table.params["rho_c"]
        rho_q = table.params["rho_q"]
        dB = 2.0 * math.pi * rho_c + math.pi * rho_q
        return dB / table.perimeter
    raise ConfigError(
        f"no closed-form mu_M(M) for family {table.family!r}; measure it"
    )


def kac_check(R_samples, mu_M: float):
    """(empirical mean return time, Kac prediction 1/mu_M(M))."""
    R = np.asarray(R_samples, dtype=np.float64)
    if R.size < 10 ** 4:
        raise ConfigError("kac_check requires at least 1e4 return samples")
    return float(R.mean()), 1.0 / float(mu_M)


@njit(cache=True, nogil=True)
def _locate(r0, P, r):
    p = 0
    while p + 1 < P and r >= r0[p + 1]:
        p += 1
    return p


@njit(cache=True, nogil=True)
def _membership_batch(kind, prm, r0, is_m, first_only, rs, phis, out):
    """out[i]: 1 accept, 0 reject, -1 singular reverse step."""
    P = kind.shape[0]
    for i in range(rs.shape[0]):
        p = _locate(r0, P, rs[i])
        if is_m[p] == 0:
            out[i] = 0
            continue
        if first_only == 0:
            out[i] = 1
            continue
        r2, phi2, st, q = step_kernel(kind, prm, r0, rs[i], -phis[i])
        if st != STATUS_OK:
            out[i] = -1
        elif q == p:
            out[i] = 0
        else:
            out[i] = 1


def sample_mu(table: BilliardTable, n: int, seed: int, start: int = 0):
    """n samples from mu (collision measure conditioned on M) by rejection.

    Returns (r, phi, info) where info records proposals, acceptances and
    singular reverse steps; info['rate'] estimates mu_M(M).
    """
    is_m = _is_m_array(table)
    first = 1 if table.m_first_only else 0
    out_r = np.empty(n, dtype=np.float64)
    out_phi = np.empty(n, dtype=np.float64)
    got = 0
    proposals = 0
    accepted = 0
    singular = 0
    cursor = start
    batch = max(4096, int(2.5 * n / max(measure_M_closed_form_safe(table), 0.05)))
    while got < n:
        rs, phis = sample_collision_measure(table, batch, seed, start=cursor)
        cursor += batch
        verdict = np.empty(batch, dtype=np.int64)
        _membership_batch(table.kind, table.prm, table.r0, is_m, first,
                          rs, phis, verdict)
        proposals += batch
        singular += int((verdict == -1).sum())
        acc = verdict == 1
        accepted += int(acc.sum())
        take = min(n - got, int(acc.sum()))
        idx = np.flatnonzero(acc)[:take]
        out_r[got:got + take] = rs[idx]
        out_phi[got:got + take] = phis[idx]
        got += take
    # rate counts every acceptance in the scanned batches, not just the
    # kept prefix, so it is an unbiased binomial estimate of mu_M(M)
    info = {
        "proposals": proposals,
        "accepted": accepted,
        "singular": singular,
        "rate": accepted / proposals if proposals else float("nan"),
        "next_start": cursor,
    }
    return out_r, out_phi, info


def measure_M_closed_form_safe(table: BilliardTable) -> float:
    try:
        return measure_M_closed_form(table)
    except ConfigError:
        return 0.3


def acceptance_rate(table: BilliardTable, proposals: int, seed: int) -> float:
    """Fraction of collision-measure proposals landing in M.

    Uses a fixed number of proposals (unlike sample_mu, which targets a
    fixed number of acceptances), so the rate is an unbiased binomial
    estimate of mu_M(M).
    """
    is_m = _is_m_array(table)
    first = 1 if table.m_first_only else 0
    accepted = 0
    cursor = 0
    chunk = 1 << 20
    remaining = proposals
    while remaining > 0:
        b = min(chunk, remaining)
        rs, phis = sample_collision_measure(table, b, seed, start=cursor)
        cursor += b
        verdict = np.empty(b, dtype=np.int64)
        _membership_batch(table.kind, table.prm, table.r0, is_m, first,
                          rs, phis, verdict)
        accepted += int((verdict == 1).sum())
        remaining -= b
    return accepted / proposals


@njit(cache=True, nogil=True)
def _collect_kernel(kind, prm, r0, is_m, first_only, label_mode, label_half,
                    state_f, state_i, seed, out_R, out_flag, out_k, want, cap):
    """Fill up to `want` return times; state persists across calls.

    state_f = [r, phi]; state_i = [p_cur, started, steps, pending, counter,
    singular].  Returns (filled, err) with err = 3 when the step cap is
    exceeded.  out_flag[j] = 1 marks a return with no valid predecessor
    (first return after a resample), so pair statistics skip the join.
    """
    P = kind.shape[0]
    L = r0[P]
    r = state_f[0]
    phi = state_f[1]
    p_cur = state_i[0]
    started = state_i[1]
    steps = state_i[2]
    pending = state_i[3]
    cnt = state_i[4]
    sing = state_i[5]
    filled = 0
    while filled < want:
        r2, phi2, st, q = step_kernel(kind, prm, r0, r, phi)
        if st != STATUS_OK:
            u1 = unit_jit(seed, cnt)
            u2 = unit_jit(seed, cnt + 1)
            cnt += 2
            r = L * u1
            phi = math.asin(2.0 * u2 - 1.0)
            p_cur = _locate(r0, P, r)
            started = 0
            steps = 0
            pending = 1
            sing += 1
            continue
        steps += 1
        if steps > cap:
            state_f[0] = r
            state_f[1] = phi
            state_i[0] = p_cur
            state_i[1] = started
            state_i[2] = steps
            state_i[3] = pending
            state_i[4] = cnt
            state_i[5] = sing
            return filled, 3
        member = is_m[q] == 1
        if member and first_only == 1 and q == p_cur:
            member = False
        if member:
            if started == 1:
                out_R[filled] = steps
                out_flag[filled] = pending
                if label_mode == 1:
                    k = 0
                    if q == 3:
                        k = 2
                    if phi2 > 0.0:
                        k += 1
                    out_k[filled] = k
                elif label_mode == 2:
                    if q == 0:
                        k = 0
                        if r2 > label_half:
                            k = 2
                        if phi2 > 0.0:
                            k += 1
                        out_k[filled] = k
                    else:
                        out_k[filled] = -1
                else:
                    out_k[filled] = 0
                pending = 0
                filled += 1
            started = 1
            steps = 0
        r = r2
        phi = phi2
        p_cur = q
    state_f[0] = r
    state_f[1] = phi
    state_i[0] = p_cur
    state_i[1] = started
    state_i[2] = steps
    state_i[3] = pending
    state_i[4] = cnt
    state_i[5] = sing
    return filled, 0


@dataclass
class ReturnStats:
    """Streamed summary of a long return-time collection run."""

    n_returns: int
    sum_R: int
    tail_grid: np.ndarray
    tail_counts: np.ndarray
    u_edges: np.ndarray
    u_counts: np.ndarray
    pair_m_range: tuple
    pairs_in_range: int
    support_min_m: int
    support_slack: float
    support_pairs: int
    support_violations: int
    max_slack_low: float
    max_slack_high: float
    singular_resamples: int
    k_counts: np.ndarray = field(default=None)

    @property
    def mean_R(self) -> float:
        return self.sum_R / self.n_returns

    @property
    def tail_prob(self) -> np.ndarray:
        return self.tail_counts / self.n_returns


def collect_return_stats(table: BilliardTable, n_returns: int, seed: int, *,
                         tail_grid=None, u_edges=None, pair_m_range=(100, 300),
                         support_min_m: int = 50, support_slack: float = 10.0,
                         chunk: int = 1 << 23, cap: int = DEFAULT_CAP,
                         return_samples: int = 0) -> ReturnStats:
    """Stream n_returns induced-map return times into summary statistics.

    Tail counts are accumulated on tail_grid; consecutive-return pairs
    (m, n) with m in pair_m_range feed a histogram of the ratio u = n/m
    on u_edges; pairs with m >= support_min_m are audited against the
    spreading support band n in [m/3 - slack, 3m + slack].  Set
    return_samples > 0 to also keep the first that many raw R values.
    """
    if tail_grid is None:
        tail_grid = np.unique(np.round(np.geomspace(50, 500, 9)).astype(np.int64))
    else:
        tail_grid = np.asarray(tail_grid, dtype=np.int64)
    if u_edges is None:
        u_edges = np.array([1.0 / 3.0, 0.5, 1.0, 2.0, 3.0])
    else:
        u_edges = np.asarray(u_edges, dtype=np.float64)
    is_m = _is_m_array(table)
    first = 1 if table.m_first_only else 0
    mode, half = _label_mode(table)
    seed_u = np.uint64(seed)

    # initial state: one fresh draw from the collision measure
    rs, phis = sample_collision_measure(table, 1, seed, start=0)
    state_f = np.array([rs[0], phis[0]], dtype=np.float64)
    state_i = np.array([int(piece_of(table, rs[0])), 0, 0, 1, 2, 0], dtype=np.int64)

    out_R = np.empty(chunk, dtype=np.int64)
    out_flag = np.empty(chunk, dtype=np.int8)
    out_k = np.empty(chunk, dtype=np.int8)

    tail_counts = np.zeros(tail_grid.shape[0], dtype=np.int64)
    u_counts = np.zeros(u_edges.shape[0] - 1, dtype=np.int64)
    k_counts = np.zeros(5, dtype=np.int64)
    kept = [] if return_samples > 0 else None
    m_lo, m_hi = pair_m_range
    sum_R = 0
    got = 0
    pairs_in_range = 0
    support_pairs = 0
    violations = 0
    max_lo = -np.inf
    max_hi = -np.inf
    carry_R = -1  # last return of previous chunk, -1 if not joinable
    while got < n_returns:
        want = min(chunk, n_returns - got)
        filled, err = _collect_kernel(
            table.kind, table.prm, table.r0, is_m, first, mode, half,
            state_f, state_i, seed_u, out_R, out_flag, out_k, want, cap)
        if err == 3:
            raise IterationCapError(f"return time exceeded cap {cap}")
        R = out_R[:filled]
        flag = out_flag[:filled]
        sum_R += int(R.sum())
        for i, g in enumerate(tail_grid):
            tail_counts[i] += int((R >= g).sum())
        k_counts += np.bincount(out_k[:filled].astype(np.int64) + 1, minlength=5)
        if kept is not None and len(kept) * chunk < return_samples:
            kept.append(R[:return_samples - sum(len(a) for a in kept)].copy())
        # consecutive pairs, including the chunk-boundary join
        if filled > 0:
            if carry_R > 0 and flag[0] == 0:
                m_all = np.concatenate((np.array([carry_R], dtype=np.int64), R))
                valid = np.concatenate((np.array([0], dtype=np.int8), flag))
            else:
                m_all = R
                valid = flag
            m = m_all[:-1]
            n_next = m_all[1:]
            ok = valid[1:] == 0
            mr = m[ok]
            nr = n_next[ok]
            in_range = (mr >= m_lo) & (mr <= m_hi)
            pairs_in_range += int(in_range.sum())
            if in_range.any():
                u = nr[in_range] / mr[in_range]
                u_counts += np.histogram(u, bins=u_edges)[0]
            big = mr >= support_min_m
            support_pairs += int(big.sum())
            if big.any():
                lo_gap = mr[big] / 3.0 - nr[big]
                hi_gap = nr[big] - 3.0 * mr[big]
                max_lo = max(max_lo, float(lo_gap.max()))
                max_hi = max(max_hi, float(hi_gap.max()))
                violations += int(((lo_gap > support_slack) |
                                   (hi_gap > support_slack)).sum())
            carry_R = int(R[-1])
        got += filled
    stats = ReturnStats(
        n_returns=got, sum_R=sum_R,
        tail_grid=tail_grid, tail_counts=tail_counts,
        u_edges=u_edges, u_counts=u_counts,
        pair_m_range=(m_lo, m_hi), pairs_in_range=pairs_in_range,
        support_min_m=support_min_m, support_slack=support_slack,
        support_pairs=support_pairs, support_violations=violations,
        max_slack_low=max_lo, max_slack_high=max_hi,
        singular_resamples=int(state_i[5]),
        k_counts=k_counts,
    )
    if kept is not None:
        stats.samples = np.concatenate(kept) if kept else np.empty(0, dtype=np.int64)
    return stats


@njit(cache=True, nogil=True)
def _replica_sums_kernel(kind, prm, r0, is_m, first_only, seeds, n_F,
                         out_S, out_sing, cap):
    """Per replica: start in M from mu, sum the first n_F return times."""
    P = kind.shape[0]
    L = r0[P]
    for rep in range(seeds.shape[0]):
        seed = seeds[rep]
        cnt = 0
        sing = 0
        while True:
            restart = False
            # rejection sampling of the start state onto M
            while True:
                u1 = unit_jit(seed, cnt)
                u2 = unit_jit(seed, cnt + 1)
                cnt += 2
                r = L * u1
                phi = math.asin(2.0 * u2 - 1.0)
                p = _locate(r0, P, r)
                if is_m[p] == 0:
                    continue
                if first_only == 1:
                    rb, pb, st, qprev = step_kernel(kind, prm, r0, r, -phi)
                    if st != STATUS_OK:
                        sing += 1
                        continue
                    if qprev == p:
                        continue
                break
            got = 0
            total = 0
            p_cur = p
            while got < n_F:
                r2, phi2, st, q = step_kernel(kind, prm, r0, r, phi)
                if st != STATUS_OK:
                    sing += 1
                    restart = True
                    break
                total += 1
                if total > cap:
                    out_S[rep] = -1
                    restart = True
                    got = n_F
                    break
                member = is_m[q] == 1
                if member and first_only == 1 and q == p_cur:
                    member = False
                if member:
                    got += 1
                r = r2
                phi = phi2
                p_cur = q
            if not restart:
                out_S[rep] = total
                break
            if out_S[rep] == -1:
                break
        out_sing[rep] = sing


def replica_return_sums(table: BilliardTable, n_F: int, replicas: int,
                        master_seed: int, cap: int = DEFAULT_CAP,
                        threads: int = 1):
    """Total step counts S = sum of n_F return times, one per replica.

    Each replica draws its start from mu with its own derived seed, so
    results are independent of batching and thread count.
    """
    seeds = np.array([replica_seed(master_seed, r) for r in range(replicas)],
                     dtype=np.uint64)
    out_S = np.zeros(replicas, dtype=np.int64)
    out_sing = np.zeros(replicas, dtype=np.int64)
    is_m = _is_m_array(table)
    first = 1 if table.m_first_only else 0
    _run_sliced(_replica_sums_kernel,
                (table.kind, table.prm, table.r0, is_m, first),
                seeds, n_F, (out_S, out_sing), cap, threads)
    if (out_S < 0).any():
        raise IterationCapError("a replica exceeded the step cap")
    return out_S, int(out_sing.sum())


@njit(cache=True, nogil=True)
def _visit_counts_kernel(kind, prm, r0, is_m, first_only, seeds, n_T,
                         out_N, out_sing, cap):
    """Per replica: M-visit count among n_T states x, Tx, ..., T^(n_T-1)x."""
    P = kind.shape[0]
    L = r0[P]
    for rep in range(seeds.shape[0]):
        seed = seeds[rep]
        cnt = 0
        sing = 0
        while True:
            restart = False
            u1 = unit_jit(seed, cnt)
            u2 = unit_jit(seed, cnt + 1)
            cnt += 2
            r = L * u1
            phi = math.asin(2.0 * u2 - 1.0)
            p = _locate(r0, P, r)
            # membership of the initial state needs its predecessor piece
            rb, pb, st, qprev = step_kernel(kind, prm, r0, r, -phi)
            if st != STATUS_OK:
                sing += 1
                continue
            N = 0
            member0 = is_m[p] == 1
            if member0 and first_only == 1 and qprev == p:
                member0 = False
            if member0:
                N += 1
            p_cur = p
            for i in range(n_T - 1):
                r2, phi2, st, q = step_kernel(kind, prm, r0, r, phi)
                if st != STATUS_OK:
                    sing += 1
                    restart = True
                    break
                member = is_m[q] == 1
                if member and first_only == 1 and q == p_cur:
                    member = False
                if member:
                    N += 1
                r = r2
                phi = phi2
                p_cur = q
            if not restart:
                out_N[rep] = N
                break
        out_sing[rep] = sing


def replica_visit_counts(table: BilliardTable, n_T: int, replicas: int,
                         master_seed: int, cap: int = DEFAULT_CAP,
                         threads: int = 1):
    """M-visit counts over n_T map steps, one replica per derived seed.

    Starts are drawn from the full collision measure (stationary for T).
    """
    seeds = np.array([replica_seed(master_seed, r) for r in range(replicas)],
                     dtype=np.uint64)
    out_N = np.zeros(replicas, dtype=np.int64)
    out_sing = np.zeros(replicas, dtype=np.int64)
    is_m = _is_m_array(table)
    first = 1 if table.m_first_only else 0
    _run_sliced(_visit_counts_kernel,
                (table.kind, table.prm, table.r0, is_m, first),
                seeds, n_T, (out_N, out_sing), cap, threads)
    return out_N, int(out_sing.sum())


def _run_sliced(kernel, table_args, seeds, n_inner, outputs, cap, threads):
    """Run a per-replica kernel, optionally sliced across threads.

    Slicing changes nothing statistically: every replica's stream is
    fixed by its derived seed.
    """
    replicas = seeds.shape[0]
    if threads <= 1 or replicas < 2 * threads:
        kernel(*table_args, seeds, n_inner, *outputs, cap)
        return
    from concurrent.futures import ThreadPoolExecutor
    bounds = np.linspace(0, replicas, threads + 1).astype(np.int64)
    def run(i):
        lo, hi = bounds[i], bounds[i + 1]
        kernel(*table_args, seeds[lo:hi], n_inner,
               *(o[lo:hi] for o in outputs), cap)
    with ThreadPoolExecutor(max_workers=threads) as ex:
        list(ex.map(run, range(threads)))


def long_excursion_start(table: BilliardTable, u: float, eps: float,
                         cap: int = 100000):
    """A point of M whose excursion crosses the channel at angle ~eps.

    Random draws from the collision measure essentially never produce
    return times in the hundreds (probability ~ 1/R^2), so long-return
    fixtures are manufactured by time reversal: place a state inside
    the channel at abscissa u with small crossing angle eps, run the
    angle-reflected orbit forward to the end of its first arc visit,
    and reflect back.  The result lies in M and its forward excursion
    passes through (u, eps), giving R on the order of 1/|eps|.  Returns
    None when the reversed orbit meets a singular event first.
    """
    is_m = _is_m_array(table)
    r, phi = float(u), -float(eps)
    for _ in range(cap):
        r2, p2, st, q = step_kernel(table.kind, table.prm, table.r0, r, phi)
        if st != STATUS_OK:
            return None
        if is_m[q] == 1:
            r3, p3, st3, q3 = step_kernel(table.kind, table.prm, table.r0,
                                          r2, p2)
            if st3 != STATUS_OK:
                return None
            if q3 != q:
                return (r2, -p2)
        r, phi = r2, p2
    return None


def simulate_returns(table: BilliardTable, n_returns: int, seed: int,
                     f=None, cap: int = DEFAULT_CAP):
    """Chain n_returns induced-map steps, recording each one.

    Returns a dict with arrays R (return times), k (channel labels) and,
    when an observable f is given, f_tilde (its excursion sums).  Meant
    for modest record-level runs; the streaming collectors handle bulk
    statistics.  Singular events restart from a fresh draw of the
    conditioned collision measure and are counted in 'singular'.
    """
    if n_returns < 1:
        raise ConfigError("need at least one return")
    R = np.empty(n_returns, dtype=np.int64)
    k = np.empty(n_returns, dtype=np.int64)
    ft = np.empty(n_returns, dtype=np.float64) if f is not None else None
    singular = 0
    fresh = 0
    x = None
    got = 0
    while got < n_returns:
        if x is None:
            rs, ps, _ = sample_mu(table, 1, seed, start=fresh)
            fresh += 1000003  # uncorrelated restart block in the stream
            x = (float(rs[0]), float(ps[0]))
        try:
            if f is None:
                s = return_map(table, x, cap=cap)
            else:
                from .observables import induced_value
                val, s = induced_value(table, f, x[0], x[1], cap=cap)
                ft[got] = val
            R[got] = s.R
            k[got] = s.k
            x = s.end
            got += 1
        except (TangencyError, CornerError) as exc:
            singular += 1
            x = None
            if singular > 1000:
                raise IterationCapError(
                    "singular-event rate implausibly high") from exc
    out = {"R": R, "k": k, "singular": singular}
    if ft is not None:
        out["f_tilde"] = ft
    return out
