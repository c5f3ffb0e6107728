"""Observables on the collision space and their induced excursion sums.

An observable is a bounded evaluator f(r, phi) with a declared Hölder
exponent.  Summing f along one excursion of the full map between visits
to the reduced space M gives the induced value f_tilde; its dominant
part is a_k * R where R is the excursion length and a_k the average of
f over the channel responsible for long excursions.  The channel
averages are plain quadratures of f over the marked boundary ranges at
the channel's crossing angles (angle 0 for stadium-like channels where
long excursions bounce between parallel flats).

The built-in catalog covers the cases the command-line tools expose:
constants, per-piece sinusoids that integrate to zero, a bump supported
on the channel ranges, and the return-centered indicator combination
1 - E(R) 1_M whose induced value is the centered return time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, CornerError, IterationCapError, SdlabError,
                     TangencyError)
from .geometry import (BilliardTable, piece_of, step_kernel, STATUS_CORNER,
                       STATUS_NOHIT, STATUS_TANGENT)
from . import induced as _ind

SIMPSON_PANELS = 4096  # per piece; integrands are smooth piecewise


@dataclass(frozen=True)
class Observable:
    """Bounded evaluator with a declared (not verified) Hölder exponent."""

    fn: object
    gamma: float
    tag: str = ""

    def __call__(self, r, phi):
        return self.fn(r, phi)


@dataclass(frozen=True)
class ChannelAverages:
    """Per-channel averages a_k of f plus the ranges they came from."""

    a: tuple
    r_ranges: tuple
    phi: tuple

    @property
    def I_f(self) -> float:
        """Common value when every channel average coincides."""
        lo = min(self.a)
        hi = max(self.a)
        if hi - lo > 1e-12 * max(1.0, abs(hi), abs(lo)):
            raise ConfigError("channel averages differ; no single I_f")
        return 0.5 * (lo + hi)


def _grid_eval(f, r: np.ndarray, phi: float) -> np.ndarray:
    try:
        v = np.asarray(f(r, np.full_like(r, phi)), dtype=np.float64)
        if v.shape == r.shape:
            return v
    except Exception:
        pass
    return np.array([float(f(float(x), phi)) for x in r], dtype=np.float64)


def _simpson(f, a: float, b: float, phi: float,
             panels: int = SIMPSON_PANELS) -> float:
    r = np.linspace(a, b, 2 * panels + 1)
    v = _grid_eval(f, r, phi)
    h = (b - a) / (2 * panels)
    return float(h / 3.0 * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum()
                            + 2.0 * v[2:-2:2].sum()))


def channel_integral(f, ranges, phi: float = 0.0) -> float:
    """∫ f(r, phi) dr over a union of disjoint r-ranges (Simpson rule)."""
    return math.fsum(_simpson(f, lo, hi, phi) for lo, hi in ranges)


def channel_average_stadium(f, l: float) -> float:
    """Average of f at angle 0 over the stadium's flat ranges.

    Long excursions cross the channel bouncing between the two flats at
    nearly vertical angle, so the average (1/2l) ∫_A f(r, 0) dr over
    the flat arclength ranges A is the per-step limit of f_tilde/R.
    """
    if not l > 0:
        raise ConfigError(f"flat length must be positive, got {l}")
    A = ((0.0, l), (math.pi + l, math.pi + 2 * l))
    return channel_integral(f, A, 0.0) / (2.0 * l)


def channel_average_drivebelt(f, theta0: float, l: float = 1.0) -> float:
    """Average of f at angle 0 over the drivebelt's major-arc ranges.

    The marked set sits on the major arc across the chord of the
    straight sides; its two arclength ranges have total length
    2(theta0 - pi).
    """
    if not math.pi < theta0 < 1.5 * math.pi:
        raise ConfigError("major arc angle must lie in (pi, 3pi/2)")
    A = ((0.0, theta0 - math.pi), (math.pi, theta0))
    return channel_integral(f, A, 0.0) / (2.0 * (theta0 - math.pi))


def channel_averages_lorentz(f, channels) -> ChannelAverages:
    """Per-channel averages a_i = ∫_{A_i} f(r, phi_i) dr / |A_i|.

    channels is a sequence of (ranges, phi_i) descriptors, one per open
    corridor; ranges is a sequence of (lo, hi) arclength intervals.
    """
    if not channels:
        raise ConfigError("need at least one channel descriptor")
    avgs = []
    rngs = []
    phis = []
    for ranges, phi in channels:
        total = math.fsum(hi - lo for lo, hi in ranges)
        if not total > 0:
            raise ConfigError("channel with empty ranges")
        avgs.append(channel_integral(f, ranges, phi) / total)
        rngs.append(tuple((float(lo), float(hi)) for lo, hi in ranges))
        phis.append(float(phi))
    return ChannelAverages(a=tuple(avgs), r_ranges=tuple(rngs),
                           phi=tuple(phis))


def induced_value(table: BilliardTable, f, r: float, phi: float,
                  cap: int = _ind.DEFAULT_CAP):
    """Birkhoff sum of f over one excursion from a point of M.

    Returns (f_tilde, ReturnSample); f is evaluated at the starting
    point and every intermediate collision, not at the closing return,
    so a constant c sums to exactly c * R.
    """
    is_m = _ind._is_m_array(table)
    p_cur = int(piece_of(table, r))
    if is_m[p_cur] == 0:
        raise ConfigError("induced_value requires a start state in M")
    total = float(f(r, phi))
    cr, cphi = float(r), float(phi)
    steps = 0
    while True:
        r2, p2, st, q = step_kernel(table.kind, table.prm, table.r0, cr, cphi)
        if st == STATUS_TANGENT:
            raise TangencyError(f"tangential collision after {steps} steps")
        if st == STATUS_CORNER:
            raise CornerError(f"junction hit after {steps} steps")
        if st == STATUS_NOHIT:
            raise IterationCapError("ray tracer found no intersection")
        steps += 1
        if steps > cap:
            raise IterationCapError(f"excursion exceeded cap {cap}")
        member = is_m[q] == 1 and (not table.m_first_only or q != p_cur)
        if member:
            sample = _ind.ReturnSample(
                start=(float(r), float(phi)), end=(r2, p2), R=steps,
                k=_ind.channel_label(table, r2, p2))
            return total, sample
        total += float(f(r2, p2))
        cr, cphi = r2, p2
        p_cur = q


def J_f_value(averages: ChannelAverages, sample) -> float:
    """Dominant part a_k · R of the induced value for a labeled sample."""
    k = getattr(sample, "k", 0)
    if not 0 <= k < len(averages.a):
        raise ConfigError(f"sample labeled with unknown channel {k}")
    return averages.a[k] * sample.R


# ---------------------------------------------------------------------------
# catalog


def constant(c: float = 1.0) -> Observable:
    val = float(c)

    def fn(r, phi):
        r = np.asarray(r, dtype=np.float64)
        return np.full_like(r, val) if r.ndim else val

    return Observable(fn=fn, gamma=1.0, tag=f"constant[{val}]")


def flat_sine(table: BilliardTable, periods: int = 1) -> Observable:
    """Full-period sinusoid of r on each marked range, zero elsewhere.

    Continuous across range edges (the sine vanishes there) and smooth
    inside, so the declared exponent 1 is honest; integrates to zero
    over every range for integer period counts.
    """
    A = np.asarray(table.A_intervals, dtype=np.float64)
    k = int(periods)

    def fn(r, phi):
        r = np.asarray(r, dtype=np.float64)
        out = np.zeros_like(r)
        for lo, hi in A:
            inside = (r >= lo) & (r <= hi)
            out = np.where(
                inside, np.sin(2 * math.pi * k * (r - lo) / (hi - lo)), out)
        return out if out.ndim else float(out)

    return Observable(fn=fn, gamma=1.0, tag=f"flat_sine[{k}]")


def channel_bump(table: BilliardTable, angle_width: float = 0.2) -> Observable:
    """Parabolic bump on the marked ranges, damped away from angle 0."""
    A = np.asarray(table.A_intervals, dtype=np.float64)
    w = float(angle_width)

    def fn(r, phi):
        r = np.asarray(r, dtype=np.float64)
        phi = np.asarray(phi, dtype=np.float64)
        out = np.zeros(np.broadcast(r, phi).shape)
        rb = np.broadcast_to(r, out.shape)
        pb = np.broadcast_to(phi, out.shape)
        for lo, hi in A:
            u = (rb - lo) / (hi - lo)
            inside = (u >= 0) & (u <= 1)
            val = 4.0 * u * (1.0 - u) * np.exp(-((pb / w) ** 2))
            out = np.where(inside, val, out)
        return out if out.ndim else float(out)

    return Observable(fn=fn, gamma=1.0, tag=f"channel_bump[{w}]")


def kac_centered(table: BilliardTable) -> Observable:
    """1 - E(R)·1_M; its induced value is the centered return time.

    Each excursion visits M exactly once (at its start), so summing
    this observable over an excursion yields R - E(R), where E(R) is
    the reciprocal of the measure of M.  Near the channel set the
    indicator vanishes identically, so the declared exponent is honest
    there despite the jump at the boundary of M.
    """
    mu_m = _ind.measure_M_closed_form(table)
    e_r = 1.0 / mu_m

    def fn(r, phi):
        r_arr = np.asarray(r, dtype=np.float64)
        if r_arr.ndim:
            phi_arr = np.broadcast_to(np.asarray(phi, dtype=np.float64),
                                      r_arr.shape)
            out = np.empty(r_arr.shape)
            flat = out.reshape(-1)
            rf = r_arr.reshape(-1)
            pf = phi_arr.reshape(-1)
            for i in range(rf.size):
                flat[i] = fn(float(rf[i]), float(pf[i]))
            return out
        try:
            member = _ind.in_M(table, float(r), float(phi))
        except SdlabError:
            member = False  # singular reverse step: measure-zero boundary
        return 1.0 - e_r * (1.0 if member else 0.0)

    return Observable(fn=fn, gamma=1.0, tag="kac_centered")


CATALOG_NAMES = ("constant", "flat_sine", "channel_bump", "kac_centered")


def build_catalog_entry(name: str, table: BilliardTable, **params
                        ) -> Observable:
    if name == "constant":
        return constant(params.get("value", 1.0))
    if name == "flat_sine":
        return flat_sine(table, int(params.get("periods", 1)))
    if name == "channel_bump":
        return channel_bump(table, float(params.get("angle_width", 0.2)))
    if name == "kac_centered":
        return kac_centered(table)
    raise ConfigError(f"unknown observable {name!r}; "
                      f"catalog: {', '.join(CATALOG_NAMES)}")


def holder_spot_check(obs: Observable, table: BilliardTable, seed: int = 0,
                      n_pairs: int = 1000) -> float:
    """Sampled Hölder-quotient scan near the channel set; warns only.

    Draws point pairs inside the marked ranges with angles below 0.1,
    concentrated logarithmically toward the channel line at angle 0,
    with separations d spanning several decades, and computes the
    quotients |Δf| / d^gamma.  If the small-separation envelope sits
    far above the large-separation one, the quotient is growing as the
    pairs shrink, i.e. the sampled Hölder constant is unbounded and the
    declared exponent looks optimistic.  Emits a warning and never
    raises, because the exponent is a declaration, not a contract the
    evaluator can be cheaply verified against.
    """
    rng = np.random.default_rng(seed)
    A = np.asarray(table.A_intervals, dtype=np.float64)
    lo, hi = A[0]
    sgn = rng.choice([-1.0, 1.0], n_pairs)
    p1 = sgn * 10.0 ** rng.uniform(-7, -1, n_pairs)
    d = 10.0 ** rng.uniform(-6, -2, n_pairs)
    # keep both endpoints strictly inside the range: the channel set is
    # its interior, and the catalog jumps across the range edge by design
    r1 = lo + (hi - lo - d) * rng.random(n_pairs)
    move_r = rng.random(n_pairs) < 0.5
    r2 = np.where(move_r, r1 + d, r1)
    p2 = np.where(move_r, p1, np.clip(p1 - sgn * d, -0.1, 0.1))
    q = np.empty(n_pairs)
    dist = np.hypot(r2 - r1, p2 - p1)
    for i in range(n_pairs):
        df = abs(float(obs(float(r2[i]), float(p2[i])))
                 - float(obs(float(r1[i]), float(p1[i]))))
        q[i] = df / max(float(dist[i]), 1e-300) ** obs.gamma
    qmax = float(q.max())
    coarse = float(q[dist >= 1e-3].max(initial=0.0))
    fine = float(q[dist <= 1e-5].max(initial=0.0))
    if fine > 50.0 * max(coarse, 1e-9) and fine > 1e-6:
        warnings.warn(
            f"observable {obs.tag or 'anonymous'}: Hölder quotient grows as "
            f"pairs shrink ({coarse:.3g} at coarse scale, {fine:.3g} at fine "
            f"scale); declared exponent {obs.gamma} may be optimistic",
            stacklevel=2)
    return qmax
