"""Exact billiard dynamics in collision coordinates for three table families.

A table is a closed piecewise-smooth boundary made of straight segments
and circular arcs, packed into flat numpy arrays so the step kernel can
be numba-compiled.  The boundary is parametrized by arclength r (domain
on the left of the direction of travel), and a collision state is
(r, phi) with phi in (-pi/2, pi/2) the angle between the outgoing
velocity and the inward normal, positive toward the tangent direction:

    v = cos(phi) * n + sin(phi) * t.

The collision (Liouville) measure is cos(phi) dr dphi up to
normalization, sampled exactly by ``sample_collision_measure``.
Time reversal is the involution R(r, phi) = (r, -phi); the inverse map
is R o T o R, which ``inverse_map`` uses directly.

Families
--------
stadium(l)
    Two unit semicircles joined by two straight segments of length l.
    r = 0 at the start of the bottom segment.
drivebelt(theta0, theta1, l)
    A major unit arc of angular length theta0 in (pi, 3*pi/2) and a
    minor unit arc of angular length theta1 in (0, pi/2), joined by two
    straight segments of length l meeting the arcs at corner junctions.
    r = 0 at the start of the major arc.
lorentz_rect(l1, l2, rho_c, rho_q)
    Rectangle [0,l1] x [0,l2] with a dispersing disk of radius rho_c at
    the center and dispersing quarter disks of radius rho_q at the two
    bottom corners.  r = 0 at the start of the bottom wall.

Singular events (tangential hits, junction hits, no intersection found)
are reported through status codes rather than exceptions in the kernel;
the scalar wrappers raise typed errors.  Callers that sample initial
conditions resample on non-OK status, which occurs on a negligible set.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import cos_exact, njit, sin_exact, unit_vec
from .errors import ConfigError, CornerError, IterationCapError, TangencyError

TWO_PI = 2.0 * math.pi

KIND_SEG = 0
KIND_ARC = 1

STATUS_OK = 0
STATUS_TANGENT = 1
STATUS_CORNER = 2
STATUS_NOHIT = 3

# minimum flight time, tangency and junction guards, candidate slack
EPS_T = 1e-12
EPS_TAN = 1e-10
EPS_CORNER = 1e-10
EPS_FIT = 1e-12


@dataclass(frozen=True)
class BilliardTable:
    """Packed boundary description plus family metadata.

    kind[p] is KIND_SEG or KIND_ARC.  prm[p] holds, for a segment,
    (x0, y0, ux, uy, length, 0) with (ux, uy) the unit tangent, and for
    an arc, (cx, cy, rad, a0, orient, alen) with orient +1 when the arc
    is traversed counterclockwise and alen > 0 its angular length.
    r0[p] is the cumulative arclength at which piece p starts; r0[-1]
    is the perimeter.  m_pieces lists the pieces whose collisions make
    up the inducing region M (subject to the first-collision rule when
    m_first_only is set), and A_intervals lists the r-intervals of the
    channel set A carrying the observable integrals.
    """

    family: str
    kind: np.ndarray
    prm: np.ndarray
    r0: np.ndarray
    is_scat: np.ndarray
    m_pieces: np.ndarray
    m_first_only: bool
    A_intervals: np.ndarray
    params: dict = field(default_factory=dict)

    @property
    def perimeter(self) -> float:
        return float(self.r0[-1])

    @property
    def npieces(self) -> int:
        return int(self.kind.shape[0])


def _pack(pieces):
    """Assemble (kind, prm, r0) from a list of piece dicts."""
    P = len(pieces)
    kind = np.zeros(P, dtype=np.int64)
    prm = np.zeros((P, 6), dtype=np.float64)
    lengths = np.zeros(P, dtype=np.float64)
    for i, pc in enumerate(pieces):
        if pc["kind"] == KIND_SEG:
            x0, y0 = pc["start"]
            x1, y1 = pc["end"]
            ln = math.hypot(x1 - x0, y1 - y0)
            if ln <= 0.0:
                raise ConfigError("degenerate segment piece")
            kind[i] = KIND_SEG
            prm[i] = (x0, y0, (x1 - x0) / ln, (y1 - y0) / ln, ln, 0.0)
            lengths[i] = ln
        else:
            kind[i] = KIND_ARC
            cx, cy = pc["center"]
            rad = pc["rad"]
            prm[i] = (cx, cy, rad, pc["a0"], pc["orient"], pc["alen"])
            lengths[i] = rad * pc["alen"]
    r0 = np.zeros(P + 1, dtype=np.float64)
    np.cumsum(lengths, out=r0[1:])
    return kind, prm, r0


def _check_closure(kind, prm, r0):
    """Verify the chain of non-circle pieces is continuous and closed."""
    P = kind.shape[0]
    ends = []
    starts = []
    for p in range(P):
        if kind[p] == KIND_ARC and prm[p, 5] >= TWO_PI - 1e-12:
            continue
        if kind[p] == KIND_SEG:
            x0, y0, ux, uy, ln = prm[p, 0], prm[p, 1], prm[p, 2], prm[p, 3], prm[p, 4]
            starts.append((x0, y0))
            ends.append((x0 + ln * ux, y0 + ln * uy))
        else:
            cx, cy, rad, a0, orient, alen = prm[p, :6]
            a1 = a0 + orient * alen
            starts.append((cx + rad * math.cos(a0), cy + rad * math.sin(a0)))
            ends.append((cx + rad * math.cos(a1), cy + rad * math.sin(a1)))
    n = len(starts)
    for i in range(n):
        ex, ey = ends[i]
        sx, sy = starts[(i + 1) % n]
        if math.hypot(ex - sx, ey - sy) > 1e-9:
            raise ConfigError(
                "boundary pieces do not close up (gap at junction %d)" % i
            )


def build_stadium(l: float) -> BilliardTable:
    """Stadium with straight sides of length l > 0 and unit semicircular caps."""
    l = float(l)
    if not (l > 0.0) or not math.isfinite(l):
        raise ConfigError("stadium requires l > 0")
    pieces = [
        {"kind": KIND_SEG, "start": (0.0, -1.0), "end": (l, -1.0)},
        {"kind": KIND_ARC, "center": (l, 0.0), "rad": 1.0, "a0": -0.5 * math.pi,
         "orient": 1.0, "alen": math.pi},
        {"kind": KIND_SEG, "start": (l, 1.0), "end": (0.0, 1.0)},
        {"kind": KIND_ARC, "center": (0.0, 0.0), "rad": 1.0, "a0": 0.5 * math.pi,
         "orient": 1.0, "alen": math.pi},
    ]
    kind, prm, r0 = _pack(pieces)
    _check_closure(kind, prm, r0)
    A = np.array([[0.0, l], [math.pi + l, math.pi + 2.0 * l]])
    return BilliardTable(
        family="stadium",
        kind=kind, prm=prm, r0=r0,
        is_scat=np.zeros(4, dtype=np.int64),
        m_pieces=np.array([1, 3], dtype=np.int64),
        m_first_only=True,
        A_intervals=A,
        params={"l": l},
    )


def build_drivebelt(theta0: float, theta1: float, l: float) -> BilliardTable:
    """Drivebelt table: unit arcs of angular lengths theta0 and theta1.

    theta0 must lie strictly inside (pi, 3*pi/2) and theta1 strictly
    inside (0, pi/2).  The minor arc center offset d along the x axis is
    determined by requiring both connecting segments to have length l;
    parameter combinations with no such placement are rejected.
    """
    theta0 = float(theta0)
    theta1 = float(theta1)
    l = float(l)
    if not (math.pi < theta0 < 1.5 * math.pi):
        raise ConfigError("drivebelt requires theta0 strictly inside (pi, 3*pi/2)")
    if not (0.0 < theta1 < 0.5 * math.pi):
        raise ConfigError("drivebelt requires theta1 strictly inside (0, pi/2)")
    if not (l > 0.0) or not math.isfinite(l):
        raise ConfigError("drivebelt requires l > 0")
    alpha = math.pi - 0.5 * theta0
    dy = math.sin(0.5 * theta1) - math.sin(alpha)
    under = l * l - dy * dy
    if under <= 0.0:
        raise ConfigError("drivebelt segments too short to bridge the arcs")
    d = (math.cos(alpha) - math.cos(0.5 * theta1)) + math.sqrt(under)
    if d < -1e-12:
        raise ConfigError("drivebelt arcs would overlap (negative center offset)")
    e_minus = (math.cos(alpha), -math.sin(alpha))
    e_plus = (math.cos(alpha), math.sin(alpha))
    q_minus = (d + math.cos(0.5 * theta1), -math.sin(0.5 * theta1))
    q_plus = (d + math.cos(0.5 * theta1), math.sin(0.5 * theta1))
    pieces = [
        {"kind": KIND_ARC, "center": (0.0, 0.0), "rad": 1.0, "a0": alpha,
         "orient": 1.0, "alen": theta0},
        {"kind": KIND_SEG, "start": e_minus, "end": q_minus},
        {"kind": KIND_ARC, "center": (d, 0.0), "rad": 1.0, "a0": -0.5 * theta1,
         "orient": 1.0, "alen": theta1},
        {"kind": KIND_SEG, "start": q_plus, "end": e_plus},
    ]
    kind, prm, r0 = _pack(pieces)
    _check_closure(kind, prm, r0)
    # r-intervals on the major arc whose antipode also lies on the major arc
    A = np.array([[0.0, theta0 - math.pi], [math.pi, theta0]])
    return BilliardTable(
        family="drivebelt",
        kind=kind, prm=prm, r0=r0,
        is_scat=np.zeros(4, dtype=np.int64),
        m_pieces=np.array([0, 2], dtype=np.int64),
        m_first_only=True,
        A_intervals=A,
        params={"theta0": theta0, "theta1": theta1, "l": l, "d": d},
    )


def lorentz_channels(l1: float, l2: float, rho_c: float, rho_q: float) -> dict:
    """Audit the open bouncing channels of the rectangular Lorentz table.

    Horizontal channels are y-bands on the two vertical walls between
    which a phi = 0 orbit bounces forever; vertical channels are the
    x-bands on the horizontal walls.  The top horizontal band
    (l2/2 + rho_c, l2) is always open because the top corners carry no
    disks; every other band requires rho_c + rho_q small enough.
    ``diagonal_blocked`` is a sufficient condition (45-degree corridors
    of a square-aspect table are closed when rho_c >= sqrt(2)/4 times
    the short side); configurations meant for the single-channel
    variance formula should satisfy it.
    """
    horizontal = [(0.5 * l2 + rho_c, l2)]
    if rho_c + rho_q < 0.5 * l2:
        horizontal.append((rho_q, 0.5 * l2 - rho_c))
    vertical = []
    if rho_c + rho_q < 0.5 * l1:
        vertical.append((rho_q, 0.5 * l1 - rho_c))
        vertical.append((0.5 * l1 + rho_c, l1 - rho_q))
    diagonal_blocked = rho_c >= 0.25 * math.sqrt(2.0) * min(l1, l2)
    return {
        "horizontal": horizontal,
        "vertical": vertical,
        "diagonal_blocked": diagonal_blocked,
        "single_channel": len(horizontal) == 1 and not vertical and diagonal_blocked,
    }


def build_lorentz_rect(l1: float, l2: float, rho_c: float, rho_q: float) -> BilliardTable:
    """Rectangle with a central dispersing disk and two bottom corner quarter disks."""
    l1, l2 = float(l1), float(l2)
    rho_c, rho_q = float(rho_c), float(rho_q)
    if min(l1, l2, rho_c, rho_q) <= 0.0:
        raise ConfigError("lorentz_rect requires positive dimensions and radii")
    if rho_q >= 0.5 * min(l1, l2):
        raise ConfigError("corner radius too large for the rectangle")
    if rho_c >= 0.5 * min(l1, l2):
        raise ConfigError("central disk touches or crosses a wall")
    if math.hypot(0.5 * l1, 0.5 * l2) <= rho_c + rho_q:
        raise ConfigError("central disk touches a corner disk")
    pieces = [
        {"kind": KIND_SEG, "start": (rho_q, 0.0), "end": (l1 - rho_q, 0.0)},
        {"kind": KIND_ARC, "center": (l1, 0.0), "rad": rho_q, "a0": math.pi,
         "orient": -1.0, "alen": 0.5 * math.pi},
        {"kind": KIND_SEG, "start": (l1, rho_q), "end": (l1, l2)},
        {"kind": KIND_SEG, "start": (l1, l2), "end": (0.0, l2)},
        {"kind": KIND_SEG, "start": (0.0, l2), "end": (0.0, rho_q)},
        {"kind": KIND_ARC, "center": (0.0, 0.0), "rad": rho_q, "a0": 0.5 * math.pi,
         "orient": -1.0, "alen": 0.5 * math.pi},
        {"kind": KIND_ARC, "center": (0.5 * l1, 0.5 * l2), "rad": rho_c, "a0": 0.0,
         "orient": -1.0, "alen": TWO_PI},
    ]
    kind, prm, r0 = _pack(pieces)
    _check_closure(kind, prm, r0)
    channels = lorentz_channels(l1, l2, rho_c, rho_q)
    # channel set A: sub-intervals of the vertical walls cut by each
    # open horizontal band (right wall starts at r0[2] with y = rho_q + s,
    # left wall starts at r0[4] with y = l2 - s)
    a_list = []
    chan_descr = []
    for y_lo, y_hi in channels["horizontal"]:
        right = (r0[2] + (y_lo - rho_q), r0[2] + (y_hi - rho_q))
        left = (r0[4] + (l2 - y_hi), r0[4] + (l2 - y_lo))
        a_list.extend([right, left])
        chan_descr.append({
            "band": (y_lo, y_hi),
            "free_path": l1,
            "r_intervals": [right, left],
        })
    A = np.array(a_list, dtype=np.float64)
    is_scat = np.zeros(7, dtype=np.int64)
    is_scat[[1, 5, 6]] = 1
    return BilliardTable(
        family="lorentz_rect",
        kind=kind, prm=prm, r0=r0,
        is_scat=is_scat,
        m_pieces=np.array([1, 5, 6], dtype=np.int64),
        m_first_only=False,
        A_intervals=A,
        params={
            "l1": l1, "l2": l2, "rho_c": rho_c, "rho_q": rho_q,
            "channels": chan_descr,
            "audit": channels,
        },
    )


@njit(cache=True)
def step_kernel(kind, prm, r0, r, phi):
    """One collision-to-collision step.

    Returns (r_new, phi_new, status, piece).  On a non-OK status the
    first two entries echo the (wrapped) input state and piece is the
    starting piece.
    """
    P = kind.shape[0]
    L = r0[P]
    rr = r % L
    if rr < 0.0:
        rr += L
    if rr >= L:
        rr -= L
    p = 0
    while p + 1 < P and rr >= r0[p + 1]:
        p += 1
    s = rr - r0[p]
    if kind[p] == KIND_SEG:
        ux = prm[p, 2]
        uy = prm[p, 3]
        x = prm[p, 0] + s * ux
        y = prm[p, 1] + s * uy
        tx = ux
        ty = uy
    else:
        rad = prm[p, 2]
        orient = prm[p, 4]
        a = prm[p, 3] + orient * s / rad
        ca = cos_exact(a)
        sa = sin_exact(a)
        x = prm[p, 0] + rad * ca
        y = prm[p, 1] + rad * sa
        tx = -orient * sa
        ty = orient * ca
    nx = -ty
    ny = tx
    cphi = cos_exact(phi)
    if cphi <= EPS_TAN:
        return rr, phi, STATUS_TANGENT, p
    sphi = sin_exact(phi)
    vx = cphi * nx + sphi * tx
    vy = cphi * ny + sphi * ty
    best_t = 1e300
    best_q = -1
    best_s = 0.0
    for q in range(P):
        if kind[q] == KIND_SEG:
            ux = prm[q, 2]
            uy = prm[q, 3]
            ln = prm[q, 4]
            den = vx * uy - vy * ux
            if den > -1e-300 and den < 1e-300:
                continue
            wx = prm[q, 0] - x
            wy = prm[q, 1] - y
            t = (wx * uy - wy * ux) / den
            if t <= EPS_T or t >= best_t:
                continue
            u = (wx * vy - wy * vx) / den
            if u < -EPS_FIT or u > ln + EPS_FIT:
                continue
            if u < 0.0:
                u = 0.0
            if u > ln:
                u = ln
            best_t = t
            best_q = q
            best_s = u
        else:
            cx = prm[q, 0]
            cy = prm[q, 1]
            rad = prm[q, 2]
            a0 = prm[q, 3]
            orient = prm[q, 4]
            alen = prm[q, 5]
            ex = x - cx
            ey = y - cy
            b = ex * vx + ey * vy
            c2 = ex * ex + ey * ey - rad * rad
            disc = b * b - c2
            if disc <= 0.0:
                continue
            sd = math.sqrt(disc)
            if b >= 0.0:
                qq = -(b + sd)
            else:
                qq = -(b - sd)
            for ridx in range(2):
                if ridx == 0:
                    t = qq
                else:
                    if qq == 0.0:
                        continue
                    t = c2 / qq
                if t <= EPS_T or t >= best_t:
                    continue
                hx = x + t * vx - cx
                hy = y + t * vy - cy
                ah = math.atan2(hy, hx)
                da = (orient * (ah - a0)) % TWO_PI
                if da > alen:
                    if da > alen + EPS_FIT:
                        if TWO_PI - da > EPS_FIT:
                            continue
                        da = 0.0
                    else:
                        da = alen
                best_t = t
                best_q = q
                best_s = rad * da
    if best_q < 0:
        return rr, phi, STATUS_NOHIT, p
    q = best_q
    s2 = best_s
    full_circle = kind[q] == KIND_ARC and prm[q, 5] >= TWO_PI - 1e-12
    if not full_circle:
        plen = r0[q + 1] - r0[q]
        if s2 < EPS_CORNER or plen - s2 < EPS_CORNER:
            return rr, phi, STATUS_CORNER, p
    if kind[q] == KIND_SEG:
        tx2 = prm[q, 2]
        ty2 = prm[q, 3]
    else:
        orient = prm[q, 4]
        a2 = prm[q, 3] + orient * s2 / prm[q, 2]
        tx2 = -orient * sin_exact(a2)
        ty2 = orient * cos_exact(a2)
    nx2 = -ty2
    ny2 = tx2
    ci = vx * nx2 + vy * ny2
    if ci > -EPS_TAN:
        return rr, phi, STATUS_TANGENT, p
    wx2 = vx - 2.0 * ci * nx2
    wy2 = vy - 2.0 * ci * ny2
    phi2 = math.atan2(wx2 * tx2 + wy2 * ty2, wx2 * nx2 + wy2 * ny2)
    return r0[q] + s2, phi2, STATUS_OK, q


@njit(cache=True)
def orbit_kernel(kind, prm, r0, r, phi, n, out_r, out_phi, out_piece):
    """Fill n successive collisions; returns (status, steps_done)."""
    cur_r = r
    cur_phi = phi
    for i in range(n):
        r2, phi2, st, q = step_kernel(kind, prm, r0, cur_r, cur_phi)
        if st != STATUS_OK:
            return st, i
        out_r[i] = r2
        out_phi[i] = phi2
        out_piece[i] = q
        cur_r = r2
        cur_phi = phi2
    return STATUS_OK, n


def piece_of(table: BilliardTable, r):
    """Piece index containing arclength r (vectorized)."""
    rr = np.asarray(r, dtype=np.float64) % table.perimeter
    p = np.searchsorted(table.r0, rr, side="right") - 1
    return np.clip(p, 0, table.npieces - 1)


def boundary_point(table: BilliardTable, r):
    """Position, tangent and inward normal at arclength r (vectorized).

    Returns (x, y, tx, ty, nx, ny, piece).
    """
    rr = np.atleast_1d(np.asarray(r, dtype=np.float64)) % table.perimeter
    p = np.asarray(piece_of(table, rr))
    x = np.empty_like(rr)
    y = np.empty_like(rr)
    tx = np.empty_like(rr)
    ty = np.empty_like(rr)
    for q in range(table.npieces):
        m = p == q
        if not np.any(m):
            continue
        s = rr[m] - table.r0[q]
        if table.kind[q] == KIND_SEG:
            x0, y0, ux, uy = table.prm[q, :4]
            x[m] = x0 + s * ux
            y[m] = y0 + s * uy
            tx[m] = ux
            ty[m] = uy
        else:
            cx, cy, rad, a0, orient = table.prm[q, :5]
            a = a0 + orient * s / rad
            x[m] = cx + rad * np.cos(a)
            y[m] = cy + rad * np.sin(a)
            tx[m] = -orient * np.sin(a)
            ty[m] = orient * np.cos(a)
    return x, y, tx, ty, -ty, tx, p


def billiard_map(table: BilliardTable, r: float, phi: float):
    """One step of the collision map; raises on singular events."""
    r2, phi2, st, q = step_kernel(table.kind, table.prm, table.r0, float(r), float(phi))
    if st == STATUS_TANGENT:
        raise TangencyError(f"tangential collision near r={r2:.12g}")
    if st == STATUS_CORNER:
        raise CornerError(f"junction hit launched from r={r2:.12g}")
    if st == STATUS_NOHIT:
        raise IterationCapError("ray tracer found no forward intersection")
    return r2, phi2


def reverse(r, phi):
    """Time-reversal involution R(r, phi) = (r, -phi)."""
    return r, -phi


def inverse_map(table: BilliardTable, r: float, phi: float):
    """One step of the inverse collision map, computed as R o T o R."""
    r2, phi2 = billiard_map(table, r, -float(phi))
    return r2, -phi2


def run_orbit(table: BilliardTable, r: float, phi: float, n: int):
    """n collisions from (r, phi); returns (r_arr, phi_arr, piece_arr).

    Raises the matching typed error if a singular event occurs before
    n steps complete.
    """
    out_r = np.empty(n, dtype=np.float64)
    out_phi = np.empty(n, dtype=np.float64)
    out_piece = np.empty(n, dtype=np.int64)
    st, done = orbit_kernel(table.kind, table.prm, table.r0,
                            float(r), float(phi), n, out_r, out_phi, out_piece)
    if st == STATUS_TANGENT:
        raise TangencyError(f"tangential collision at step {done}")
    if st == STATUS_CORNER:
        raise CornerError(f"junction hit at step {done}")
    if st == STATUS_NOHIT:
        raise IterationCapError(f"ray tracer found no intersection at step {done}")
    return out_r, out_phi, out_piece


def sample_collision_measure(table: BilliardTable, n: int, seed: int, start: int = 0):
    """n exact draws from the normalized collision measure.

    Inverse-CDF sampling: r is uniform on the boundary and sin(phi) is
    uniform on (-1, 1), using draws 2k and 2k+1 (k = start..start+n-1)
    of the counter-based stream, so successive calls with advancing
    ``start`` continue one deterministic stream.
    """
    seeds = np.full(n, np.uint64(seed), dtype=np.uint64)
    base = (np.arange(n, dtype=np.uint64) + np.uint64(start)) * np.uint64(2)
    u1 = unit_vec(seeds, base)
    u2 = unit_vec(seeds, base + np.uint64(1))
    r = table.perimeter * u1
    phi = np.arcsin(2.0 * u2 - 1.0)
    return r, phi
