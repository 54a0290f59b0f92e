"""Minkowski content, natural parametrization, and time-in-set measures.

The d-dimensional content of a trace is estimated as the extrapolated
limit of eps^(d-2) * Area{dist(., curve) < eps} down a dyadic eps ladder,
with neighborhood areas counted on a pixel grid.  Curves carry their
natural parametrization once their timestamps equal cumulative content.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .curves import Curve
from .errors import NumericalDegeneracyError, PreconditionError, ResourceLimitError
from .green import GreenParams

__all__ = [
    "Region",
    "ContentEstimate",
    "minkowski_content",
    "natural_reparam",
    "natural_length_proxy",
    "natural_reparam_proxy",
    "theta_in_set",
]

MAX_PIXELS = 60_000_000


@dataclass(frozen=True)
class Region:
    """Axis-aligned rectangle, disk, or the whole plane."""

    kind: str
    center: complex = 0j
    radius: float = 0.0
    x0: float = 0.0
    x1: float = 0.0
    y0: float = 0.0
    y1: float = 0.0

    @staticmethod
    def everything() -> "Region":
        return Region(kind="all")

    @staticmethod
    def disk(center: complex, radius: float) -> "Region":
        if radius <= 0:
            raise PreconditionError("disk region needs positive radius")
        return Region(kind="disk", center=center, radius=radius)

    @staticmethod
    def rect(x0: float, x1: float, y0: float, y1: float) -> "Region":
        if not (x1 > x0 and y1 > y0):
            raise PreconditionError("rectangle region needs positive extent")
        return Region(kind="rect", x0=x0, x1=x1, y0=y0, y1=y1)

    @staticmethod
    def square(center: complex, side: float) -> "Region":
        h = side / 2.0
        return Region.rect(center.real - h, center.real + h,
                           center.imag - h, center.imag + h)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        if self.kind == "all":
            return np.ones(np.shape(pts), dtype=bool)
        if self.kind == "disk":
            return np.abs(pts - self.center) < self.radius
        return ((pts.real >= self.x0) & (pts.real <= self.x1)
                & (pts.imag >= self.y0) & (pts.imag <= self.y1))


@dataclass(frozen=True)
class ContentEstimate:
    value: float
    eps_ladder: np.ndarray
    raw: np.ndarray
    slope: float
    residual: float
    pitch: float

    def __post_init__(self):
        if self.value < 0:
            raise PreconditionError("content estimate must be nonnegative")
        if len(self.eps_ladder) > 1 and np.any(np.diff(self.eps_ladder) >= 0):
            raise PreconditionError("eps ladder must strictly decrease")


def _trace_diameter(pts: np.ndarray) -> float:
    return float(math.hypot(pts.real.max() - pts.real.min(),
                            pts.imag.max() - pts.imag.min()))


def _resolve_ladder(ladder, diam: float) -> np.ndarray:
    if ladder is None:
        ladder = (0, 6)
    if isinstance(ladder, tuple) and len(ladder) == 2:
        k0, k1 = ladder
        eps = diam / 8.0 * 2.0 ** (-np.arange(k0, k1 + 1, dtype=float))
    else:
        eps = np.asarray(ladder, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise PreconditionError("ladder must be strictly decreasing and positive")
    if eps[0] > diam:
        raise PreconditionError("ladder coarser than the trace diameter")
    return eps


# --- segment clipping -------------------------------------------------------


@njit(cache=True)
def _seg_inside_fraction_disk(x0, y0, x1, y1, cx, cy, rad):
    """Length fraction of the segment inside the disk (exact)."""
    dx = x1 - x0
    dy = y1 - y0
    fx = x0 - cx
    fy = y0 - cy
    a = dx * dx + dy * dy
    if a == 0.0:
        return 1.0 if fx * fx + fy * fy < rad * rad else 0.0
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - rad * rad
    disc = b * b - 4.0 * a * c
    if disc <= 0.0:
        return 1.0 if c < 0.0 else 0.0
    sq = math.sqrt(disc)
    u0 = (-b - sq) / (2.0 * a)
    u1 = (-b + sq) / (2.0 * a)
    lo = max(u0, 0.0)
    hi = min(u1, 1.0)
    return max(hi - lo, 0.0)


@njit(cache=True)
def _seg_inside_fraction_rect(x0, y0, x1, y1, rx0, rx1, ry0, ry1):
    lo = 0.0
    hi = 1.0
    dx = x1 - x0
    if dx == 0.0:
        if x0 < rx0 or x0 > rx1:
            return 0.0
    else:
        u0 = (rx0 - x0) / dx
        u1 = (rx1 - x0) / dx
        if u0 > u1:
            u0, u1 = u1, u0
        lo = max(lo, u0)
        hi = min(hi, u1)
    dy = y1 - y0
    if dy == 0.0:
        if y0 < ry0 or y0 > ry1:
            return 0.0
    else:
        v0 = (ry0 - y0) / dy
        v1 = (ry1 - y0) / dy
        if v0 > v1:
            v0, v1 = v1, v0
        lo = max(lo, v0)
        hi = min(hi, v1)
    return max(hi - lo, 0.0)


@njit(cache=True)
def _theta_kernel(times, xs, ys, kind, p0, p1, p2, p3):
    total = 0.0
    for i in range(len(times) - 1):
        dt = times[i + 1] - times[i]
        if dt <= 0.0:
            continue
        if kind == 0:
            frac = 1.0
        elif kind == 1:
            frac = _seg_inside_fraction_disk(xs[i], ys[i], xs[i + 1], ys[i + 1],
                                             p0, p1, p2)
        else:
            frac = _seg_inside_fraction_rect(xs[i], ys[i], xs[i + 1], ys[i + 1],
                                             p0, p1, p2, p3)
        total += dt * frac
    return total


def theta_in_set(trace_nat: Curve, region: Region) -> float:
    """Time the (naturally parametrized) trace spends in the region.

    Segment crossings are clipped analytically, so additivity over
    interior-disjoint regions holds up to timestamp resolution.
    """
    pts = trace_nat.points
    if region.kind == "all":
        return trace_nat.duration
    if region.kind == "disk":
        return float(_theta_kernel(trace_nat.times, pts.real, pts.imag, 1,
                                   region.center.real, region.center.imag,
                                   region.radius, 0.0))
    return float(_theta_kernel(trace_nat.times, pts.real, pts.imag, 2,
                               region.x0, region.x1, region.y0, region.y1))


# --- pixel machinery --------------------------------------------------------


@njit(cache=True)
def _supersample(xs, ys, ts, step):
    """Points along the polyline no farther than `step` apart, with their
    interpolated times.  Keeps every vertex."""
    n = len(xs)
    total = 0
    for i in range(n - 1):
        seg = math.hypot(xs[i + 1] - xs[i], ys[i + 1] - ys[i])
        total += 1 + int(seg / step)
    total += 1
    ox = np.empty(total)
    oy = np.empty(total)
    ot = np.empty(total)
    k = 0
    for i in range(n - 1):
        seg = math.hypot(xs[i + 1] - xs[i], ys[i + 1] - ys[i])
        m = 1 + int(seg / step)
        for j in range(m):
            u = j / m
            ox[k] = xs[i] + u * (xs[i + 1] - xs[i])
            oy[k] = ys[i] + u * (ys[i + 1] - ys[i])
            ot[k] = ts[i] + u * (ts[i + 1] - ts[i])
            k += 1
    ox[k] = xs[n - 1]
    oy[k] = ys[n - 1]
    ot[k] = ts[n - 1]
    return ox, oy, ot


def _pixel_setup(trace: Curve, eps: np.ndarray, region: Region | None):
    """Supersample the trace at half-pixel pitch, restrict to the region,
    and lay out the pixel grid around what is left."""
    h = eps[-1] / 8.0
    arclen = float(np.abs(np.diff(trace.points)).sum())
    if arclen / (h / 2.0) > 40_000_000:
        raise ResourceLimitError(
            "ladder too fine for the trace arclength; coarsen the ladder")
    xs, ys, ts = _supersample(trace.points.real, trace.points.imag,
                              trace.times, h / 2.0)
    if region is not None and region.kind != "all":
        m = region.contains(xs + 1j * ys)
        xs, ys, ts = xs[m], ys[m], ts[m]
        if xs.size == 0:
            return None
    pad = eps[0] + 2 * h
    x0 = xs.min() - pad
    y0 = ys.min() - pad
    nx = int((xs.max() + pad - x0) / h) + 2
    ny = int((ys.max() + pad - y0) / h) + 2
    if nx * ny > MAX_PIXELS:
        diam = _trace_diameter(trace.points)
        k_ok = 0
        while k_ok < 12:
            h2 = diam / 8.0 * 2.0 ** (-(k_ok + 1)) / 8.0
            if (diam / h2 + 4) ** 2 > MAX_PIXELS:
                break
            k_ok += 1
        raise ResourceLimitError(
            f"ladder needs {nx * ny} pixels (cap {MAX_PIXELS}); "
            f"try ladder=(0, {max(k_ok - 1, 0)})")
    ix = ((xs - x0) / h).astype(np.int64)
    iy = ((ys - y0) / h).astype(np.int64)
    return h, x0, y0, nx, ny, ix, iy, ts


def _fit_ladder(eps: np.ndarray, raw: np.ndarray):
    """Fit raw = value + b * eps^theta with theta free in [0.05, 1]."""
    if len(eps) == 1:
        return float(raw[0]), 1.0, 0.0
    best = (math.inf, float(raw[-1]), 1.0)
    for theta in np.linspace(0.05, 1.0, 39):
        x = eps**theta
        A = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(A, raw, rcond=None)
        res = float(np.sum((A @ coef - raw) ** 2))
        if res < best[0]:
            best = (res, float(coef[0]), float(theta))
    sse, value, theta = best
    scale = max(float(np.mean(np.abs(raw))), 1e-300)
    residual = math.sqrt(sse / len(eps)) / scale
    return max(value, 0.0), theta, residual


def minkowski_content(trace: Curve, region: Region | None = None,
                      p: GreenParams | None = None, *, kappa: float | None = None,
                      ladder=None) -> ContentEstimate:
    """Extrapolated d-content of the trace clipped to the region.

    Neighborhood areas are pixel counts at pitch eps/8 (one shared grid at
    the finest pitch serves the whole ladder).  Deterministic.
    """
    if p is None:
        if kappa is None:
            raise PreconditionError("pass GreenParams or kappa")
        p = GreenParams(kappa)
    if len(trace.points) == 0:
        raise PreconditionError("empty trace")
    pts_all = trace.points
    diam = _trace_diameter(pts_all)
    if diam <= 0:
        raise PreconditionError("degenerate trace with zero extent")
    eps = _resolve_ladder(ladder, diam)
    setup = _pixel_setup(trace, eps, region)
    if setup is None:
        return ContentEstimate(0.0, eps, np.zeros(len(eps)), 0.0, 0.0, eps[-1] / 8.0)
    h, x0, y0, nx, ny, ix, iy, _ = setup
    marked = np.zeros((nx, ny), dtype=bool)
    marked[ix, iy] = True
    dist = ndimage.distance_transform_edt(~marked, sampling=h)
    raw = np.empty(len(eps))
    for k, e in enumerate(eps):
        area = np.count_nonzero(dist < e) * h * h
        raw[k] = e ** (p.d - 2.0) * area
    value, theta, residual = _fit_ladder(eps, raw)
    return ContentEstimate(value, eps, raw, theta, residual, h)


# --- natural parametrization ------------------------------------------------


def _checkpoint_times(trace: Curve, n_ck: int) -> np.ndarray:
    """Checkpoints at arclength quantiles; includes both endpoints."""
    pts = trace.points
    seg = np.abs(np.diff(pts))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        raise NumericalDegeneracyError("trace does not move")
    q = np.linspace(0.0, s[-1], n_ck + 1)
    return np.interp(q, s, trace.times)


def _strictify(times_new: np.ndarray, pts: np.ndarray, total: float) -> np.ndarray:
    """Monotone repair: nondecreasing overall, strictly increasing wherever
    consecutive points differ."""
    t = np.maximum.accumulate(times_new)
    moving = np.abs(np.diff(pts)) > 0
    bump = np.zeros_like(t)
    bump[1:] = np.where(moving & (np.diff(t) <= 0), 1.0, 0.0)
    if bump.any():
        t = t + np.cumsum(bump) * (total * 1e-9 + 1e-300)
    t[0] = 0.0
    return t


def natural_reparam(trace: Curve, p: GreenParams, ladder=None,
                    n_checkpoints: int = 64) -> Curve:
    """Replace capacity timestamps with cumulative content of prefixes.

    Prefix contents are measured at checkpoint times on the shared pixel
    grid (first-visit labels through the distance transform), scaled so
    the final time equals the extrapolated whole-trace content.
    """
    if len(trace.points) < 2:
        raise PreconditionError("need at least two trace points")
    pts = trace.points
    diam = _trace_diameter(pts)
    if diam <= 0:
        raise NumericalDegeneracyError("zero-extent trace has no content")
    eps = _resolve_ladder(ladder, diam)
    setup = _pixel_setup(trace, eps, None)
    h, x0, y0, nx, ny, ix, iy, ts = setup
    ck = _checkpoint_times(trace, n_checkpoints)
    lab_pts = np.searchsorted(ck[1:-1], ts, side="left").astype(np.int64)

    big = np.iinfo(np.int32).max
    labgrid = np.full((nx, ny), big, dtype=np.int64)
    np.minimum.at(labgrid, (ix, iy), lab_pts)
    marked = labgrid < big
    dist, (jx, jy) = ndimage.distance_transform_edt(
        ~marked, sampling=h, return_indices=True)

    raw = np.empty(len(eps))
    for k, e in enumerate(eps):
        raw[k] = e ** (p.d - 2.0) * np.count_nonzero(dist < e) * h * h
    total, _, _ = _fit_ladder(eps, raw)
    if total <= 0 or raw[-1] <= 0:
        raise NumericalDegeneracyError("content of the trace vanished")

    e_min = eps[-1]
    hit = dist < e_min
    lab_hit = labgrid[jx[hit], jy[hit]]
    counts = np.bincount(lab_hit, minlength=n_checkpoints)
    prefix = np.cumsum(counts).astype(float)
    prefix *= total / prefix[-1]
    ck_vals = np.concatenate([[0.0], prefix])

    times_new = np.interp(trace.times, ck, ck_vals)
    times_new = _strictify(times_new, pts, total)
    return Curve(times=times_new, points=pts.copy())


# --- fast proxy -------------------------------------------------------------


@njit(cache=True)
def _piece_cuts(xs, ys, ss, delta):
    """Greedy split into pieces of diameter ~delta along the resampled
    polyline; returns the arclength positions of the cuts."""
    n = len(xs)
    cuts = np.empty(n)
    m = 0
    ax = xs[0]
    ay = ys[0]
    for i in range(1, n):
        dx = xs[i] - ax
        dy = ys[i] - ay
        if dx * dx + dy * dy >= delta * delta:
            cuts[m] = ss[i]
            m += 1
            ax = xs[i]
            ay = ys[i]
    return cuts[:m]


def _resample_by_arclength(pts: np.ndarray, times: np.ndarray, step: float):
    seg = np.abs(np.diff(pts))
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    if L <= 0:
        return None
    n = max(int(L / step) + 2, 2)
    sq = np.linspace(0.0, L, n)
    xs = np.interp(sq, s, pts.real)
    ys = np.interp(sq, s, pts.imag)
    return s, sq, xs, ys, L


def natural_length_proxy(trace: Curve, p: GreenParams,
                         delta: float | None = None) -> float:
    """Piece-count content proxy: N(delta) * delta^d for pieces of spatial
    extent delta.  Cheap enough for large ensembles; absolute scale is
    fixed by the Green-mass calibration, not by this function."""
    diam = _trace_diameter(trace.points)
    if diam <= 0:
        return 0.0
    if delta is None:
        delta = diam / 128.0
    res = _resample_by_arclength(trace.points, trace.times, delta / 3.0)
    if res is None:
        return 0.0
    _, sq, xs, ys, _ = res
    cuts = _piece_cuts(xs, ys, sq, delta)
    return (len(cuts) + 1) * delta**p.d


def natural_reparam_proxy(trace: Curve, p: GreenParams,
                          delta: float | None = None) -> Curve:
    """Natural-time reassignment from the piece-count proxy.

    Time advances by delta^d per completed piece, interpolated linearly in
    arclength inside a piece.  Same output contract as natural_reparam.
    """
    if len(trace.points) < 2:
        raise PreconditionError("need at least two trace points")
    pts = trace.points
    diam = _trace_diameter(pts)
    if diam <= 0:
        raise NumericalDegeneracyError("zero-extent trace has no content")
    if delta is None:
        delta = diam / 128.0
    res = _resample_by_arclength(pts, trace.times, delta / 3.0)
    if res is None:
        raise NumericalDegeneracyError("zero-extent trace has no content")
    s_orig, sq, xs, ys, L = res
    cuts = _piece_cuts(xs, ys, sq, delta)
    piece_time = delta**p.d
    # natural time at arclength s: (completed pieces + fraction) * piece_time
    knots = np.concatenate([[0.0], cuts, [L]])
    knots = np.unique(knots)
    vals = np.arange(len(knots), dtype=float) * piece_time
    times_new = np.interp(s_orig, knots, vals)
    times_new = _strictify(times_new, pts, times_new[-1] if times_new[-1] > 0 else piece_time)
    return Curve(times=times_new, points=pts.copy())
