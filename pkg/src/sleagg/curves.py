"""Curves with timestamps and the two curve metrics.

A sampled curve is a nondecreasing timestamp grid starting at 0 plus one
complex point per timestamp; between samples it is read as piecewise
linear.  Two metrics are exposed:

* ``dist_dc`` — duration gap plus sup distance after linear reparametrization
  of both curves to a common unit interval.
* ``dist_dd_upper`` — an upper bound for the reparametrization-invariant
  metric: the infimum over nondecreasing time alignments of
  (sup time gap + sup point gap).  Computed from a monotone discrete
  alignment, so it carries one-sample-gap slack; it is clipped at the
  ``dist_dc`` value, which is itself an admissible alignment.

Both are pseudometrics on sampled curves and satisfy (up to sampling slack)
``dd <= dc <= dd + osc(2 dd)`` where ``osc`` is the modulus of continuity
of either curve.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import PreconditionError

__all__ = [
    "Curve",
    "CurveMetricKind",
    "oscillation",
    "dist_dc",
    "dist_dd_upper",
    "curve_distance",
    "reverse",
    "concat",
    "pairwise_distances",
    "first_circle_hit",
    "segments_hit_circle",
    "min_distance_to_point",
    "thin_curve",
    "truncate_at_time",
    "resample_arclength",
]


@dataclass(frozen=True)
class Curve:
    """Timestamped polyline in the complex plane.

    times: float64, nondecreasing, times[0] == 0.
    points: complex128, same length as times, length >= 1.
    """

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.ascontiguousarray(np.asarray(self.times, dtype=np.float64))
        p = np.ascontiguousarray(np.asarray(self.points, dtype=np.complex128))
        if t.ndim != 1 or p.ndim != 1 or t.shape[0] != p.shape[0] or t.shape[0] < 1:
            raise PreconditionError(
                f"times/points must be 1-d and equal length >= 1, got {t.shape} vs {p.shape}"
            )
        if t[0] != 0.0:
            raise PreconditionError(f"times must start at 0, got {t[0]!r}")
        if np.any(np.diff(t) < 0.0):
            raise PreconditionError("times must be nondecreasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p.view(np.float64)))):
            raise PreconditionError("times and points must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    def __len__(self) -> int:
        return int(self.times.shape[0])

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def at(self, t: float) -> complex:
        """Linear interpolation at time t (clamped to [0, duration])."""
        x = np.interp(t, self.times, self.points.real)
        y = np.interp(t, self.times, self.points.imag)
        return complex(x, y)


class CurveMetricKind(enum.Enum):
    DC = "dc"
    DD_UPPER = "dd_upper"


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _osc_kernel(times, re, im, delta):
    n = times.shape[0]
    best = 0.0
    j0 = 0
    for i in range(n):
        if j0 < i:
            j0 = i
        for j in range(i + 1, n):
            if times[j] - times[i] > delta:
                break
            dx = re[j] - re[i]
            dy = im[j] - im[i]
            d2 = dx * dx + dy * dy
            if d2 > best:
                best = d2
    return np.sqrt(best)


@njit(cache=True, inline="always")
def _eval_seg(times, re, im, k, t):
    # interpolate inside segment k (times[k] <= t <= times[k+1] expected)
    t0 = times[k]
    t1 = times[k + 1]
    if t1 <= t0:
        return re[k + 1], im[k + 1]
    w = (t - t0) / (t1 - t0)
    return re[k] + w * (re[k + 1] - re[k]), im[k] + w * (im[k + 1] - im[k])


@njit(cache=True)
def _dc_kernel(ta, ra, ia, tb, rb, ib, refine):
    # sup_x |a(x*Ta) - b(x*Tb)| over union grid of normalized knots,
    # each gap subdivided `refine` times, plus |Ta - Tb|.
    na = ta.shape[0]
    nb = tb.shape[0]
    Ta = ta[na - 1]
    Tb = tb[nb - 1]
    sup2 = 0.0
    ka = 0
    kb = 0
    u = 0.0
    dx = ra[0] - rb[0]
    dy = ia[0] - ib[0]
    sup2 = dx * dx + dy * dy
    while u < 1.0:
        # next normalized knot from either grid
        una = 1.1 if Ta <= 0.0 else 2.0
        if Ta > 0.0:
            while ka < na - 1 and ta[ka + 1] / Ta <= u + 1e-15:
                ka += 1
            una = ta[ka + 1] / Ta if ka < na - 1 else 1.0
        unb = 1.1 if Tb <= 0.0 else 2.0
        if Tb > 0.0:
            while kb < nb - 1 and tb[kb + 1] / Tb <= u + 1e-15:
                kb += 1
            unb = tb[kb + 1] / Tb if kb < nb - 1 else 1.0
        unext = min(una, unb)
        if unext > 1.0:
            unext = 1.0
        if unext <= u:
            break
        for s in range(1, refine + 1):
            x = u + (unext - u) * s / refine
            if Ta > 0.0:
                axr, axi = _eval_seg(ta, ra, ia, ka, x * Ta)
            else:
                axr, axi = ra[na - 1], ia[na - 1]
            if Tb > 0.0:
                bxr, bxi = _eval_seg(tb, rb, ib, kb, x * Tb)
            else:
                bxr, bxi = rb[nb - 1], ib[nb - 1]
            dx = axr - bxr
            dy = axi - bxi
            d2 = dx * dx + dy * dy
            if d2 > sup2:
                sup2 = d2
        u = unext
    return abs(Ta - Tb) + np.sqrt(sup2)


@njit(cache=True)
def _dd_kernel(ta, ra, ia, tb, rb, ib):
    # bottleneck DTW on pointwise cost |dt| + |dp|, then report
    # (max |dt| + max |dp|) along the minimizing monotone alignment.
    n = ta.shape[0]
    m = tb.shape[0]
    dp = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        for j in range(m):
            dx = ra[i] - rb[j]
            dy = ia[i] - ib[j]
            c = abs(ta[i] - tb[j]) + np.sqrt(dx * dx + dy * dy)
            if i == 0 and j == 0:
                prev = 0.0
            elif i == 0:
                prev = dp[0, j - 1]
            elif j == 0:
                prev = dp[i - 1, 0]
            else:
                prev = min(dp[i - 1, j], dp[i, j - 1], dp[i - 1, j - 1])
            dp[i, j] = c if c > prev else prev
    # backtrack
    i = n - 1
    j = m - 1
    maxt = 0.0
    maxp = 0.0
    while True:
        dt = abs(ta[i] - tb[j])
        dx = ra[i] - rb[j]
        dy = ia[i] - ib[j]
        dpt = np.sqrt(dx * dx + dy * dy)
        if dt > maxt:
            maxt = dt
        if dpt > maxp:
            maxp = dpt
        if i == 0 and j == 0:
            break
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            b1 = dp[i - 1, j - 1]
            b2 = dp[i - 1, j]
            b3 = dp[i, j - 1]
            if b1 <= b2 and b1 <= b3:
                i -= 1
                j -= 1
            elif b2 <= b3:
                i -= 1
            else:
                j -= 1
    return maxt + maxp


@njit(cache=True)
def _pairwise_kernel(
    times_a, re_a, im_a, off_a, times_b, re_b, im_b, off_b,
    rtimes_a, rre_a, rim_a, rtimes_b, rre_b, rim_b, kind_dc, refine, out
):
    na = off_a.shape[0] - 1
    nb = off_b.shape[0] - 1
    for i in range(na):
        a0 = off_a[i]
        a1 = off_a[i + 1]
        for j in range(nb):
            b0 = off_b[j]
            b1 = off_b[j + 1]
            dc = _dc_kernel(
                times_a[a0:a1], re_a[a0:a1], im_a[a0:a1],
                times_b[b0:b1], re_b[b0:b1], im_b[b0:b1], refine,
            )
            if kind_dc:
                out[i, j] = dc
            else:
                dd = _dd_kernel(
                    times_a[a0:a1], re_a[a0:a1], im_a[a0:a1],
                    times_b[b0:b1], re_b[b0:b1], im_b[b0:b1],
                )
                dd2 = _dd_kernel(
                    rtimes_a[a0:a1], rre_a[a0:a1], rim_a[a0:a1],
                    rtimes_b[b0:b1], rre_b[b0:b1], rim_b[b0:b1],
                )
                if dd2 < dd:
                    dd = dd2
                out[i, j] = dd if dd < dc else dc
    return out


# ---------------------------------------------------------------------------
# public ops


def oscillation(curve: Curve, delta: float) -> float:
    """sup |curve(s) - curve(t)| over sampled pairs with |s - t| <= delta."""
    if not np.isfinite(delta) or delta <= 0:
        raise PreconditionError(f"delta must be positive and finite, got {delta}")
    return float(_osc_kernel(curve.times, curve.points.real, curve.points.imag, float(delta)))


def dist_dc(a: Curve, b: Curve, refine: int = 4) -> float:
    """Duration gap + sup distance under linear reparametrization to [0, 1].

    The sup is taken over the union of both normalized knot grids with each
    gap subdivided ``refine`` times (default 4).
    """
    if refine < 1:
        raise PreconditionError(f"refine must be >= 1, got {refine}")
    return float(
        _dc_kernel(
            a.times, a.points.real, a.points.imag,
            b.times, b.points.real, b.points.imag, int(refine),
        )
    )


def dist_dd_upper(a: Curve, b: Curve) -> float:
    """Upper bound for the reparametrization infimum metric.

    Takes the better of (i) the monotone discrete alignment minimizing the
    bottleneck of pointwise (time gap + point gap), scored by
    max-time-gap + max-point-gap along that alignment, and (ii) the linear
    alignment, whose score is exactly ``dist_dc``.  The alignment is scored
    on both traversal orientations and the smaller bound kept; alignment
    time gaps are anchored at the curve starts, so a single orientation
    would not be reversal invariant when durations differ.
    """
    dd = float(
        _dd_kernel(
            a.times, a.points.real, a.points.imag,
            b.times, b.points.real, b.points.imag,
        )
    )
    ar, br = reverse(a), reverse(b)
    dd2 = float(
        _dd_kernel(
            ar.times, ar.points.real, ar.points.imag,
            br.times, br.points.real, br.points.imag,
        )
    )
    return min(dd, dd2, dist_dc(a, b))


def curve_distance(a: Curve, b: Curve, kind: CurveMetricKind) -> float:
    if kind is CurveMetricKind.DC:
        return dist_dc(a, b)
    return dist_dd_upper(a, b)


def reverse(curve: Curve) -> Curve:
    """Traverse backwards; timestamps are re-anchored at 0."""
    t = curve.times
    return Curve(times=(t[-1] - t)[::-1].copy(), points=curve.points[::-1].copy())


def concat(a: Curve, b: Curve, tol: float = 1e-9) -> Curve:
    """Concatenate b after a.  Endpoints must agree within tol."""
    gap = abs(a.points[-1] - b.points[0])
    if gap > tol:
        raise PreconditionError(f"concat endpoint mismatch {gap:g} exceeds tol {tol:g}")
    times = np.concatenate([a.times, b.times[1:] + a.duration])
    points = np.concatenate([a.points, b.points[1:]])
    if len(b) == 1:
        return Curve(times=a.times.copy(), points=a.points.copy())
    return Curve(times=times, points=points)


def thin_curve(curve: Curve, n_max: int) -> Curve:
    """Keep at most n_max vertices, chosen uniformly by index.

    Endpoints survive, so durations are unchanged; the sup-norm error is
    bounded by the oscillation over the dropped spans.  Meant for metric
    evaluation on large ensembles, where the O(n*m) alignment cost rules
    out full-resolution polylines.
    """
    if n_max < 2:
        raise PreconditionError(f"n_max must be >= 2, got {n_max}")
    n = len(curve)
    if n <= n_max:
        return curve
    idx = np.unique(np.round(np.linspace(0, n - 1, n_max)).astype(np.int64))
    return Curve(times=curve.times[idx].copy(), points=curve.points[idx].copy())


def _flatten(curves) -> tuple:
    offs = np.zeros(len(curves) + 1, dtype=np.int64)
    for i, c in enumerate(curves):
        offs[i + 1] = offs[i] + len(c)
    times = np.concatenate([c.times for c in curves])
    pts = np.concatenate([c.points for c in curves])
    return times, np.ascontiguousarray(pts.real), np.ascontiguousarray(pts.imag), offs


def pairwise_distances(curves_a, curves_b, kind: CurveMetricKind, refine: int = 4) -> np.ndarray:
    """Distance matrix between two curve families (rows: a, cols: b)."""
    if len(curves_a) == 0 or len(curves_b) == 0:
        return np.zeros((len(curves_a), len(curves_b)))
    ta, ra, ia, oa = _flatten(curves_a)
    tb, rb, ib, ob = _flatten(curves_b)
    rta, rra, ria, _ = _flatten([reverse(c) for c in curves_a])
    rtb, rrb, rib, _ = _flatten([reverse(c) for c in curves_b])
    out = np.empty((len(curves_a), len(curves_b)), dtype=np.float64)
    _pairwise_kernel(
        ta, ra, ia, oa, tb, rb, ib, ob,
        rta, rra, ria, rtb, rrb, rib,
        kind is CurveMetricKind.DC, refine, out,
    )
    return out


# ---------------------------------------------------------------------------
# polyline geometry helpers shared by the samplers and statistics


@njit(cache=True)
def _first_circle_hit_kernel(times, re, im, cx, cy, r):
    # first time the polyline reaches the closed disk B(c, r); nan if never.
    n = times.shape[0]
    dx = re[0] - cx
    dy = im[0] - cy
    if dx * dx + dy * dy <= r * r:
        return times[0]
    for k in range(n - 1):
        ax = re[k] - cx
        ay = im[k] - cy
        bx = re[k + 1] - re[k]
        by = im[k + 1] - im[k]
        # |A + s B|^2 = r^2, s in (0, 1]
        aa = bx * bx + by * by
        bb = 2.0 * (ax * bx + ay * by)
        cc = ax * ax + ay * ay - r * r
        if cc <= 0.0:
            return times[k]
        if aa <= 0.0:
            continue
        disc = bb * bb - 4.0 * aa * cc
        if disc < 0.0:
            continue
        sq = np.sqrt(disc)
        s = (-bb - sq) / (2.0 * aa)
        if s < 0.0:
            s = (-bb + sq) / (2.0 * aa)
        if 0.0 <= s <= 1.0:
            return times[k] + s * (times[k + 1] - times[k])
    return np.nan


def first_circle_hit(curve: Curve, center: complex, radius: float) -> float:
    """First trace time entering the closed disk B(center, radius); nan if none.

    Segment-level: crossings inside a sampling gap are interpolated linearly.
    """
    if radius < 0:
        raise PreconditionError(f"radius must be >= 0, got {radius}")
    return float(
        _first_circle_hit_kernel(
            curve.times, curve.points.real, curve.points.imag,
            float(center.real), float(center.imag), float(radius),
        )
    )


@njit(cache=True)
def _segments_hit_circle_kernel(re, im, cx, cy, r):
    # does the polyline intersect the circle |z - c| = r?
    n = re.shape[0]
    d0 = np.sqrt((re[0] - cx) ** 2 + (im[0] - cy) ** 2)
    inside = d0 <= r
    if abs(d0 - r) == 0.0:
        return True
    for k in range(1, n):
        d = np.sqrt((re[k] - cx) ** 2 + (im[k] - cy) ** 2)
        nowin = d <= r
        if nowin != inside:
            return True
        inside = nowin
    return False


def segments_hit_circle(points: np.ndarray, center: complex, radius: float) -> bool:
    """True if the polyline crosses (or touches from a sign change) the circle."""
    p = np.asarray(points, dtype=np.complex128)
    return bool(
        _segments_hit_circle_kernel(
            np.ascontiguousarray(p.real), np.ascontiguousarray(p.imag),
            float(center.real), float(center.imag), float(radius),
        )
    )


@njit(cache=True)
def _min_dist_kernel(re, im, px, py):
    n = re.shape[0]
    best = (re[0] - px) ** 2 + (im[0] - py) ** 2
    for k in range(n - 1):
        ax = re[k] - px
        ay = im[k] - py
        bx = re[k + 1] - re[k]
        by = im[k + 1] - im[k]
        aa = bx * bx + by * by
        if aa > 0.0:
            s = -(ax * bx + ay * by) / aa
            if s < 0.0:
                s = 0.0
            elif s > 1.0:
                s = 1.0
        else:
            s = 0.0
        dx = ax + s * bx
        dy = ay + s * by
        d2 = dx * dx + dy * dy
        if d2 < best:
            best = d2
    return np.sqrt(best)


def min_distance_to_point(points: np.ndarray, zeta: complex) -> float:
    """Euclidean distance from a polyline (segments included) to a point."""
    p = np.asarray(points, dtype=np.complex128)
    return float(
        _min_dist_kernel(
            np.ascontiguousarray(p.real), np.ascontiguousarray(p.imag),
            float(zeta.real), float(zeta.imag),
        )
    )


def truncate_at_time(curve: Curve, t: float) -> Curve:
    """Initial segment [0, t], interpolating the final point."""
    if t < 0 or t > curve.duration + 1e-12:
        raise PreconditionError(f"truncation time {t} outside [0, {curve.duration}]")
    t = min(t, curve.duration)
    k = int(np.searchsorted(curve.times, t, side="right"))
    times = np.concatenate([curve.times[:k], [t]])
    points = np.concatenate([curve.points[:k], [curve.at(t)]])
    if k > 0 and curve.times[k - 1] == t:
        times = curve.times[:k].copy()
        points = curve.points[:k].copy()
    return Curve(times=times, points=points)


def resample_arclength(points: np.ndarray, spacing: float, max_points: int = 200_000) -> np.ndarray:
    """Resample a polyline at (approximately) uniform arc-length spacing.

    Keeps overall geometry; used to decouple later scale-based statistics
    from uneven vertex allocation along the trace.
    """
    p = np.asarray(points, dtype=np.complex128)
    if p.shape[0] < 2:
        return p.copy()
    seg = np.abs(np.diff(p))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        return p[:1].copy()
    n = int(min(max(2, np.ceil(total / spacing) + 1), max_points))
    grid = np.linspace(0.0, total, n)
    return np.interp(grid, cum, p.real) + 1j * np.interp(grid, cum, p.imag)
