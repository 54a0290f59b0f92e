"""Two-sided radial SLE through an interior point, plus its oracle.

The sampler tilts the chordal driver by the Girsanov drift of the
conformal-radius martingale

    M_t = |g_t'(zeta)|^(2-d) * G_H(g_t(zeta) - U_t),

runs the tilted segment until the trace is within the stopping radius of
zeta, then continues as ordinary chordal SLE in the slit domain by
extending the same welding chain with fresh undrifted noise.  Both
segments live on one concatenated driver, so the trace is continuous at
the handoff; the continuation starts at the stopped tip and the tip's
distance to zeta is reported as miss_distance.

The independent oracle realizes the same law by restriction: chordal
traces weighted by 1{dist(gamma, zeta) < eps} * eps^(d-2).  The survey
machinery at the bottom estimates such hitting probabilities without
rendering: conformal-radius tracking classifies most paths via the Koebe
sandwich, exact welded boundary distances settle the rest, and the
stopped martingale M completes the unbounded-time tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .content import Region, natural_reparam_proxy
from .curves import Curve, first_circle_hit, min_distance_to_point, truncate_at_time
from .errors import (
    EmptyEnsembleError,
    NumericalDegeneracyError,
    PreconditionError,
)
from .green import (
    Configuration,
    GreenParams,
    _base_map,
    _finite,
    _marked_images,
    _mobius,
    _mobius_deriv,
    _normalizer,
    boundary_distance_lower,
    disk_to_halfplane,
    disk_to_halfplane_deriv,
    green_config,
    green_halfplane,
    halfplane_to_disk,
    halfplane_to_two_slit,
    two_slit_to_halfplane,
    two_slit_to_halfplane_deriv,
)
from .loewner import (
    ST_CRAD_STOP,
    SWALLOW_IM_FLOOR,
    LoewnerState,
    _forward_step,
    _track_kernel,
    _weld_batch,
    drive_path,
    map_derivative,
    map_point,
    trace_from_state,
)
from .rng import path_generator, spawn_seed

__all__ = [
    "TwoSidedSample",
    "TiltState",
    "tilt_state_at",
    "girsanov_drift",
    "log_tilt_martingale",
    "drift_fd",
    "sample_twosided",
    "oracle_reweighted",
    "escape_stat",
    "escape_slope",
    "wilson_interval",
    "rn_comparison",
    "RnReport",
    "tmass_log_ratio",
    "martingale_scan",
    "boundary_distance",
    "chordal_point_survey",
    "one_point_fit",
    "render_near_point",
]


@dataclass(frozen=True)
class TwoSidedSample:
    """One two-sided radial path z -> zeta -> w in natural time."""

    curve: Curve
    hit_time: float
    weight: float
    mass: float = 0.0
    miss_distance: float = 0.0
    connector_gap: float = 0.0  # zero by construction (single welding chain)
    stage1_capacity: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.hit_time < self.curve.duration):
            raise PreconditionError("hit_time must fall strictly inside the curve")
        if self.weight <= 0:
            raise PreconditionError("weight must be positive")


@dataclass(frozen=True)
class TiltState:
    """Running tilt data: Loewner state, transformed target, log martingale."""

    state: LoewnerState
    Z: complex
    logM: float

    def __post_init__(self):
        if self.Z.imag <= 0:
            raise PreconditionError("transformed target left the half-plane")
        if not math.isfinite(self.logM):
            raise PreconditionError("log martingale must be finite")


def tilt_state_at(state: LoewnerState, zeta: complex,
                  p: GreenParams | None = None) -> TiltState:
    """Tilt data of an interior point at the end of a driving chain."""
    if p is None:
        p = GreenParams(state.kappa)
    u_end = float(state.driver_values()[-1])
    Z = map_point(state, zeta) - u_end
    logder = math.log(map_derivative(state, zeta))
    return TiltState(state=state, Z=Z, logM=log_tilt_martingale(Z, logder, p))


# ---------------------------------------------------------------------------
# drift and martingale functionals


def girsanov_drift(Z: complex, p: GreenParams, variance: str = "unit") -> float:
    """Drift of the driver under the tilt by M_t.

    With a unit-quadratic-variation driver the drift is d(log M)/du =
    (4a-1) Re Z / |Z|^2; under the kappa-variance convention (d<U>_t =
    kappa dt) the same tilt reads kappa * d(log M)/du.
    """
    r2 = Z.real * Z.real + Z.imag * Z.imag
    if r2 == 0:
        raise PreconditionError("drift undefined at Z = 0")
    b = p.fouram1 * Z.real / r2
    if variance == "unit":
        return b
    if variance == "kappa":
        return p.kappa * b
    raise PreconditionError(f"unknown variance convention {variance!r}")


def log_tilt_martingale(Z: complex, logder: float, p: GreenParams) -> float:
    """log M = (2-d) log|g'| + log G_H(Z)."""
    if Z.imag <= 0:
        raise PreconditionError("martingale needs Im Z > 0")
    return (2.0 - p.d) * logder + math.log(green_halfplane(Z, p))


def drift_fd(Z: complex, logder: float, p: GreenParams,
             delta: float | None = None) -> float:
    """Central finite difference of log M in the driver value u.

    Shifting u by +delta shifts Z by -delta; the |g'| factor carries no u
    dependence, which this oracle checks implicitly by differencing the
    full log M.
    """
    if delta is None:
        delta = 1e-5 * abs(Z)
    lo = log_tilt_martingale(Z - delta, logder, p)
    hi = log_tilt_martingale(Z + delta, logder, p)
    return (lo - hi) / (2.0 * delta)


# ---------------------------------------------------------------------------
# configuration frames: domain <-> normalized half-plane


class _Frame:
    """Map T with T(z) = 0, T(w) = inf, and its analytic inverse."""

    def __init__(self, cfg: Configuration):
        if cfg.kind == "slit_half_plane":
            raise PreconditionError("sampling frames need an explicit domain")
        self.cfg = cfg
        self.coef = _normalizer(*_marked_images(cfg))

    def to_h(self, zeta: complex) -> tuple[complex, complex]:
        W, dW = _base_map(self.cfg, zeta)
        return (complex(_mobius(self.coef, W)),
                complex(_mobius_deriv(self.coef, W) * dW))

    def from_h(self, pts: np.ndarray) -> np.ndarray:
        A, B, C, D = self.coef
        W = (D * pts - B) / (-C * pts + A)
        if self.cfg.kind == "half_plane":
            return W
        if self.cfg.kind == "disk":
            return halfplane_to_disk(W)
        return halfplane_to_two_slit(W)


def _base_map_grid(cfg: Configuration, Z: np.ndarray):
    """Vectorized (phi, phi') of the un-normalized map for explicit domains."""
    if cfg.kind == "half_plane":
        return Z, np.ones_like(Z)
    if cfg.kind == "disk":
        return disk_to_halfplane(Z), disk_to_halfplane_deriv(Z)
    if cfg.kind == "two_slit_plane":
        return two_slit_to_halfplane(Z), two_slit_to_halfplane_deriv(Z)
    raise PreconditionError("grid evaluation needs an explicit domain")


# ---------------------------------------------------------------------------
# the sampler


def _render_indices(dts: np.ndarray, dus: np.ndarray, a: float, n_pts: int,
                    force=()) -> np.ndarray:
    """Sample indices at uniform quantiles of accumulated driver motion."""
    motion = np.abs(dus) + np.sqrt(2.0 * a * dts)
    s = np.cumsum(motion)
    targets = np.linspace(0.0, s[-1], min(n_pts, len(dts)))
    idx = np.searchsorted(s, targets).clip(0, len(dts) - 1)
    if len(force):
        idx = np.concatenate([idx, np.asarray(force, dtype=np.int64)])
    return np.unique(idx)


def _render_curve(state, frame, a: float, n_pts: int, force=()):
    """Render the mapped trace with vertices allocated by image arclength.

    Driver-motion quantiles misallocate the vertex budget when the frame
    compresses the far field (huge capacity steps map to a tiny
    neighborhood of the target endpoint), so a coarse first pass measures
    arclength in the image and a second pass redistributes the budget
    along it.  The allocation metric is spherical, |dz| / (1 + |z|^2), so
    unbounded frames neither starve the unit scale nor drop the apex of
    an outward excursion.  Returns the curve and its vertex step indices.
    """
    dts, dus = state.dts, state.dus
    idx1 = _render_indices(dts, dus, a, max(n_pts // 2, 64), force=force)
    tr1 = trace_from_state(state, sample_idx=idx1)
    pts1 = frame.from_h(tr1.points)
    seg = np.abs(np.diff(pts1))
    mid2 = (0.5 * (np.abs(pts1[1:]) + np.abs(pts1[:-1]))) ** 2
    s = np.concatenate([[0.0], np.cumsum(seg / (1.0 + mid2))])
    if s[-1] <= 0:
        return Curve(times=tr1.times, points=pts1), idx1
    targets = np.linspace(0.0, s[-1], min(n_pts, len(dts)))
    stepf = np.concatenate([[-1.0], idx1.astype(np.float64)])
    pos = np.interp(targets, s, stepf)
    idx2 = np.unique(np.concatenate([
        np.round(pos).astype(np.int64).clip(0, len(dts) - 1),
        np.asarray(force, dtype=np.int64),
        [len(dts) - 1],
    ]))
    tr2 = trace_from_state(state, sample_idx=idx2)
    return Curve(times=tr2.times, points=frame.from_h(tr2.points)), idx2


def _stage2_schedule(t2_abs: float, lam_scale: float, dt0u: float = 1e-3,
                     lamu: float = 0.01) -> np.ndarray:
    """Capacity increments for the continuation: dt grows linearly with
    elapsed capacity, generated on the unit scale of the renormalized
    target and rescaled by lam_scale^2."""
    t_unit = t2_abs / (lam_scale * lam_scale)
    n_est = int(math.log1p(lamu * t_unit / dt0u) / lamu) + 8
    dts = np.empty(n_est)
    t = 0.0
    k = 0
    while t < t_unit:
        if k >= len(dts):
            dts = np.concatenate([dts, np.empty(len(dts))])
        dt = dt0u + lamu * t
        dts[k] = dt
        t += dt
        k += 1
    return dts[:k] * (lam_scale * lam_scale)


def _fib_offsets(n: int) -> np.ndarray:
    out = [0, 1]
    while out[-1] < n:
        out.append(out[-1] + out[-2])
    return np.array(out, dtype=np.int64)


def _sample_twosided_once(cfg, zeta, stop_radius, dt, seed, path_index, n_pts,
                          w_ball, hull_reach, nat_delta, adapt_c, lam, p):
    frame = _Frame(cfg)
    zh, dzh = frame.to_h(zeta)
    # conformal radius transforms exactly by |T'|; drive in half-plane units
    crad_stop_h = 0.25 * stop_radius * abs(dzh)

    res = drive_path(
        kappa=cfg.kappa, seed=seed, path_index=2 * path_index,
        z0_rel=zh, dt0=dt, lam=lam, dt_max=0.05, adapt_c=adapt_c,
        t_max=1e12, crad_stop=crad_stop_h, use_drift=True, record=True,
    )
    if res.status != ST_CRAD_STOP:
        raise NumericalDegeneracyError(
            f"tilted segment ended with status {res.status}, not the stopping radius")

    lam_scale = max(abs(res.z_end), 8.0 * crad_stop_h)
    t2_abs = hull_reach * hull_reach / p.a
    dts2 = _stage2_schedule(t2_abs, lam_scale)
    gen = path_generator(seed, 2 * path_index + 1)
    dus2 = gen.standard_normal(len(dts2)) * np.sqrt(dts2)

    dts = np.concatenate([res.dts, dts2])
    dus = np.concatenate([res.dus, dus2])
    state = LoewnerState(dts=dts, dus=dus, kappa=cfg.kappa, scheme="vertical",
                         u0=0.0)

    n1 = len(res.dts)
    fib = _fib_offsets(max(n1 // 2, 2))
    force = np.concatenate([
        (n1 - 1 - fib)[(n1 - 1 - fib) >= 0],          # handoff approach
        (n1 + fib)[(n1 + fib) <= len(dts) - 1],       # continuation start
    ])
    curve, idx = _render_curve(state, frame, p.a, n_pts, force=force)

    nat = natural_reparam_proxy(curve, p, delta=nat_delta)

    t_hit = first_circle_hit(nat, zeta, stop_radius)
    if math.isnan(t_hit):
        miss = min_distance_to_point(nat.points, zeta)
        raise NumericalDegeneracyError(
            f"rendered trace missed the stopping circle by {miss:.3g}")

    if _finite(cfg.w) and w_ball > 0:
        # truncate at the first entry into the w-ball after the hit
        k = int(np.searchsorted(nat.times, t_hit, side="right"))
        if k < len(nat.times):
            tail = Curve(
                times=np.concatenate([[0.0], nat.times[k:] - t_hit]),
                points=np.concatenate([[nat.at(t_hit)], nat.points[k:]]),
            )
            t_w = first_circle_hit(tail, cfg.w, w_ball)
            if not math.isnan(t_w) and t_w > 0:
                nat = truncate_at_time(nat, t_hit + t_w)

    # +1: trace_from_state prepends the t=0 root point
    pos_in_idx = int(np.searchsorted(idx, n1 - 1)) + 1
    miss = abs(curve.points[pos_in_idx] - zeta)
    return TwoSidedSample(
        curve=nat,
        hit_time=float(t_hit),
        weight=1.0,
        mass=green_config(cfg, zeta, p),
        miss_distance=float(miss),
        connector_gap=0.0,
        stage1_capacity=float(res.t_end),
    )


def sample_twosided(
    cfg: Configuration,
    zeta: complex,
    stop_radius: float | None = None,
    dt: float = 2e-4,
    seed: int = 0,
    *,
    path_index: int = 0,
    n_pts: int = 512,
    w_ball: float = 0.1,
    hull_reach: float = 40.0,
    nat_delta: float | None = None,
    adapt_c: float = 0.04,
    lam: float = 0.004,
) -> TwoSidedSample:
    """Sample one two-sided radial path through zeta in the configuration.

    stop_radius defaults to dist(zeta, boundary)/64 and must stay below a
    quarter of that distance.  w_ball is the truncation radius at the far
    marked point (skipped when w is the point at infinity); hull_reach
    controls how much half-plane scale the continuation accumulates before
    it stops.  One retry with halved step sizes on numerical degeneracy.
    """
    p = GreenParams(cfg.kappa)
    dist = boundary_distance_lower(cfg, zeta)
    if stop_radius is None:
        stop_radius = dist / 64.0
    if not (0 < stop_radius < dist / 4.0):
        raise PreconditionError(
            "stop_radius must lie in (0, dist(zeta, boundary)/4)")
    if _finite(cfg.w) and w_ball > 0 and abs(zeta - cfg.w) <= w_ball:
        raise PreconditionError("zeta inside the w truncation ball")
    try:
        return _sample_twosided_once(cfg, zeta, stop_radius, dt, seed,
                                     path_index, n_pts, w_ball, hull_reach,
                                     nat_delta, adapt_c, lam, p)
    except NumericalDegeneracyError:
        return _sample_twosided_once(cfg, zeta, stop_radius, dt / 2.0, seed,
                                     path_index, 2 * n_pts, w_ball, hull_reach,
                                     nat_delta, adapt_c / 2.0, lam / 2.0, p)


# ---------------------------------------------------------------------------
# reweighted-chordal oracle


def oracle_reweighted(ens, zeta: complex, eps: float, p: GreenParams):
    """Restriction weights 1{dist(gamma, zeta) < eps} * eps^(d-2).

    Pure transform of an existing ensemble; distances are polyline
    distances of the stored traces.  Non-survivors are dropped.
    """
    from .measures import PathEnsemble

    if eps <= 0:
        raise PreconditionError("eps must be positive")
    n = len(ens)
    keep = np.array([min_distance_to_point(c.points, zeta) < eps
                     for c in ens.curves])
    survivors = int(keep.sum())
    if survivors == 0:
        raise EmptyEnsembleError(f"0 of {n} traces passed within eps={eps:g} of zeta")
    w = ens.weights[keep] * eps ** (p.d - 2.0)
    return PathEnsemble(w, tuple(c for c, k in zip(ens.curves, keep) if k))


def wilson_interval(k: float, n: float, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval; accepts effective (non-integer) counts."""
    if n <= 0:
        return 0.0, 1.0
    ph = min(max(k / n, 0.0), 1.0)
    den = 1.0 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(mid - half, 0.0), min(mid + half, 1.0)


def escape_stat(ens, radii, center: complex = 0j) -> list[dict]:
    """Weighted escape frequencies P{max_t |gamma(t) - center| >= r}.

    For a polyline the maximum modulus over each segment is attained at a
    vertex, so the vertex maximum is exact.  Effective sample size drives
    the Wilson intervals for weighted ensembles.
    """
    w = ens.weights
    total = w.sum()
    if total <= 0:
        raise EmptyEnsembleError("escape statistics need positive total weight")
    maxmod = np.array([np.abs(c.points - center).max() for c in ens.curves])
    n_eff = float(total * total / (w * w).sum())
    out = []
    for r in radii:
        hit = maxmod >= r
        phat = float(w[hit].sum() / total)
        lo, hi = wilson_interval(phat * n_eff, n_eff)
        out.append({"r": float(r), "p": phat, "lo": lo, "hi": hi, "n_eff": n_eff})
    return out


def escape_slope(stats: list[dict]) -> float:
    """Least-squares slope of log p against log r over nonzero rungs."""
    rs = np.array([s["r"] for s in stats if s["p"] > 0])
    ps = np.array([s["p"] for s in stats if s["p"] > 0])
    if len(rs) < 2:
        raise NumericalDegeneracyError("need at least two nonzero escape rungs")
    return float(np.polyfit(np.log(rs), np.log(ps), 1)[0])


# ---------------------------------------------------------------------------
# Radon-Nikodym comparisons


@dataclass(frozen=True)
class RnReport:
    ok: bool
    spread: float
    bins: np.ndarray
    mass_a: np.ndarray
    mass_b: np.ndarray
    message: str


def rn_comparison(ens_a, ens_b, n_bins: int = 8, min_frac: float = 0.02) -> RnReport:
    """Binned log-likelihood-ratio spread over a scalar curve feature (log
    duration).  Bins too thin on either side trip the overlap diagnostic
    instead of inflating the spread."""
    fa = np.log([c.duration for c in ens_a.curves])
    fb = np.log([c.duration for c in ens_b.curves])
    wa = ens_a.weights / ens_a.total_mass
    wb = ens_b.weights / ens_b.total_mass
    edges = np.quantile(np.concatenate([fa, fb]), np.linspace(0, 1, n_bins + 1))
    edges[0] -= 1e-9
    edges[-1] += 1e-9
    ma = np.histogram(fa, bins=edges, weights=wa)[0]
    mb = np.histogram(fb, bins=edges, weights=wb)[0]
    thin = (ma < min_frac) | (mb < min_frac)
    if thin.all():
        return RnReport(False, math.inf, edges, ma, mb,
                        "no bin has enough mass on both sides")
    spread = float(np.abs(np.log(ma[~thin] / mb[~thin])).max())
    ok = not thin.any() or float(ma[thin].sum() + mb[thin].sum()) < 0.2
    msg = "" if ok else "sparse bins hold nontrivial mass; spread unreliable"
    return RnReport(bool(ok), spread, edges, ma, mb, msg)


def tmass_log_ratio(cfg: Configuration, q: Region, zeta: complex,
                    p: GreenParams | None = None, n: int = 48) -> float:
    """log of (integral of G over the rectangle Q) / (G(zeta) * area(Q)),
    by Gauss-Legendre quadrature.  The exact total-mass side of the
    comparison estimates; no sampling involved."""
    if q.kind != "rect":
        raise PreconditionError("total-mass comparison expects a rectangle")
    if p is None:
        p = GreenParams(cfg.kappa)
    xn, xw = np.polynomial.legendre.leggauss(n)
    xs = 0.5 * (xn + 1) * (q.x1 - q.x0) + q.x0
    ys = 0.5 * (xn + 1) * (q.y1 - q.y0) + q.y0
    wx = 0.5 * (q.x1 - q.x0) * xw
    wy = 0.5 * (q.y1 - q.y0) * xw
    coef = _normalizer(*_marked_images(cfg))
    Z = (xs[:, None] + 1j * ys[None, :]).ravel()
    W, dW = _base_map_grid(cfg, Z)
    if np.any(W.imag <= 0):
        raise PreconditionError("quadrature rectangle leaves the domain")
    T = _mobius(coef, W)
    dT = _mobius_deriv(coef, W) * dW
    vals = np.abs(dT) ** (2.0 - p.d) * green_halfplane(T, p)
    integral = float((vals.reshape(n, n) * wx[:, None] * wy[None, :]).sum())
    area = (q.x1 - q.x0) * (q.y1 - q.y0)
    return math.log(integral / (green_config(cfg, zeta, p) * area))


# ---------------------------------------------------------------------------
# martingale scan along undrifted paths


@njit(cache=True)
def _mart_kernel(xi, dt, ck_steps, zx, zy, a, d, fouram1, crad_floor, im_floor):
    Z = complex(zx, zy)
    logder = 0.0
    out = np.empty(len(ck_steps))
    frozen = False
    m = 0.0
    ptr = 0
    log_floor = math.log(crad_floor)
    for i in range(xi.shape[0]):
        if not frozen:
            y = Z.imag
            r = math.hypot(Z.real, Z.imag)
            m = math.exp((2.0 - d) * logder) * y ** (d - 2.0) * (y / r) ** fouram1
            if math.log(2.0 * y) - logder <= log_floor:
                frozen = True
        while ptr < len(ck_steps) and i == ck_steps[ptr]:
            out[ptr] = m
            ptr += 1
        if not frozen:
            du = math.sqrt(dt) * xi[i]
            Z2, dlog, ok = _forward_step(Z, a, dt, du, False, im_floor)
            if not ok:
                frozen = True
            else:
                Z = Z2
                logder += dlog
    while ptr < len(ck_steps):
        out[ptr] = m
        ptr += 1
    return out


def martingale_scan(kappa: float, zeta: complex = 1j, n_paths: int = 5000,
                    t_checks=None, dt: float = 2.5e-4, seed: int = 0,
                    crad_floor: float = 0.05) -> dict:
    """Empirical mean of the stopped martingale M at checkpoint times.

    Paths are undrifted chordal; M freezes once the conformal radius of
    zeta drops below crad_floor (the stopped process is still a
    martingale, and freezing bounds the variance).
    """
    p = GreenParams(kappa)
    if t_checks is None:
        t_checks = np.linspace(0.2, 2.0, 10)
    t_checks = np.asarray(t_checks, dtype=float)
    n_steps = int(math.ceil(t_checks[-1] / dt)) + 1
    ck_steps = np.minimum((t_checks / dt).astype(np.int64), n_steps - 1)
    vals = np.empty((n_paths, len(t_checks)))
    for i in range(n_paths):
        xi = path_generator(seed, i).standard_normal(n_steps)
        vals[i] = _mart_kernel(xi, dt, ck_steps, zeta.real, zeta.imag,
                               p.a, p.d, p.fouram1, crad_floor, SWALLOW_IM_FLOOR)
    means = vals.mean(axis=0)
    stderrs = vals.std(axis=0, ddof=1) / math.sqrt(n_paths)
    m0 = green_halfplane(zeta, p)
    return {
        "t": t_checks,
        "mean": means,
        "stderr": stderrs,
        "m0": float(m0),
        "max_sigmas": float(np.max(np.abs(means - m0) / stderrs)),
    }


# ---------------------------------------------------------------------------
# exact boundary distance via the welding chain


def _weld_min(dts, dus, a, zeta: complex, x_c: float, y_scale: float,
              n0: int = 11, rounds: int = 3, u0: float = 0.0,
              tilted: bool = False) -> float:
    """min over real x of |f(x) - zeta| where f inverts the final hull map.

    Tangent-grid scan around the target ray's landing point, then local
    grid refinement.  Each round is one batched sweep of the chain.
    """
    cand = x_c + y_scale * np.tan(np.linspace(-1.53, 1.53, n0))
    best = math.inf
    for _ in range(rounds + 1):
        img = _weld_batch(dts, dus, u0, a, tilted, cand.astype(np.complex128))
        dd = np.abs(img - zeta)
        b = int(np.argmin(dd))
        if dd[b] < best:
            best = float(dd[b])
        lo = cand[max(b - 1, 0)]
        hi = cand[min(b + 1, len(cand) - 1)]
        if hi <= lo:
            break
        cand = np.linspace(lo, hi, 7)[1:-1]
    return best


def boundary_distance(state: LoewnerState, zeta: complex) -> float:
    """dist(zeta, boundary of the slit domain) at the end of the chain.

    Exact up to the candidate-grid resolution (a few percent of the
    answer); the Koebe sandwich dist in [crad/4, crad] is the caller's
    validity check.
    """
    Z, _, _, ok = _track_kernel(
        state.dts, state.dus, zeta - state.u0, state.a,
        state.scheme == "tilted", SWALLOW_IM_FLOOR, state.duration)
    if not ok:
        return 0.0  # swallowed at solver resolution: on the boundary
    u_end = state.u0 + float(np.sum(state.dus))
    return _weld_min(state.dts, state.dus, state.a, zeta,
                     u_end + Z.real, Z.imag, u0=state.u0,
                     tilted=state.scheme == "tilted")


# ---------------------------------------------------------------------------
# multi-point chordal hitting survey


@njit(cache=True)
def _survey_kernel(xi, t0, Zx, Zy, logder, minlc, done, stop_step, tailq,
                   mstop, floors, g_ref, a, d, fouram1, dt0, adapt_c, eta,
                   t_cap, im_floor, rec_dts, rec_dus, pos0):
    """Drive one shared chordal path, tracking several interior points.

    A point freezes when its conformal radius falls below its floor
    (certain hit at every rung) or when the relative conditional hit mass
    q = crad^(d-2) sin^(4a-1) / G drops to eta; the caller completes the
    remaining mass analytically from mstop.  Returns (code, consumed,
    pos, t): 0 noise exhausted, 1 all points frozen, 2 capacity cap.
    """
    t = t0
    pos = pos0
    k = Zx.shape[0]
    consumed = 0
    n = xi.shape[0]
    while consumed < n:
        if t >= t_cap:
            return 2, consumed, pos, t
        dt = dt0
        for j in range(k):
            if done[j] == 0:
                yj = Zy[j]
                ld = logder[j] if logder[j] < 300.0 else 300.0
                ch = 0.5 * floors[j] * math.exp(ld)
                m2 = yj * yj
                c2 = ch * ch
                cap = adapt_c * (m2 if m2 > c2 else c2)
                if cap < dt:
                    dt = cap
        du = math.sqrt(dt) * xi[consumed]
        consumed += 1
        rec_dts[pos] = dt
        rec_dus[pos] = du
        pos += 1
        t += dt
        alldone = True
        for j in range(k):
            if done[j] == 1:
                continue
            Z0 = complex(Zx[j], Zy[j])
            Z1, dlog, ok = _forward_step(Z0, a, dt, du, False, im_floor)
            if not ok:
                done[j] = 1
                minlc[j] = math.log(0.5 * floors[j])
                stop_step[j] = pos
                tailq[j] = 0.0
                mstop[j] = 0.0
                continue
            logder[j] += dlog
            Zx[j] = Z1.real
            Zy[j] = Z1.imag
            lc = math.log(2.0 * Z1.imag) - logder[j]
            if lc < minlc[j]:
                minlc[j] = lc
            if lc <= math.log(floors[j]):
                done[j] = 1
                stop_step[j] = pos
                tailq[j] = 0.0
                mstop[j] = 0.0
                continue
            sinth = Z1.imag / math.hypot(Z1.real, Z1.imag)
            m = math.exp((2.0 - d) * logder[j]) * Z1.imag ** (d - 2.0) \
                * sinth ** fouram1
            q = math.exp((d - 2.0) * lc) * sinth ** fouram1 / g_ref[j]
            if q <= eta:
                done[j] = 1
                stop_step[j] = pos
                tailq[j] = q
                mstop[j] = m
            else:
                alldone = False
        if alldone:
            return 1, consumed, pos, t
    return 0, consumed, pos, t


def chordal_point_survey(
    kappa: float,
    zetas,
    n_paths: int,
    seed: int,
    *,
    ladders=None,
    dt0: float = 1e-4,
    adapt_c: float = 0.05,
    eta: float = 0.03,
    t_cap: float = 256.0,
    max_steps: int = 4_000_000,
    weld_fraction: float = 1.0,
    block: int = 32768,
) -> dict:
    """Hitting indicators 1{dist(gamma, zeta_j) < eps} over chordal paths,
    all points sharing each driver.

    Per path and point, conformal-radius tracking settles most rungs via
    the Koebe sandwich (crad <= eps: hit; crad >= 4 eps: miss); the
    factor-4 window in between is resolved by the exact welded boundary
    distance on the recorded chain prefix.  Each point stops at its own
    time tau_j; the returned per-path martingale values mstop complete
    the infinite-time tail analytically (see one_point_fit).

    weld_fraction < 1 resolves only that fraction of ambiguous paths and
    reweights the resolutions unbiasedly.
    """
    zetas = np.asarray(zetas, dtype=np.complex128)
    k = len(zetas)
    if np.any(zetas.imag <= 0):
        raise PreconditionError("survey points must be interior (Im > 0)")
    if ladders is None:
        ladders = zetas.imag[:, None] * np.array([1 / 8, 1 / 16, 1 / 32])
    ladders = np.asarray(ladders, dtype=float)
    if ladders.shape[0] != k:
        raise PreconditionError("one ladder per point")
    m = ladders.shape[1]
    if np.any(np.diff(ladders, axis=1) >= 0) or np.any(ladders <= 0):
        raise PreconditionError("ladders must be positive and decreasing")
    if np.any(ladders[:, 0] > zetas.imag / 4.0):
        raise PreconditionError("coarsest rung must stay below Im zeta / 4")
    if not 0 < weld_fraction <= 1:
        raise PreconditionError("weld_fraction must be in (0, 1]")
    p = GreenParams(kappa)
    g_ref = np.array([green_halfplane(z, p) for z in zetas])
    floors = ladders[:, -1] / 4.0

    ind = np.zeros((n_paths, k, m), dtype=np.float32)
    mcorr = np.zeros((n_paths, k))
    tailq_out = np.zeros((n_paths, k))
    crad_out = np.zeros((n_paths, k))
    rec_dts = np.zeros(1 << 17)
    rec_dus = np.zeros(1 << 17)
    Zx = np.empty(k)
    Zy = np.empty(k)
    logder = np.empty(k)
    minlc = np.empty(k)
    done = np.empty(k, dtype=np.int8)
    stop_step = np.empty(k, dtype=np.int64)
    tailq = np.empty(k)
    mstop = np.empty(k)
    n_welded = 0
    n_flags = 0
    n_capped = 0
    steps_total = 0
    weld_gen = np.random.Generator(np.random.Philox(
        key=np.array([spawn_seed(seed, "survey-weld"), 0], dtype=np.uint64)))

    for i in range(n_paths):
        gen = path_generator(seed, i)
        Zx[:] = zetas.real
        Zy[:] = zetas.imag
        logder[:] = 0.0
        minlc[:] = np.log(2.0 * zetas.imag)
        done[:] = 0
        stop_step[:] = 0
        tailq[:] = 1.0
        mstop[:] = g_ref
        t = 0.0
        pos = 0
        code = 0
        while True:
            if pos + block > len(rec_dts):
                rec_dts = np.concatenate([rec_dts, np.zeros(len(rec_dts))])
                rec_dus = np.concatenate([rec_dus, np.zeros(len(rec_dus))])
            xi = gen.standard_normal(block)
            code, consumed, pos, t = _survey_kernel(
                xi, t, Zx, Zy, logder, minlc, done, stop_step, tailq, mstop,
                floors, g_ref, p.a, p.d, p.fouram1, dt0, adapt_c, eta, t_cap,
                SWALLOW_IM_FLOOR, rec_dts, rec_dus, pos)
            if code != 0:
                break
            if pos >= max_steps:
                code = 2
                break
        steps_total += pos
        if code == 2:
            n_capped += 1
            for j in range(k):
                if done[j] == 0:  # finalize at the cap
                    done[j] = 1
                    stop_step[j] = pos
                    sinth = Zy[j] / math.hypot(Zx[j], Zy[j])
                    lc = math.log(2.0 * Zy[j]) - logder[j]
                    tailq[j] = math.exp((p.d - 2.0) * lc) \
                        * sinth ** p.fouram1 / g_ref[j]
                    mstop[j] = math.exp((2.0 - p.d) * logder[j]) \
                        * Zy[j] ** (p.d - 2.0) * sinth ** p.fouram1

        mcorr[i] = mstop
        tailq_out[i] = tailq
        crad_m = np.exp(minlc)
        crad_out[i] = crad_m
        need_weld = []
        for j in range(k):
            for r in range(m):
                eps = ladders[j, r]
                if crad_m[j] <= eps:
                    ind[i, j, r] = 1.0
                elif crad_m[j] >= 4.0 * eps:
                    ind[i, j, r] = 0.0
                else:
                    ind[i, j, r] = 0.5
                    if j not in need_weld:
                        need_weld.append(j)
        if need_weld:
            do_weld = weld_fraction >= 1.0 or weld_gen.random() < weld_fraction
            if do_weld:
                n_welded += 1
                u_cum = np.cumsum(rec_dus[:pos])
                for j in need_weld:
                    s = stop_step[j]
                    x_c = u_cum[s - 1] + Zx[j]
                    dist = _weld_min(rec_dts[:s], rec_dus[:s], p.a, zetas[j],
                                     x_c, Zy[j])
                    if not (0.2 * crad_m[j] <= dist <= 1.05 * crad_m[j]):
                        dist2 = _weld_min(rec_dts[:s], rec_dus[:s], p.a,
                                          zetas[j], x_c, 6.0 * Zy[j], n0=21)
                        dist = min(dist, dist2)
                        if not (0.2 * crad_m[j] <= dist <= 1.05 * crad_m[j]):
                            n_flags += 1
                    for r in range(m):
                        eps = ladders[j, r]
                        if eps < crad_m[j] < 4.0 * eps:
                            hit = 1.0 if dist < eps else 0.0
                            # unbiased under subsampled resolution
                            ind[i, j, r] = 0.5 + (hit - 0.5) / weld_fraction
    return {
        "kappa": kappa,
        "zetas": zetas,
        "ladders": ladders,
        "indicators": ind,
        "mstop": mcorr,
        "tailq": tailq_out,
        "min_crad": crad_out,
        "eta": eta,
        "n_welded": n_welded,
        "n_flags": n_flags,
        "n_capped": n_capped,
        "steps_total": steps_total,
    }


def one_point_fit(survey: dict) -> dict:
    """Fit the single proportionality constant of the hitting estimates.

    Each stopped path contributes eps^(d-2) * indicator plus the analytic
    completion c * (1 - indicator) * M_tau for the mass beyond its
    stopping time, so the model reads  v_jr = c * (G_j - m_jr)  with
    v the stopped estimate and m the completion average.  Returns the
    fitted c, per-cell ratios, relative spread, and the adjacent-rung
    ladder gaps in combined-stderr units (paired per path).
    """
    p = GreenParams(survey["kappa"])
    ladders = survey["ladders"]
    ind = survey["indicators"].astype(np.float64)
    mstop = survey["mstop"]
    g = np.array([green_halfplane(z, p) for z in survey["zetas"]])
    n = ind.shape[0]
    scale = ladders ** (p.d - 2.0)  # (k, m)
    v = scale[None, :, :] * ind  # per-path stopped estimate
    w = (1.0 - ind) * mstop[:, :, None]  # completion mass per path
    v_bar = v.mean(axis=0)
    m_bar = w.mean(axis=0)
    target = g[:, None] - m_bar
    c = float((v_bar * target).sum() / (target * target).sum())
    ratios = v_bar / (c * target)
    full = v + c * w  # per-path completed estimate
    stderr = full.std(axis=0, ddof=1) / math.sqrt(n)
    diffs = full[:, :, :-1] - full[:, :, 1:]
    gap_sigmas = np.abs(diffs.mean(axis=0)) / (diffs.std(axis=0, ddof=1)
                                               / math.sqrt(n))
    return {
        "c": c,
        "ratios": ratios,
        "spread": float(np.abs(ratios - 1.0).max()),
        "values": full.mean(axis=0),
        "stderr": stderr,
        "gap_sigmas": gap_sigmas,
        "mean_tailq": float(survey["tailq"].mean()),
    }


# ---------------------------------------------------------------------------
# near-point rendering for oracle replays


@njit(cache=True)
def _crad_cut_index(dts, dus, zx, zy, a, thresh, im_floor):
    """First step index at which crad(zeta) drops below thresh (len if never)."""
    Z = complex(zx, zy)
    logder = 0.0
    n = dts.shape[0]
    logt = math.log(thresh)
    for i in range(n):
        Z, dlog, ok = _forward_step(Z, a, dts[i], dus[i], False, im_floor)
        if not ok:
            return i
        logder += dlog
        if math.log(2.0 * Z.imag) - logder <= logt:
            return i
    return n


def render_near_point(
    kappa: float,
    zeta: complex,
    seed: int,
    path_index: int,
    *,
    stop_crad: float,
    render_crad: float | None = None,
    dt0: float = 1e-4,
    adapt_c: float = 0.05,
    n_pts: int = 768,
    use_drift: bool = False,
    lam: float = 0.0,
) -> tuple[Curve, LoewnerState] | None:
    """Drive one path to the crad floor and render it up to the step where
    crad(zeta) first falls below render_crad; the later portion only
    wiggles below the resolution of interest.  None if the floor is never
    reached."""
    res = drive_path(
        kappa=kappa, seed=seed, path_index=path_index, z0_rel=zeta,
        dt0=dt0, lam=lam, dt_max=max(dt0, 0.05 if lam > 0 else dt0),
        adapt_c=adapt_c, t_max=1e12, crad_stop=stop_crad,
        use_drift=use_drift, record=True,
    )
    if res.status != ST_CRAD_STOP:
        return None
    st = LoewnerState(dts=res.dts, dus=res.dus, kappa=kappa,
                      scheme="vertical", u0=0.0)
    if render_crad is None:
        cut = len(res.dts)
    else:
        cut = int(_crad_cut_index(res.dts, res.dus, zeta.real, zeta.imag,
                                  st.a, render_crad, SWALLOW_IM_FLOOR))
    cut = max(min(cut, len(res.dts)), 2)
    idx = _render_indices(res.dts[:cut], res.dus[:cut], st.a, n_pts)
    return trace_from_state(st, sample_idx=idx), st
