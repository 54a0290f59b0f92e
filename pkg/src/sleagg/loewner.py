"""Chordal Loewner solver.

Convention (recorded in every sidecar): capacity parametrization

    d/dt g_t(z) = a / (g_t(z) - U_t),   a = 2/kappa,

with U a standard Brownian motion (unit quadratic variation).  The
half-plane capacity of the hull at time t is a*t.

Discretization: the driver is piecewise constant per step; each step is
realized by an elementary slit map.  Two schemes:

* "tilted": the step map absorbs both the capacity increment a*dt and the
  driver displacement du as a straight slit at angle alpha*pi,
      f(w) = u + (w - u - q)^alpha (w - u + p)^(1-alpha),
  with (1-alpha) p = alpha q,  alpha q^2/(1-alpha) = 2 a dt,
  q (1-2 alpha)/(1-alpha) = du.  f is the welding (inverse) direction;
  the forward map is inverted by Newton with the vertical-slit seed.
* "vertical": f(w) = u + sqrt((w-u)^2 - 2 a dt), forward
  h(z) = u + sqrt((z-u)^2 + 2 a dt), with the displacement applied as a
  driver jump.  Cheaper; used as the bulk fallback.

Both schemes agree exactly on zero-displacement steps, and the tilted
scheme reproduces straight rays driven by c*sqrt(t) exactly.

Traces are reconstructed by composing the welding maps:
gamma(t_i) = f_1 o ... o f_i (U(t_i)), evaluated for a set of sample
indices in one descending sweep so the whole polyline costs
O(n_steps * n_samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .curves import Curve, first_circle_hit
from .errors import NumericalDegeneracyError, PreconditionError, SwallowedPointError
from .rng import path_generator

__all__ = [
    "SWALLOW_IM_FLOOR",
    "DrivingPath",
    "LoewnerState",
    "DriveResult",
    "sample_chordal",
    "drive_path",
    "trace_from_state",
    "map_point",
    "map_derivative",
    "weld_points",
    "hitting_time",
    "hcap_estimate",
]

SWALLOW_IM_FLOOR = 1e-12  # imaginary part below this counts as swallowed

# status codes shared by the driving kernel
ST_TMAX = 0
ST_CRAD_STOP = 1
ST_TAIL = 2
ST_SWALLOWED = 3
ST_EXHAUSTED = 4


@dataclass(frozen=True)
class DrivingPath:
    """Driver samples on a uniform capacity grid: U(k*dt), k = 0..n."""

    values: np.ndarray
    dt: float
    kappa: float

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if v.ndim != 1 or v.shape[0] < 2:
            raise PreconditionError("driving path needs at least two samples")
        if self.dt <= 0:
            raise PreconditionError(f"dt must be > 0, got {self.dt}")
        if not (0 < self.kappa <= 4):
            raise PreconditionError(f"kappa must be in (0, 4], got {self.kappa}")
        object.__setattr__(self, "values", v)

    @property
    def a(self) -> float:
        return 2.0 / self.kappa


@dataclass(frozen=True)
class LoewnerState:
    """Per-step slit parameters: capacity increments and driver displacements."""

    dts: np.ndarray
    dus: np.ndarray
    kappa: float
    scheme: str = "tilted"
    u0: float = 0.0

    def __post_init__(self):
        dts = np.ascontiguousarray(np.asarray(self.dts, dtype=np.float64))
        dus = np.ascontiguousarray(np.asarray(self.dus, dtype=np.float64))
        if dts.shape != dus.shape or dts.ndim != 1:
            raise PreconditionError("dts and dus must be 1-d arrays of equal length")
        if np.any(dts < 0):
            raise PreconditionError("capacity increments must be >= 0")
        if self.scheme not in ("tilted", "vertical"):
            raise PreconditionError(f"unknown scheme {self.scheme!r}")
        if not (0 < self.kappa <= 4):
            raise PreconditionError(f"kappa must be in (0, 4], got {self.kappa}")
        object.__setattr__(self, "dts", dts)
        object.__setattr__(self, "dus", dus)

    @classmethod
    def from_driving_path(cls, dp: DrivingPath, scheme: str = "tilted") -> "LoewnerState":
        return cls(
            dts=np.full(dp.values.shape[0] - 1, dp.dt),
            dus=np.diff(dp.values),
            kappa=dp.kappa,
            scheme=scheme,
            u0=float(dp.values[0]),
        )

    @property
    def a(self) -> float:
        return 2.0 / self.kappa

    @property
    def n_steps(self) -> int:
        return int(self.dts.shape[0])

    @property
    def duration(self) -> float:
        return float(self.dts.sum())

    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.dts)])

    def driver_values(self) -> np.ndarray:
        return self.u0 + np.concatenate([[0.0], np.cumsum(self.dus)])


# ---------------------------------------------------------------------------
# elementary step maps


@njit(cache=True, inline="always")
def _branch_up(v: np.complex128, ref_re: float) -> np.complex128:
    # sqrt branch with image in the closed upper half-plane; on the real
    # axis the sign follows the reference real part.
    s = np.sqrt(v)
    if s.imag < 0.0:
        return -s
    if s.imag == 0.0 and ref_re < 0.0:
        return -s
    return s


@njit(cache=True, inline="always")
def _tilt_params(a: float, dt: float, du: float):
    rho = du * du / (2.0 * a * dt)
    r = math.sqrt(rho / (4.0 + rho))
    if du > 0.0:
        alpha = 0.5 - 0.5 * r
    else:
        alpha = 0.5 + 0.5 * r
    if alpha < 1e-9:
        alpha = 1e-9
    elif alpha > 1.0 - 1e-9:
        alpha = 1.0 - 1e-9
    q = math.sqrt(2.0 * a * dt * (1.0 - alpha) / alpha)
    p = math.sqrt(2.0 * a * dt * alpha / (1.0 - alpha))
    return alpha, p, q


@njit(cache=True, inline="always")
def _weld_apply(wrel: np.complex128, a: float, dt: float, du: float, tilted: bool) -> np.complex128:
    # welding map relative to the slit base: H -> H minus slit
    if dt <= 0.0:
        return wrel
    if tilted:
        alpha, p, q = _tilt_params(a, dt, du)
        r = np.exp(alpha * np.log(wrel - q) + (1.0 - alpha) * np.log(wrel + p))
        # a log-branch flip conjugates the output (real coefficients); an
        # interior orbit must stay in H, so reflect back instead of letting
        # the point escape along the axis
        if r.imag < 0.0:
            r = np.conj(r)
        return r
    return _branch_up(wrel * wrel - 2.0 * a * dt, wrel.real)


@njit(cache=True, inline="always")
def _forward_step(Z: np.complex128, a: float, dt: float, du: float, tilted: bool,
                  im_floor: float):
    """One forward step.  Z is relative to the pre-step driver.

    Returns (Z_new relative to post-step driver, dlog|g'|, ok).
    """
    if dt <= 0.0:
        return Z - du, 0.0, True
    if tilted:
        alpha, p, q = _tilt_params(a, dt, du)
        # Newton for F(w) = Z with F(w) = (w - q)^alpha (w + p)^(1 - alpha)
        if Z.real * Z.real + Z.imag * Z.imag > 400.0 * a * dt:
            w = Z + a * dt / Z
        else:
            w = _branch_up(Z * Z + 2.0 * a * dt, Z.real)
            if w.imag < 1e-300:
                w = w + 1e-150j
        ok = False
        scale = abs(Z) + math.sqrt(2.0 * a * dt)
        F = w
        Fp = 1.0 + 0.0j
        for _ in range(24):
            fq = w - q
            fp = w + p
            F = np.exp(alpha * np.log(fq) + (1.0 - alpha) * np.log(fp))
            diff = F - Z
            Fp = F * (alpha / fq + (1.0 - alpha) / fp)
            if abs(diff) <= 1e-13 * scale:
                ok = True
                break
            step = diff / Fp
            wn = w - step
            damp = 0
            while wn.imag <= 0.0 and damp < 8:
                step *= 0.5
                wn = w - step
                damp += 1
            if wn.imag <= 0.0:
                break
            w = wn
        if not ok or w.imag <= im_floor:
            return w - du, 0.0, False
        dlog = -math.log(abs(Fp))
        return w - du, dlog, True
    omega = _branch_up(Z * Z + 2.0 * a * dt, Z.real)
    if omega.imag <= im_floor:
        return omega - du, 0.0, False
    dlog = math.log(abs(Z)) - math.log(abs(omega))
    return omega - du, dlog, True


# ---------------------------------------------------------------------------
# forward tracking and trace reconstruction


@njit(cache=True)
def _track_kernel(dts, dus, zrel0: np.complex128, a: float, tilted: bool,
                  im_floor: float, t_stop: float):
    """Track one point through the composed forward maps up to capacity t_stop.

    zrel0 is z - u0.  A final partial step is taken if t_stop falls inside
    a step (the driver displacement is split proportionally to sqrt(dt),
    matching Brownian scaling).  Returns (Z_rel_end, log|g'|, t_reached, ok).
    """
    Z = zrel0
    logder = 0.0
    t = 0.0
    n = dts.shape[0]
    for i in range(n):
        dt = dts[i]
        du = dus[i]
        if t_stop - t <= 0.0:
            break
        if dt > t_stop - t + 1e-15 * max(t_stop, 1.0):
            frac = (t_stop - t) / dt
            dt = t_stop - t
            du = du * math.sqrt(frac)
        Z, dlog, ok = _forward_step(Z, a, dt, du, tilted, im_floor)
        if not ok:
            return Z, logder, t, False
        logder += dlog
        t += dt
        if t >= t_stop:
            break
    return Z, logder, t, True


@njit(cache=True)
def _trace_sweep(dts, dus, u0: float, a: float, tilted: bool, sample_idx):
    """gamma(t_{i+1}) for each sample index i, by one descending sweep."""
    n = dts.shape[0]
    m = sample_idx.shape[0]
    out = np.empty(m, dtype=np.complex128)
    # driver value before each step
    u_pre = np.empty(n, dtype=np.float64)
    acc = u0
    for i in range(n):
        u_pre[i] = acc
        acc += dus[i]
    ptr = m
    for i in range(n - 1, -1, -1):
        while ptr > 0 and sample_idx[ptr - 1] == i:
            ptr -= 1
            out[ptr] = u_pre[i] + dus[i] + 0.0j
        if dts[i] > 0.0:
            u = u_pre[i]
            for j in range(ptr, m):
                out[j] = u + _weld_apply(out[j] - u, a, dts[i], dus[i], tilted)
    return out


@njit(cache=True)
def _weld_batch(dts, dus, u0: float, a: float, tilted: bool, w):
    """Apply the full inverse map g_n^{-1} = f_0 o ... o f_{n-1} to a batch
    of points (boundary points included)."""
    n = dts.shape[0]
    out = w.copy()
    u_pre = np.empty(n, dtype=np.float64)
    acc = u0
    for i in range(n):
        u_pre[i] = acc
        acc += dus[i]
    for i in range(n - 1, -1, -1):
        if dts[i] > 0.0:
            u = u_pre[i]
            for j in range(out.shape[0]):
                out[j] = u + _weld_apply(out[j] - u, a, dts[i], dus[i], tilted)
    return out


def weld_points(state: "LoewnerState", w_values: np.ndarray) -> np.ndarray:
    """Image of points under the inverse of the final hull map.

    Real inputs land on the hull boundary (or the real axis); interior
    points of H land in the complement of the hull.
    """
    w = np.ascontiguousarray(np.asarray(w_values, dtype=np.complex128))
    return _weld_batch(state.dts, state.dus, state.u0, state.a,
                       state.scheme == "tilted", w)


@njit(cache=True)
def _drive_kernel(
    normals,
    start: int,
    state,  # float64[8]: t, Zre, Zim, logder, min_logcrad, dt_prev, calls, pad
    a: float,
    fouram1: float,
    use_drift: bool,
    dt0: float,
    lam: float,
    dt_max: float,
    adapt_c: float,
    t_max: float,
    crad_stop: float,
    eps_fine: float,
    tail_tol: float,
    d_minus_2: float,
    im_floor: float,
    rec_dts,
    rec_dus,
    rec_pos: int,
    record: bool,
):
    """Resumable driving loop.  Consumes normals[start:], returns
    (status, consumed, rec_pos, tail_bound).  State is updated in place.
    """
    t = state[0]
    Z = complex(state[1], state[2])
    logder = state[3]
    min_logcrad = state[4]
    nn = normals.shape[0]
    k = start
    log_tail = -1e300
    while True:
        r2 = Z.real * Z.real + Z.imag * Z.imag
        y = Z.imag
        logcrad = math.log(2.0) + math.log(y) - logder
        if logcrad < min_logcrad:
            min_logcrad = logcrad
        if crad_stop > 0.0 and logcrad <= math.log(crad_stop):
            state[0] = t; state[1] = Z.real; state[2] = Z.imag
            state[3] = logder; state[4] = min_logcrad
            return ST_CRAD_STOP, k - start, rec_pos, 0.0
        if tail_tol > 0.0:
            sin_t = y / math.sqrt(r2)
            log_tail = (-d_minus_2) * (math.log(eps_fine) - logcrad) \
                + fouram1 * math.log(sin_t)
            if log_tail < math.log(tail_tol):
                state[0] = t; state[1] = Z.real; state[2] = Z.imag
                state[3] = logder; state[4] = min_logcrad
                return ST_TAIL, k - start, rec_pos, math.exp(log_tail)
        if t >= t_max:
            state[0] = t; state[1] = Z.real; state[2] = Z.imag
            state[3] = logder; state[4] = min_logcrad
            return ST_TMAX, k - start, rec_pos, math.exp(log_tail) if tail_tol > 0.0 else 0.0
        if k >= nn:
            state[0] = t; state[1] = Z.real; state[2] = Z.imag
            state[3] = logder; state[4] = min_logcrad
            return ST_EXHAUSTED, k - start, rec_pos, 0.0
        dt = dt0 + lam * t
        if dt > dt_max:
            dt = dt_max
        if adapt_c > 0.0:
            refine = True
            if eps_fine > 0.0 and logcrad < math.log(eps_fine) + math.log(0.2):
                refine = False
            if refine:
                dta = adapt_c * y * y
                if dta < dt:
                    dt = dta
        if t + dt > t_max:
            dt = t_max - t
        if dt < 1e-12:
            dt = 1e-12
        b = fouram1 * Z.real / r2 if use_drift else 0.0
        du = b * dt + math.sqrt(dt) * normals[k]
        k += 1
        Z, dlog, ok = _forward_step(Z, a, dt, du, False, im_floor)
        if record:
            rec_dts[rec_pos] = dt
            rec_dus[rec_pos] = du
            rec_pos += 1
        logder += dlog
        t += dt
        if not ok:
            state[0] = t; state[1] = Z.real; state[2] = Z.imag
            state[3] = logder; state[4] = min_logcrad
            return ST_SWALLOWED, k - start, rec_pos, 0.0


@dataclass
class DriveResult:
    status: int
    t_end: float
    z_end: complex
    logder: float
    min_crad: float
    tail_bound: float
    dts: np.ndarray | None = None
    dus: np.ndarray | None = None
    steps: int = 0


def drive_path(
    *,
    kappa: float,
    seed: int,
    path_index: int,
    z0_rel: complex,
    dt0: float,
    lam: float = 0.0,
    dt_max: float | None = None,
    adapt_c: float = 0.0,
    t_max: float = 1.0,
    crad_stop: float = 0.0,
    eps_fine: float = 0.0,
    tail_tol: float = 0.0,
    use_drift: bool = False,
    record: bool = False,
    block: int = 8192,
    max_steps: int = 5_000_000,
) -> DriveResult:
    """Drive one path with the adaptive step rule; see `_drive_kernel`.

    The driver noise comes from the (seed, path_index) stream, one normal
    per step, so a recorded re-run reproduces the identical path.
    """
    a = 2.0 / kappa
    fouram1 = 4.0 * a - 1.0
    d_minus_2 = kappa / 8.0 - 1.0  # d - 2 = kappa/8 - 1
    if dt_max is None:
        dt_max = dt0 if lam == 0.0 else 1.0
    if z0_rel.imag <= 0:
        raise PreconditionError("z0_rel must lie in the open upper half-plane")
    if tail_tol > 0.0 and eps_fine <= 0.0:
        raise PreconditionError("tail_tol requires a positive eps_fine scale")
    gen = path_generator(seed, path_index)
    state = np.zeros(8)
    state[1] = z0_rel.real
    state[2] = z0_rel.imag
    state[4] = math.log(2.0 * z0_rel.imag)
    rec_dts_parts = []
    rec_dus_parts = []
    steps = 0
    status = ST_EXHAUSTED
    tail = 0.0
    while True:
        normals = gen.standard_normal(block)
        if record:
            rdts = np.empty(block)
            rdus = np.empty(block)
        else:
            rdts = np.empty(1)
            rdus = np.empty(1)
        status, consumed, rec_pos, tail = _drive_kernel(
            normals, 0, state, a, fouram1, use_drift, dt0, lam, dt_max,
            adapt_c, t_max, crad_stop, eps_fine, tail_tol, d_minus_2,
            SWALLOW_IM_FLOOR, rdts, rdus, 0, record,
        )
        steps += consumed
        if record and rec_pos:
            rec_dts_parts.append(rdts[:rec_pos].copy())
            rec_dus_parts.append(rdus[:rec_pos].copy())
        if status != ST_EXHAUSTED:
            break
        if steps >= max_steps:
            raise NumericalDegeneracyError(
                f"driving loop exceeded {max_steps} steps (path {path_index})"
            )
    return DriveResult(
        status=status,
        t_end=float(state[0]),
        z_end=complex(state[1], state[2]),
        logder=float(state[3]),
        min_crad=float(math.exp(state[4])),
        tail_bound=float(tail),
        dts=np.concatenate(rec_dts_parts) if record and rec_dts_parts else (np.zeros(0) if record else None),
        dus=np.concatenate(rec_dus_parts) if record and rec_dus_parts else (np.zeros(0) if record else None),
        steps=steps,
    )


# ---------------------------------------------------------------------------
# public operations


def trace_from_state(state: LoewnerState, n_pts: int = 512,
                     sample_idx: np.ndarray | None = None) -> Curve:
    """Polyline of the trace at a subset of step boundaries (plus t = 0)."""
    n = state.n_steps
    if n == 0:
        return Curve(times=np.zeros(1), points=np.array([state.u0 + 0j]))
    if sample_idx is None:
        m = min(max(2, n_pts), n)
        sample_idx = np.unique(np.round(np.linspace(0, n - 1, m)).astype(np.int64))
    else:
        sample_idx = np.unique(np.asarray(sample_idx, dtype=np.int64))
        if sample_idx[0] < 0 or sample_idx[-1] >= n:
            raise PreconditionError("sample_idx out of range")
    pts = _trace_sweep(state.dts, state.dus, state.u0, state.a,
                       state.scheme == "tilted", sample_idx)
    times = np.cumsum(state.dts)[sample_idx]
    return Curve(
        times=np.concatenate([[0.0], times]),
        points=np.concatenate([[state.u0 + 0j], pts]),
    )


def map_point(state: LoewnerState, z: complex, t: float | None = None) -> complex:
    """g_t(z) for an interior point z; raises if z is (numerically) swallowed."""
    if t is None:
        t = state.duration
    if t < 0 or t > state.duration + 1e-12:
        raise PreconditionError(f"t={t} outside [0, {state.duration}]")
    if z.imag <= 0:
        raise PreconditionError("map_point expects an interior point (Im z > 0)")
    Z, logder, t_reach, ok = _track_kernel(
        state.dts, state.dus, z - state.u0, state.a,
        state.scheme == "tilted", SWALLOW_IM_FLOOR, t,
    )
    if not ok:
        raise SwallowedPointError(t_reach)
    # Z is relative to the driver at the reached time
    u_end = _driver_at(state, t)
    return complex(Z) + u_end


def map_derivative(state: LoewnerState, z: complex, t: float | None = None) -> float:
    """|g_t'(z)| for an interior point z."""
    if t is None:
        t = state.duration
    if z.imag <= 0:
        raise PreconditionError("map_derivative expects an interior point")
    Z, logder, t_reach, ok = _track_kernel(
        state.dts, state.dus, z - state.u0, state.a,
        state.scheme == "tilted", SWALLOW_IM_FLOOR, t,
    )
    if not ok:
        raise SwallowedPointError(t_reach)
    return float(math.exp(logder))


def _driver_at(state: LoewnerState, t: float) -> float:
    times = state.times()
    vals = state.driver_values()
    k = int(np.searchsorted(times, t, side="right")) - 1
    k = max(0, min(k, state.n_steps - 1))
    if t >= times[-1]:
        return float(vals[-1])
    # inside step k: driver interpolated by Brownian scaling of the increment
    span = times[k + 1] - times[k]
    if span <= 0:
        return float(vals[k])
    frac = (t - times[k]) / span
    return float(vals[k] + state.dus[k] * math.sqrt(frac))


def hitting_time(trace: Curve, center: complex, radius: float) -> float:
    """First capacity time the trace meets the closed disk; nan if never."""
    return first_circle_hit(trace, center, radius)


def hcap_estimate(state: LoewnerState, y_ref: float = 1e3) -> float:
    """Half-plane capacity from the large-z expansion g(iy) ~ iy + hcap/(iy).

    y_ref trades expansion truncation (~hcap^2/y^2) against roundoff: the
    per-step capacity increment must stay above the ulp of y^2, so very
    large y silently flushes the whole estimate to zero.
    """
    g = map_point(state, complex(state.u0, y_ref))
    return float((((g - state.u0) - 1j * y_ref) * (1j * y_ref)).real)


def sample_chordal(
    kappa: float,
    t_max: float,
    dt: float = 1e-4,
    seed: int = 0,
    *,
    path_index: int = 0,
    scheme: str = "tilted",
    driver: str | DrivingPath = "bm",
    n_pts: int = 512,
    u0: float = 0.0,
) -> tuple[Curve, LoewnerState]:
    """Chordal trace from u0 toward infinity in the upper half-plane.

    driver: "bm" (Brownian, from the (seed, path_index) stream), "zero"
    (deterministic U = u0, the closed-form test hook), or an explicit
    DrivingPath.  Returns the capacity-parametrized polyline and the state.
    """
    if not (0 < kappa <= 4):
        raise PreconditionError(f"kappa must be in (0, 4], got {kappa}")
    if t_max <= 0 or dt <= 0:
        raise PreconditionError("t_max and dt must be > 0")
    if dt >= t_max:
        raise PreconditionError(f"dt={dt} must be below t_max={t_max}")
    if isinstance(driver, DrivingPath):
        st = LoewnerState.from_driving_path(driver, scheme=scheme)
    else:
        n = int(np.ceil(t_max / dt - 1e-9))
        dts = np.full(n, dt)
        dts[-1] = t_max - dt * (n - 1)
        if driver == "zero":
            dus = np.zeros(n)
        elif driver == "bm":
            gen = path_generator(seed, path_index)
            dus = gen.standard_normal(n) * np.sqrt(dts)
        else:
            raise PreconditionError(f"unknown driver {driver!r}")
        st = LoewnerState(dts=dts, dus=dus, kappa=kappa, scheme=scheme, u0=u0)
    return trace_from_state(st, n_pts=n_pts), st
