"""Riemann-sum aggregation of interior-point measures, and its verification.

The aggregate nu assembles, over a square partition of the domain, the
per-cell measures A(Q) * G(zeta_Q) * (empirical two-sided law through
zeta_Q).  The comparison law is chordal SLE biased by the natural time it
spends in the same cell union, so both sides estimate the integral of the
disintegration over exactly the same region and the Radon-Nikodym claim
reduces to a distance between two normalized ensembles at matched
bookkeeping.

Cells fall into three groups: interior cells sampled as above, cells that
touch or come within a safety margin of the boundary (mass bookkept by
quadrature, never sampled), and cells inside the excision balls around
the marked endpoints.  The margin scales like the square root of the
mesh; at the literal square root of the mesh diagonal the coarsest usable
grids hold no interior cells at all, so the default is
sqrt(mesh * diam) / 4, exposed as a parameter for sensitivity runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .content import Region, natural_reparam_proxy, theta_in_set
from .curves import (Curve, CurveMetricKind, first_circle_hit, thin_curve,
                     truncate_at_time)
from .errors import (
    EmptyEnsembleError,
    NumericalDegeneracyError,
    PreconditionError,
)
from .green import (
    Configuration,
    GreenParams,
    _finite,
    _marked_images,
    _mobius,
    _mobius_deriv,
    _normalizer,
    boundary_distance_lower,
    disk_green_mass,
    disk_to_halfplane,
    disk_to_halfplane_deriv,
    green_config,
    green_halfplane,
)
from .loewner import LoewnerState
from .measures import PartitionSpec, PathEnsemble, mixture, prokhorov
from .rng import path_generator, spawn_seed
from .twosided import _Frame, _render_curve, _stage2_schedule, sample_twosided

__all__ = [
    "AggregateReport",
    "length_biased_chordal",
    "riemann_aggregate",
    "verify_lengthbias",
    "theta_moment_scan",
    "theta_in_cells",
    "classify_cells",
    "green_disk_grid",
    "cell_green_mass",
    "truncation_mass",
    "CELL_INTERIOR",
    "CELL_BOUNDARY",
    "CELL_EXCISED",
    "CELL_OUTSIDE",
]

CELL_INTERIOR = 0
CELL_BOUNDARY = 1
CELL_EXCISED = 2
CELL_OUTSIDE = 3


@dataclass(frozen=True)
class AggregateReport:
    """Per-mesh comparison of the aggregate against length-biased chordal."""

    kappa: float
    mesh_ladder: tuple
    distances: tuple
    distance_cis: tuple
    mass_nu: tuple
    mass_biased: tuple
    mass_ratios: tuple
    c_cal: float
    trend_ok: bool
    i_counts: tuple
    j_counts: tuple
    excised_counts: tuple
    boundary_masses: tuple
    excised_masses: tuple
    deficit_masses: tuple
    failure_counts: tuple
    truncation: tuple  # (r, s, t)
    j_margins: tuple
    incomplete: bool = False
    schema: str = "agg-v1"
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if np.any(np.diff(self.mesh_ladder) >= 0):
            raise PreconditionError("mesh ladder must be decreasing")
        if any(d < 0 for d in self.distances):
            raise PreconditionError("distances must be nonnegative")

    def to_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, tuple):
                out[k] = [x.tolist() if isinstance(x, np.ndarray) else x for x in v]
            else:
                out[k] = v
        return out


# ---------------------------------------------------------------------------
# vectorized Green evaluation on the disk


def green_disk_grid(cfg: Configuration, Z: np.ndarray,
                    p: GreenParams | None = None) -> np.ndarray:
    """G over an array of strictly interior disk points."""
    if cfg.kind != "disk":
        raise PreconditionError("grid evaluation expects a disk configuration")
    if p is None:
        p = GreenParams(cfg.kappa)
    W = disk_to_halfplane(Z)
    dW = disk_to_halfplane_deriv(Z)
    coef = _normalizer(*_marked_images(cfg))
    T = _mobius(coef, W)
    dT = _mobius_deriv(coef, W) * dW
    return np.abs(dT) ** (2.0 - p.d) * green_halfplane(T, p)


def cell_green_mass(cfg: Configuration, cell, p: GreenParams | None = None,
                    sub: int = 8) -> float:
    """Midpoint quadrature of G over (cell intersect disk), sub^2 points."""
    x0, x1, y0, y1 = cell
    xs = x0 + (np.arange(sub) + 0.5) * (x1 - x0) / sub
    ys = y0 + (np.arange(sub) + 0.5) * (y1 - y0) / sub
    Z = (xs[:, None] + 1j * ys[None, :]).ravel()
    inside = np.abs(Z) < 1.0 - 1e-9
    if not inside.any():
        return 0.0
    vals = green_disk_grid(cfg, Z[inside], p)
    da = (x1 - x0) * (y1 - y0) / (sub * sub)
    return float(vals.sum() * da)


def truncation_mass(cfg: Configuration, s: float, t: float,
                    p: GreenParams | None = None) -> float:
    """Quadrature of G over the excision balls B(z, s) and B(w, t)."""
    total = disk_green_mass(cfg, p)
    kept = disk_green_mass(cfg, p, s_z=s, s_w=t)
    return max(total - kept, 0.0)


# ---------------------------------------------------------------------------
# partition classification


def _rect_point_dist(cell, q: complex) -> float:
    dx = max(cell[0] - q.real, 0.0, q.real - cell[1])
    dy = max(cell[2] - q.imag, 0.0, q.imag - cell[3])
    return math.hypot(dx, dy)


def classify_cells(cfg: Configuration, spec: PartitionSpec,
                   j_margin: float | None = None, s_trunc: float = 0.1,
                   t_trunc: float = 0.1):
    """Label each partition cell interior / boundary / excised / outside.

    Interior means fully inside the disk with dist(cell, boundary) at
    least the margin and clear of both excision balls; those are the
    cells the aggregate samples.
    """
    if cfg.kind != "disk":
        raise PreconditionError("aggregation needs a bounded disk configuration")
    diam = 2.0
    if j_margin is None:
        j_margin = math.sqrt(spec.mesh * diam) / 4.0
    cells = spec.cells()
    labels = np.empty(len(cells), dtype=np.int64)
    for k, cell in enumerate(cells):
        x0, x1, y0, y1 = cell
        corners = np.array([x0 + 1j * y0, x1 + 1j * y0, x0 + 1j * y1, x1 + 1j * y1])
        r_max = float(np.abs(corners).max())
        if _rect_point_dist(cell, 0j) >= 1.0:
            labels[k] = CELL_OUTSIDE
        elif r_max >= 1.0 or 1.0 - r_max < j_margin:
            labels[k] = CELL_BOUNDARY
        elif (_rect_point_dist(cell, cfg.z) < s_trunc
              or _rect_point_dist(cell, cfg.w) < t_trunc):
            labels[k] = CELL_EXCISED
        else:
            labels[k] = CELL_INTERIOR
    return cells, labels, j_margin


def theta_in_cells(trace_nat: Curve, cells) -> float:
    """Natural time the trace spends in a union of disjoint rectangles."""
    total = 0.0
    for cell in cells:
        total += theta_in_set(trace_nat, Region.rect(*cell))
    return total


# ---------------------------------------------------------------------------
# length-biased chordal sampler


def length_biased_chordal(
    cfg: Configuration,
    n: int,
    dt: float = 2e-4,
    seed: int = 0,
    *,
    n_pts: int = 512,
    hull_reach: float = 40.0,
    w_ball: float = 0.1,
    nat_delta: float | None = None,
    lamu: float = 0.01,
    p: GreenParams | None = None,
) -> PathEnsemble:
    """Chordal SLE traces z -> w with atom weight = natural duration.

    Each trace is rendered from a fixed capacity schedule (step growing
    linearly in elapsed capacity), mapped into the domain, naturally
    reparametrized, and truncated at its first entry into B(w, w_ball).
    The total capacity guarantees the half-plane trace exits the scale
    that the w-ball pulls back to, so the truncation fires.
    """
    if n < 1:
        raise PreconditionError("need n >= 1")
    if p is None:
        p = GreenParams(cfg.kappa)
    frame = _Frame(cfg)
    t_abs = hull_reach * hull_reach / p.a
    dts = _stage2_schedule(t_abs, 1.0, dt0u=dt, lamu=lamu)
    sq = np.sqrt(dts)
    weights = np.empty(n)
    curves = []
    for i in range(n):
        gen = path_generator(seed, i)
        dus = gen.standard_normal(len(dts)) * sq
        st = LoewnerState(dts=dts, dus=dus, kappa=cfg.kappa,
                          scheme="vertical", u0=0.0)
        curve, _ = _render_curve(st, frame, p.a, n_pts)
        nat = natural_reparam_proxy(curve, p, delta=nat_delta)
        if _finite(cfg.w) and w_ball > 0:
            t_w = first_circle_hit(nat, cfg.w, w_ball)
            if not math.isnan(t_w) and t_w > 0:
                nat = truncate_at_time(nat, t_w)
        weights[i] = nat.duration
        curves.append(nat)
    return PathEnsemble(weights, tuple(curves))


# ---------------------------------------------------------------------------
# the aggregate


def riemann_aggregate(
    cfg: Configuration,
    spec: PartitionSpec,
    n_per_cell: int,
    seed: int,
    *,
    j_margin: float | None = None,
    s_trunc: float = 0.1,
    t_trunc: float = 0.1,
    cap: int = 100_000,
    p: GreenParams | None = None,
    progress: bool = False,
    **sampler_kwargs,
) -> tuple[PathEnsemble, dict]:
    """Mixture sum over interior cells of A(Q) * G(zeta_Q) * empirical law.

    Boundary-adjacent and excised cells contribute mass bookkeeping only
    (quadrature), per the margin policy in the module docstring.  A cell
    whose sampler fails on every path is skipped with its mass recorded
    as deficit.
    """
    if n_per_cell < 1:
        raise PreconditionError("need a positive per-cell budget")
    if p is None:
        p = GreenParams(cfg.kappa)
    cells, labels, margin = classify_cells(cfg, spec, j_margin, s_trunc, t_trunc)
    pts = spec.sample_points(cells)
    comps = []
    masses = []
    i_cells = []
    failures = 0
    deficit = 0.0
    skipped = []
    for k in range(len(cells)):
        if labels[k] != CELL_INTERIOR:
            continue
        cell = cells[k]
        zeta = complex(pts[k])
        area = (cell[1] - cell[0]) * (cell[3] - cell[2])
        g_q = green_config(cfg, zeta, p)
        cseed = spawn_seed(seed, f"cell-{k}")
        collected = []
        for i in range(n_per_cell):
            try:
                s = sample_twosided(cfg, zeta, seed=cseed, path_index=i,
                                    **sampler_kwargs)
            except NumericalDegeneracyError:
                failures += 1
                continue
            collected.append(s.curve)
        if not collected:
            deficit += area * g_q
            skipped.append(k)
            continue
        i_cells.append(cell)
        comps.append(PathEnsemble(np.ones(len(collected)), tuple(collected)))
        masses.append(area * g_q)
        if progress:
            print(f"  cell {k}: {len(collected)}/{n_per_cell} at {zeta:.3f}",
                  flush=True)
    ens, resampled = mixture(comps, masses, cap=cap,
                             seed=spawn_seed(seed, "merge"))
    b_mass = sum(cell_green_mass(cfg, c, p)
                 for c, l in zip(cells, labels) if l == CELL_BOUNDARY)
    e_mass = sum(cell_green_mass(cfg, c, p)
                 for c, l in zip(cells, labels) if l == CELL_EXCISED)
    book = {
        "i_cells": np.array(i_cells) if i_cells else np.zeros((0, 4)),
        "j_margin": margin,
        "counts": {
            "interior": int((labels == CELL_INTERIOR).sum()),
            "boundary": int((labels == CELL_BOUNDARY).sum()),
            "excised": int((labels == CELL_EXCISED).sum()),
            "outside": int((labels == CELL_OUTSIDE).sum()),
        },
        "boundary_mass": b_mass,
        "excised_mass": e_mass,
        "deficit_mass": deficit,
        "failures": failures,
        "skipped_cells": skipped,
        "resampled": resampled,
        "nu_mass": ens.total_mass,
    }
    return ens, book


# ---------------------------------------------------------------------------
# headline verification


def verify_lengthbias(
    cfg: Configuration,
    meshes=(0.5, 0.25, 0.125),
    n_per_cell: int = 500,
    chordal_n: int = 5000,
    seed: int = 0,
    *,
    resample_atoms: int = 2500,
    metric_pts: int = 160,
    nat_delta: float | None = None,
    w_ball: float = 0.1,
    rule: str = "center",
    j_margin: float | None = None,
    s_trunc: float = 0.1,
    t_trunc: float = 0.1,
    cal_n: int | None = None,
    max_seconds: float | None = None,
    progress: bool = False,
    sampler_kwargs: dict | None = None,
) -> AggregateReport:
    """Aggregate vs length-biased chordal across a mesh ladder.

    The chordal ensemble is sampled once; per mesh its weights become the
    natural time spent in that mesh's interior-cell union, so both sides
    carry identical truncation bookkeeping.  The duration-to-Green clock
    constant is calibrated on an independent chordal run against
    quadrature over a central disk.  Distances are normalized Prokhorov
    (d_D atoms) on seeded resamples; the CI per mesh is the spread of two
    independent resample pairs.
    """
    meshes = tuple(float(h) for h in meshes)
    if len(meshes) < 1 or np.any(np.diff(meshes) >= 0):
        raise PreconditionError("mesh ladder must be decreasing")
    p = GreenParams(cfg.kappa)
    if nat_delta is None:
        nat_delta = 2.0 / 128.0
    if cal_n is None:
        cal_n = max(chordal_n // 2, 500)
    if sampler_kwargs is None:
        sampler_kwargs = {}
    t_start = time.monotonic()
    notes = []

    chordal = length_biased_chordal(cfg, chordal_n, seed=spawn_seed(seed, "chordal"),
                                    nat_delta=nat_delta, w_ball=w_ball, p=p)
    cal = length_biased_chordal(cfg, cal_n, seed=spawn_seed(seed, "calib"),
                                nat_delta=nat_delta, w_ball=w_ball, p=p)
    cal_rho = 0.6
    cal_theta = np.array([theta_in_set(c, Region.disk(0j, cal_rho))
                          for c in cal.curves])
    cal_quad = disk_green_mass(cfg, p, rho_max=cal_rho)
    c_cal = float(cal_theta.mean() / cal_quad)
    if c_cal <= 0:
        raise NumericalDegeneracyError("calibration produced a nonpositive clock rate")

    distances = []
    cis = []
    mass_nu = []
    mass_biased = []
    ratios = []
    i_counts = []
    j_counts = []
    e_counts = []
    b_masses = []
    e_masses = []
    deficits = []
    fails = []
    margins = []
    incomplete = False

    for k, h in enumerate(meshes):
        if max_seconds is not None and time.monotonic() - t_start > max_seconds:
            incomplete = True
            notes.append(f"stopped before mesh {h}: budget exhausted")
            break
        spec = PartitionSpec(rect=(-1.0, 1.0, -1.0, 1.0), mesh=h, rule=rule,
                             seed=spawn_seed(seed, f"grid-{k}"))
        nu, book = riemann_aggregate(
            cfg, spec, n_per_cell, spawn_seed(seed, f"mesh-{k}"),
            j_margin=j_margin, s_trunc=s_trunc, t_trunc=t_trunc, p=p,
            progress=progress, nat_delta=nat_delta, w_ball=w_ball,
            **sampler_kwargs)
        if len(nu) == 0:
            raise EmptyEnsembleError(f"no interior-cell samples at mesh {h}")
        theta_w = np.array([theta_in_cells(c, book["i_cells"])
                            for c in chordal.curves])
        if theta_w.sum() <= 0:
            raise EmptyEnsembleError(
                f"chordal traces never enter the interior cells at mesh {h}")
        visit = theta_w > 0
        biased = PathEnsemble(theta_w[visit],
                              tuple(c for c, v in zip(chordal.curves, visit) if v))
        pair = []
        for rep in range(2):
            sa = spawn_seed(seed, f"rs-nu-{k}-{rep}")
            sb = spawn_seed(seed, f"rs-ch-{k}-{rep}")
            ra = nu.resampled(resample_atoms, sa).normalized()
            rb = biased.resampled(resample_atoms, sb).normalized()
            # alignment cost is quadratic in vertex count; thin for the
            # metric only, durations and weights untouched
            ra = PathEnsemble(ra.weights, tuple(thin_curve(c, metric_pts)
                                                for c in ra.curves))
            rb = PathEnsemble(rb.weights, tuple(thin_curve(c, metric_pts)
                                                for c in rb.curves))
            da = prokhorov(ra, rb, CurveMetricKind.DD_UPPER)
            pair.append(da)
        dist = 0.5 * (pair[0] + pair[1])
        ci = max(abs(pair[0] - pair[1]), 0.005)
        ebias = float(theta_w.mean() / c_cal)
        distances.append(dist)
        cis.append(ci)
        mass_nu.append(float(nu.total_mass))
        mass_biased.append(ebias)
        ratios.append(float(nu.total_mass / ebias))
        i_counts.append(book["counts"]["interior"])
        j_counts.append(book["counts"]["boundary"])
        e_counts.append(book["counts"]["excised"])
        b_masses.append(book["boundary_mass"])
        e_masses.append(book["excised_mass"])
        deficits.append(book["deficit_mass"])
        fails.append(book["failures"])
        margins.append(book["j_margin"])
        if book["skipped_cells"]:
            incomplete = True
            notes.append(f"mesh {h}: skipped cells {book['skipped_cells']}")
        if progress:
            print(f"mesh {h}: dist {dist:.4f} +- {ci:.4f}, "
                  f"mass ratio {ratios[-1]:.3f}", flush=True)

    trend_ok = all(
        distances[k + 1] <= distances[k] + cis[k] + cis[k + 1]
        for k in range(len(distances) - 1)
    )
    return AggregateReport(
        kappa=cfg.kappa,
        mesh_ladder=tuple(meshes[:len(distances)]),
        distances=tuple(distances),
        distance_cis=tuple(cis),
        mass_nu=tuple(mass_nu),
        mass_biased=tuple(mass_biased),
        mass_ratios=tuple(ratios),
        c_cal=c_cal,
        trend_ok=trend_ok,
        i_counts=tuple(i_counts),
        j_counts=tuple(j_counts),
        excised_counts=tuple(e_counts),
        boundary_masses=tuple(b_masses),
        excised_masses=tuple(e_masses),
        deficit_masses=tuple(deficits),
        failure_counts=tuple(fails),
        truncation=(1.0, s_trunc, t_trunc),
        j_margins=tuple(margins),
        incomplete=incomplete,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# content moment scaling


def theta_moment_scan(
    cfg: Configuration,
    center: complex = 0j,
    diams=(0.3, 0.15, 0.075),
    n: int = 3000,
    seed: int = 0,
    *,
    nat_delta: float | None = None,
    chordal: PathEnsemble | None = None,
    sampler_kwargs: dict | None = None,
) -> dict:
    """Mean natural time in squares U of decreasing diameter, both laws.

    Law one: two-sided radial through the square's center.  Law two:
    chordal biased by its own time in U (weighted mean = second moment
    over first).  Both scale like diam^d; the clock normalization cancels
    in the log-log slopes.
    """
    diams = np.sort(np.asarray(diams, dtype=float))[::-1]
    dist = boundary_distance_lower(cfg, center)
    if dist < 3.0 * diams[0]:
        raise PreconditionError(
            "separation violated: need dist(center, boundary) >= 3 * max diam")
    p = GreenParams(cfg.kappa)
    if nat_delta is None:
        nat_delta = float(diams[-1]) / 16.0
    if sampler_kwargs is None:
        sampler_kwargs = {}
    regions = [Region.square(center, side=dm / math.sqrt(2.0)) for dm in diams]

    ts_theta = np.zeros((n, len(diams)))
    got = 0
    for i in range(n):
        try:
            s = sample_twosided(cfg, center, seed=spawn_seed(seed, "ts"),
                                path_index=i, nat_delta=nat_delta,
                                **sampler_kwargs)
        except NumericalDegeneracyError:
            continue
        for k, reg in enumerate(regions):
            ts_theta[got, k] = theta_in_set(s.curve, reg)
        got += 1
    if got < n // 2:
        raise NumericalDegeneracyError(f"only {got}/{n} two-sided samples usable")
    ts_theta = ts_theta[:got]

    if chordal is None:
        chordal = length_biased_chordal(cfg, n, seed=spawn_seed(seed, "ch"),
                                        nat_delta=nat_delta, p=p,
                                        **sampler_kwargs)
    ch_theta = np.array([[theta_in_set(c, reg) for reg in regions]
                         for c in chordal.curves])

    mean_ts = ts_theta.mean(axis=0)
    num = (ch_theta * ch_theta).sum(axis=0)
    den = ch_theta.sum(axis=0)
    if np.any(den <= 0) or np.any(mean_ts <= 0):
        raise NumericalDegeneracyError("a square was never visited; enlarge n")
    mean_ch = num / den
    ld = np.log(diams)
    slope_ts = float(np.polyfit(ld, np.log(mean_ts), 1)[0])
    slope_ch = float(np.polyfit(ld, np.log(mean_ch), 1)[0])
    return {
        "diams": diams,
        "twosided_mean": mean_ts,
        "chordal_weighted_mean": mean_ch,
        "slope_twosided": slope_ts,
        "slope_chordal": slope_ch,
        "d": p.d,
        "n_twosided": got,
    }
