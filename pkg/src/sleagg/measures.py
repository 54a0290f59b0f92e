"""Finite measures on curve space and the Prokhorov metric.

A measure is a weighted family of sampled curves (atoms).  The Prokhorov
distance between two atomic measures is computed exactly: the defining
pair of thickened-set inequalities

    mu(B) <= nu(B^eps) + eps   and   nu(B) <= mu(B^eps) + eps

reduces, for atoms, to a bipartite feasibility problem.  With F(eps) the
maximum flow through edges {(i, j): d(x_i, y_j) <= eps} capped by the atom
weights, both inequalities hold iff max(|mu|, |nu|) - F(eps) <= eps, and
the minimizing eps is found by a monotone search over the sorted pairwise
distances (the deficiency is piecewise constant between them).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .curves import Curve, CurveMetricKind, pairwise_distances
from .errors import EmptyEnsembleError, PreconditionError
from .rng import spawn_seed

__all__ = [
    "PathEnsemble",
    "PartitionSpec",
    "RESAMPLE_CAP",
    "prokhorov",
    "dist_ds",
    "riemann_sum",
    "mixture",
    "systematic_resample",
    "total_mass_bounds_check",
    "weighted_average_identity_check",
]

RESAMPLE_CAP = 100_000  # mixture atoms beyond this are systematically resampled


@dataclass(frozen=True)
class PathEnsemble:
    """Finite positive measure on curve space, given by weighted atoms."""

    weights: np.ndarray
    curves: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.shape[0] != len(self.curves):
            raise PreconditionError("weights and curves must have equal length")
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise PreconditionError("weights must be finite and strictly positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "curves", tuple(self.curves))

    def __len__(self) -> int:
        return len(self.curves)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def normalized(self) -> "PathEnsemble":
        m = self.total_mass
        if m <= 0:
            raise EmptyEnsembleError("cannot normalize a zero-mass ensemble")
        return PathEnsemble(self.weights / m, self.curves)

    def scaled(self, factor: float) -> "PathEnsemble":
        if factor < 0:
            raise PreconditionError(f"scale factor must be >= 0, got {factor}")
        return PathEnsemble(self.weights * factor, self.curves)

    def resampled(self, n: int, seed: int) -> "PathEnsemble":
        """Systematic resampling to n equally weighted atoms (mass preserved)."""
        if self.total_mass <= 0:
            raise EmptyEnsembleError("cannot resample a zero-mass ensemble")
        idx = systematic_resample(self.weights, n, seed)
        w = np.full(n, self.total_mass / n)
        return PathEnsemble(w, tuple(self.curves[i] for i in idx))


def systematic_resample(weights: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Systematic (low-variance) resampling; returns n atom indices."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if total <= 0 or n < 1:
        raise PreconditionError("need positive total weight and n >= 1")
    rng = np.random.Generator(np.random.Philox(key=np.array([seed, 0x5259], dtype=np.uint64)))
    u0 = rng.random()
    targets = (u0 + np.arange(n)) / n * total
    cum = np.cumsum(w)
    return np.searchsorted(cum, targets, side="left").clip(0, w.shape[0] - 1)


def mixture(ensembles, mix_weights, cap: int = RESAMPLE_CAP, seed: int = 0):
    """Weighted sum of ensembles.

    Each component is rescaled to contribute mass mix_weights[i] (its atoms
    reweighted proportionally).  If the union exceeds `cap` atoms it is
    systematically resampled down and the flag in the returned tuple is set.
    """
    mw = np.asarray(mix_weights, dtype=np.float64)
    if len(ensembles) != mw.shape[0]:
        raise PreconditionError("ensembles/mix_weights length mismatch")
    weights = []
    curves = []
    for ens, target in zip(ensembles, mw):
        if target < 0:
            raise PreconditionError("mixture weights must be >= 0")
        if target == 0 or len(ens) == 0:
            continue
        m = ens.total_mass
        if m <= 0:
            raise EmptyEnsembleError("zero-mass component with positive mixture weight")
        weights.append(ens.weights * (target / m))
        curves.extend(ens.curves)
    if not weights:
        return PathEnsemble(np.zeros(0), ()), False
    out = PathEnsemble(np.concatenate(weights), tuple(curves))
    if len(out) > cap:
        return out.resampled(cap, spawn_seed(seed, "mixture-cap")), True
    return out, False


# ---------------------------------------------------------------------------
# Prokhorov metric


def _feasible_deficiency(dmat, w, v, thr, scale):
    """max(|mu|,|nu|) - maxflow over edges with distance <= thr, in mass units."""
    na, nb = dmat.shape
    src = 0
    sink = na + nb + 1
    rows = [np.full(na, src), np.arange(1, na + 1)]
    cols = [np.arange(1, na + 1), np.full(na, sink)]
    # placeholder, replaced below; build arrays for all edge groups at once
    ii, jj = np.nonzero(dmat <= thr)
    wi = np.round(w * scale).astype(np.int64)
    vi = np.round(v * scale).astype(np.int64)
    big = np.int64(wi.sum() + vi.sum() + 1)
    rows = np.concatenate([np.zeros(na, np.int64), 1 + ii, 1 + na + np.arange(nb)])
    cols = np.concatenate([1 + np.arange(na), 1 + na + jj, np.full(nb, sink, np.int64)])
    caps = np.concatenate([wi, np.full(ii.shape[0], big), vi])
    graph = csr_matrix((caps, (rows, cols)), shape=(sink + 1, sink + 1))
    flow = maximum_flow(graph, src, sink).flow_value
    return max(wi.sum(), vi.sum()) / scale - flow / scale


def prokhorov(mu: PathEnsemble, nu: PathEnsemble, kind: CurveMetricKind = CurveMetricKind.DD_UPPER,
              refine: int = 4) -> float:
    """Prokhorov distance between two atomic curve measures (exact).

    Works for finite measures of unequal mass via the two one-sided
    inequalities; for probability measures this is the classical metric.
    """
    mm, mn = mu.total_mass, nu.total_mass
    big = max(mm, mn)
    if big == 0:
        return 0.0
    if len(mu) == 0 or mm == 0 or len(nu) == 0 or mn == 0:
        return big
    dmat = pairwise_distances(list(mu.curves), list(nu.curves), kind, refine=refine)
    # scipy's maximum_flow overflows silently past int32; keep every capacity,
    # including the sum+1 bypass edges, under 2**31.
    scale = float(2**29) / max(big, 1e-300)
    dvals = np.unique(dmat)
    # smallest k with deficiency(dvals[k]) <= dvals[k]; monotone predicate
    lo, hi = 0, dvals.shape[0] - 1
    def_cache: dict[int, float] = {}

    def deficiency(k: int) -> float:
        if k not in def_cache:
            def_cache[k] = _feasible_deficiency(dmat, mu.weights, nu.weights, dvals[k], scale)
        return def_cache[k]

    if deficiency(hi) > dvals[hi]:
        return float(deficiency(hi))
    while lo < hi:
        mid = (lo + hi) // 2
        if deficiency(mid) <= dvals[mid]:
            hi = mid
        else:
            lo = mid + 1
    k = lo
    best = float(dvals[k])
    if k > 0:
        cand = deficiency(k - 1)
        if cand < best:
            best = float(cand)
    else:
        # eps below the smallest pairwise distance: no edges, deficiency = big
        if big < best:
            best = float(big)
    return best


def dist_ds(mu: PathEnsemble, nu: PathEnsemble,
            kind: CurveMetricKind = CurveMetricKind.DD_UPPER) -> float:
    """Mass-log gap plus Prokhorov distance of the normalized measures."""
    if mu.total_mass <= 0 or nu.total_mass <= 0:
        raise EmptyEnsembleError("dist_ds needs two measures of positive mass")
    return abs(np.log(mu.total_mass / nu.total_mass)) + prokhorov(
        mu.normalized(), nu.normalized(), kind
    )


# ---------------------------------------------------------------------------
# partitions and Riemann sums


@dataclass(frozen=True)
class PartitionSpec:
    """Axis-aligned square partition of a rectangle.

    mesh is the target cell diagonal; cells are squares of side
    mesh/sqrt(2) laid from the lower-left corner, the final row/column
    clipped to the rectangle.  rule picks the evaluation point.
    """

    rect: tuple  # (x0, x1, y0, y1)
    mesh: float
    rule: str = "center"  # center | corner | random
    seed: int = 0

    def __post_init__(self):
        x0, x1, y0, y1 = self.rect
        if not (x1 > x0 and y1 > y0):
            raise PreconditionError(f"degenerate rectangle {self.rect}")
        if self.mesh <= 0:
            raise PreconditionError(f"mesh must be > 0, got {self.mesh}")
        if self.rule not in ("center", "corner", "random"):
            raise PreconditionError(f"unknown rule {self.rule!r}")

    @property
    def side(self) -> float:
        return self.mesh / np.sqrt(2.0)

    def cells(self) -> np.ndarray:
        """(n, 4) array of cell rectangles (x0, x1, y0, y1)."""
        x0, x1, y0, y1 = self.rect
        s = self.side
        nx = int(np.ceil((x1 - x0) / s - 1e-12))
        ny = int(np.ceil((y1 - y0) / s - 1e-12))
        out = np.empty((nx * ny, 4))
        k = 0
        for iy in range(ny):
            cy0 = y0 + iy * s
            cy1 = min(cy0 + s, y1)
            for ix in range(nx):
                cx0 = x0 + ix * s
                cx1 = min(cx0 + s, x1)
                out[k] = (cx0, cx1, cy0, cy1)
                k += 1
        return out

    def sample_points(self, cells: np.ndarray) -> np.ndarray:
        """One evaluation point per cell, per the configured rule."""
        if self.rule == "center":
            return 0.5 * (cells[:, 0] + cells[:, 1]) + 0.5j * (cells[:, 2] + cells[:, 3])
        if self.rule == "corner":
            return cells[:, 0] + 1j * cells[:, 2]
        rng = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, 0x504152], dtype=np.uint64))
        )
        u = rng.random((cells.shape[0], 2))
        x = cells[:, 0] + u[:, 0] * (cells[:, 1] - cells[:, 0])
        y = cells[:, 2] + u[:, 1] * (cells[:, 3] - cells[:, 2])
        return x + 1j * y


def riemann_sum(f, spec: PartitionSpec, cap: int = RESAMPLE_CAP, seed: int = 0):
    """Riemann sum of a measure-valued map over the partition.

    f(point) returns a PathEnsemble or None (treated as the zero measure).
    Each cell contributes its area times the normalized value ensemble
    scaled to f's own mass, i.e. area * f(point) as a measure.  Returns
    (PathEnsemble, resampled_flag).
    """
    cells = spec.cells()
    pts = spec.sample_points(cells)
    areas = (cells[:, 1] - cells[:, 0]) * (cells[:, 3] - cells[:, 2])
    comps = []
    masses = []
    for pt, area in zip(pts, areas):
        val = f(complex(pt))
        if val is None or len(val) == 0 or val.total_mass == 0:
            continue
        comps.append(val)
        masses.append(area * val.total_mass)
    return mixture(comps, masses, cap=cap, seed=seed)


# ---------------------------------------------------------------------------
# identity checks used by the property suites


def total_mass_bounds_check(mu: PathEnsemble, nu: PathEnsemble,
                            kind: CurveMetricKind = CurveMetricKind.DD_UPPER) -> dict:
    """Evaluates the mass bounds around the Prokhorov distance.

    Returns the computed distance together with the lower bound
    | |mu| - |nu| | and upper bound max(|mu|, |nu|), and whether the
    sandwich holds (tiny float slack).
    """
    d = prokhorov(mu, nu, kind)
    lower = abs(mu.total_mass - nu.total_mass)
    upper = max(mu.total_mass, nu.total_mass)
    eps = 1e-9 * max(1.0, upper)
    return {
        "distance": d,
        "lower": lower,
        "upper": upper,
        "ok": (lower - eps <= d <= upper + eps),
    }


def weighted_average_identity_check(components, probs, target,
                                    kind: CurveMetricKind = CurveMetricKind.DD_UPPER) -> dict:
    """Mixture contraction: d(sum p_i mu_i, target) <= max_i d(mu_i, target).

    target may instead be a matching family nu_i; then the check is
    d(sum p_i mu_i, sum p_i nu_i) <= max_i d(mu_i, nu_i), which is how the
    refinement lemma consumes it.
    """
    p = np.asarray(probs, dtype=np.float64)
    if abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
        raise PreconditionError("probs must be a probability vector")
    mix, _ = mixture(components, [pi * c.total_mass for pi, c in zip(p, components)])
    if isinstance(target, PathEnsemble):
        tgt = target
        rhs = max(prokhorov(c, target, kind) for c in components)
    else:
        nus = list(target)
        if len(nus) != len(components):
            raise PreconditionError("component/target family length mismatch")
        tgt, _ = mixture(nus, [pi * c.total_mass for pi, c in zip(p, nus)])
        rhs = max(prokhorov(c, n, kind) for c, n in zip(components, nus))
    lhs = prokhorov(mix, tgt, kind)
    return {"lhs": lhs, "rhs": rhs, "ok": lhs <= rhs + 1e-9 * max(1.0, rhs)}
