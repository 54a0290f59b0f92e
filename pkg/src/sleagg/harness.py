"""Reproducible experiment suites, shared check helpers, trace ingestion.

Every suite artifact is a function of the embedded config alone: seeds
are explicit, floats serialize via their shortest round-trip form, keys
are sorted, and no wall-clock data enters a report, so a rerun with the
same config is byte-identical.  Plot emission is a data CSV plus a
generated gnuplot script next to each ladder-shaped report.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import length_biased_chordal, theta_moment_scan, verify_lengthbias
from .content import Region, theta_in_set
from .errors import MixedEnsembleError, PreconditionError
from .green import (
    GreenParams,
    annulus_green_integral,
    disk_config,
    green_config,
    green_halfplane,
    halfplane_config,
    tail_integrability,
    two_slit_config,
)
from .io import CONVENTION_TAG, read_sidecar, read_slc1
from .measures import PathEnsemble
from .rng import path_generator, spawn_seed
from .twosided import (
    drift_fd,
    escape_slope,
    escape_stat,
    girsanov_drift,
    martingale_scan,
    sample_twosided,
)

__all__ = [
    "ExperimentConfig",
    "run_suite",
    "ingest_traces",
    "mobius_covariance_spread",
    "drift_check",
    "escape_experiment",
    "DEFAULT_TOLERANCES",
    "DEFAULT_BUDGETS",
    "BUDGET_MINIMA",
    "EXPERIMENTS",
    "CODE_VERSION",
]

try:
    from importlib.metadata import version as _pkg_version

    CODE_VERSION = _pkg_version("sleagg")
except Exception:  # not installed; running from a source tree
    CODE_VERSION = "0+untracked"


# The one defaults table.  Keys mirror the acceptance thresholds; suites
# may override per run but tests pin these values.
DEFAULT_TOLERANCES = {
    "covariance_rel": 1e-10,   # conformal covariance identity, exact map
    "ladder_sigmas": 3.0,      # adjacent epsilon rungs, combined stderr units
    "mc_spread_rel": 0.15,     # one-point constant, relative spread over cells
    "martingale_sigmas": 3.0,  # drift of the mean of M_t at checkpoints
    "drift_rel": 1e-6,         # analytic vs finite-difference tilt drift
    "sampler_prokhorov": 0.08,  # two-sided vs reweighted chordal, normalized
    "escape_slack": 0.15,      # log-log slope above -(4a-1)/2
    "content_slope": 0.1,      # |slope - d| for natural-time moments
    "lengthbias_final": 0.12,  # normalized Prokhorov at the finest mesh
    "mass_ratio_lo": 0.85,
    "mass_ratio_hi": 1.18,
}

DEFAULT_BUDGETS = {
    "n_mobius": 100,
    "n_drift": 1000,
    "n_martingale": 2000,
    "n_escape": 1000,
    "n_theta": 600,
    "n_chordal": 2000,
    "n_per_cell": 100,
}

# Documented floors; configs below these are rejected as invalid.
BUDGET_MINIMA = {
    "n_mobius": 10,
    "n_drift": 10,
    "n_martingale": 100,
    "n_escape": 50,
    "n_theta": 50,
    "n_per_cell": 5,
    "n_chordal": 50,
}

EXPERIMENTS = ("green", "martingale", "drift", "escape", "theta-scan",
               "lengthbias")


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully explicit suite description; everything a rerun needs."""

    kappas: tuple = (8.0 / 3.0,)
    experiments: tuple = ("green", "drift")
    seed: int = 0
    dt: float = 2e-4
    out_dir: str = "suite-out"
    budgets: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    schema: str = "suite-config-v1"

    def __post_init__(self):
        object.__setattr__(self, "kappas", tuple(float(k) for k in self.kappas))
        object.__setattr__(self, "experiments", tuple(self.experiments))
        if not self.kappas:
            raise PreconditionError("need at least one kappa")
        for k in self.kappas:
            if not (0.0 < k <= 4.0):
                raise PreconditionError(f"kappa must be in (0, 4], got {k}")
        for name in self.experiments:
            if name not in EXPERIMENTS:
                raise PreconditionError(
                    f"unknown experiment {name!r}; choose from {EXPERIMENTS}")
        if self.schema != "suite-config-v1":
            raise PreconditionError(f"unsupported config schema {self.schema!r}")
        if not (0 < self.dt <= 0.1):
            raise PreconditionError("dt out of range")
        if self.seed < 0:
            raise PreconditionError("seed must be nonnegative")
        for key, val in self.budgets.items():
            if key not in DEFAULT_BUDGETS:
                raise PreconditionError(f"unknown budget key {key!r}")
            if int(val) < BUDGET_MINIMA[key]:
                raise PreconditionError(
                    f"budget {key}={val} below documented minimum "
                    f"{BUDGET_MINIMA[key]}")
        for key in self.tolerances:
            if key not in DEFAULT_TOLERANCES:
                raise PreconditionError(f"unknown tolerance key {key!r}")

    def budget(self, name: str) -> int:
        return int(self.budgets.get(name, DEFAULT_BUDGETS[name]))

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "kappas": list(self.kappas),
            "experiments": list(self.experiments),
            "seed": self.seed,
            "dt": self.dt,
            "out_dir": self.out_dir,
            "budgets": dict(sorted(self.budgets.items())),
            "tolerances": dict(sorted(self.tolerances.items())),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {"schema", "kappas", "experiments", "seed", "dt", "out_dir",
                 "budgets", "tolerances"}
        bad = set(doc) - known
        if bad:
            raise PreconditionError(f"unknown config keys {sorted(bad)}")
        return cls(
            kappas=tuple(doc.get("kappas", (8.0 / 3.0,))),
            experiments=tuple(doc.get("experiments", ("green", "drift"))),
            seed=int(doc.get("seed", 0)),
            dt=float(doc.get("dt", 2e-4)),
            out_dir=str(doc.get("out_dir", "suite-out")),
            budgets=dict(doc.get("budgets", {})),
            tolerances=dict(doc.get("tolerances", {})),
            schema=str(doc.get("schema", "suite-config-v1")),
        )


# ---------------------------------------------------------------------------
# shared check helpers (the acceptance tests call these too)


def mobius_covariance_spread(kappa: float, n: int = 100, seed: int = 0) -> float:
    """Worst relative covariance error over random half-plane self-maps.

    Maps are real-coefficient Mobius transforms with positive determinant,
    coefficients bounded away from degeneracy so both image endpoints stay
    finite; the identity compares G for the chord 0 to infinity against
    the pulled-back G of the image chord.
    """
    p = GreenParams(kappa)
    gen = path_generator(seed, 0)
    worst = 0.0
    got = 0
    while got < n:
        a, b, c, d = gen.uniform(-2.0, 2.0, size=4)
        det = a * d - b * c
        if det <= 0.1 or abs(c) < 0.1 or abs(d) < 0.1:
            continue
        zeta = complex(gen.uniform(-2.0, 2.0), gen.uniform(0.1, 2.0))
        g1 = green_halfplane(np.array([zeta]), p)[0]
        fz = (a * zeta + b) / (c * zeta + d)
        df = det / (c * zeta + d) ** 2
        cfg2 = halfplane_config(kappa, x=b / d, y=a / c)
        g2 = green_config(cfg2, fz, p)
        worst = max(worst, abs(g1 - abs(df) ** (2.0 - p.d) * g2) / g1)
        got += 1
    return worst


def drift_check(kappa: float, n: int = 1000, seed: int = 0) -> float:
    """Worst relative error of the analytic tilt drift against a central
    finite difference of log M under a driver shift.

    States are drawn with the tracked point strictly off the vertical
    axis so the drift is bounded away from zero and relative error is
    well defined; both sides use the kappa-variance convention.
    """
    p = GreenParams(kappa)
    gen = path_generator(seed, 1)
    worst = 0.0
    for _ in range(n):
        x = float(gen.uniform(0.05, 3.0)) * (1.0 if gen.uniform() < 0.5 else -1.0)
        Z = complex(x, gen.uniform(0.08, 3.0))
        logder = float(gen.uniform(-2.0, 0.5))
        ana = girsanov_drift(Z, p, variance="kappa")
        fd = kappa * drift_fd(Z, logder, p)
        worst = max(worst, abs(ana - fd) / abs(ana))
    return worst


def escape_experiment(kappa: float, n: int, seed: int = 0, *,
                      radii=(2.0, 4.0, 8.0, 16.0), square_side: float = 0.25,
                      hull_reach: float = 40.0,
                      sampler_kwargs: dict | None = None) -> dict:
    """Escape frequencies past growing circles, both pinned laws.

    Geometry: the plane minus two rays, chord between the ray tips, unit
    disk inscribed.  Law one is two-sided radial through the origin; law
    two is chordal weighted by natural time in a small centered square.
    Curves run to a fixed capacity with no endpoint truncation, so
    outward excursions are not clipped.
    """
    if sampler_kwargs is None:
        sampler_kwargs = {}
    cfg = two_slit_config(kappa)
    p = GreenParams(kappa)
    curves = []
    failed = 0
    for i in range(n):
        try:
            s = sample_twosided(cfg, 0j, seed=spawn_seed(seed, "esc-2sr"),
                                path_index=i, w_ball=0.0,
                                hull_reach=hull_reach, **sampler_kwargs)
        except Exception:
            failed += 1
            continue
        curves.append(s.curve)
    two_sided = PathEnsemble(np.ones(len(curves)), tuple(curves))
    stats_ts = escape_stat(two_sided, radii, center=0j)

    chordal = length_biased_chordal(cfg, n, seed=spawn_seed(seed, "esc-ch"),
                                    w_ball=0.0, hull_reach=hull_reach, p=p)
    square = Region.square(0j, side=square_side)
    thetas = np.array([theta_in_set(c, square) for c in chordal.curves])
    visit = thetas > 0
    weighted = PathEnsemble(thetas[visit],
                            tuple(c for c, v in zip(chordal.curves, visit) if v))
    stats_ch = escape_stat(weighted, radii, center=0j)

    bound = -(4.0 * p.a - 1.0) / 2.0
    return {
        "radii": list(radii),
        "two_sided": stats_ts,
        "chordal_weighted": stats_ch,
        "slope_two_sided": escape_slope(stats_ts),
        "slope_chordal": escape_slope(stats_ch),
        "bound_slope": bound,
        "n": n,
        "failed": failed,
    }


# ---------------------------------------------------------------------------
# experiment runners


def _exp_green(kappa: float, cfg: ExperimentConfig) -> dict:
    spread = mobius_covariance_spread(kappa, cfg.budget("n_mobius"),
                                      spawn_seed(cfg.seed, f"green-{kappa:g}"))
    integrable, exponent = tail_integrability(kappa)
    quad = [annulus_green_integral(kappa, 2.0, float(r)) for r in (8, 32, 128)]
    return {
        "covariance_spread": spread,
        "tail_integrable": integrable,
        "tail_exponent": exponent,
        "annulus_quadrature": quad,
        "ok": spread < cfg.tol("covariance_rel"),
    }


def _exp_martingale(kappa: float, cfg: ExperimentConfig) -> dict:
    scan = martingale_scan(kappa, n_paths=cfg.budget("n_martingale"),
                           dt=max(cfg.dt, 2.5e-4),
                           seed=spawn_seed(cfg.seed, f"mart-{kappa:g}"))
    scan["ok"] = scan["max_sigmas"] <= cfg.tol("martingale_sigmas")
    return scan


def _exp_drift(kappa: float, cfg: ExperimentConfig) -> dict:
    worst = drift_check(kappa, cfg.budget("n_drift"),
                        spawn_seed(cfg.seed, f"drift-{kappa:g}"))
    return {"worst_rel": worst, "ok": worst < cfg.tol("drift_rel")}


def _exp_escape(kappa: float, cfg: ExperimentConfig) -> dict:
    res = escape_experiment(kappa, cfg.budget("n_escape"),
                            spawn_seed(cfg.seed, f"esc-{kappa:g}"))
    slack = cfg.tol("escape_slack")
    res["ok"] = (res["slope_two_sided"] <= res["bound_slope"] + slack
                 and res["slope_chordal"] <= res["bound_slope"] + slack)
    return res


def _exp_theta(kappa: float, cfg: ExperimentConfig) -> dict:
    res = theta_moment_scan(disk_config(kappa), n=cfg.budget("n_theta"),
                            seed=spawn_seed(cfg.seed, f"theta-{kappa:g}"))
    tol = cfg.tol("content_slope")
    res["ok"] = (abs(res["slope_twosided"] - res["d"]) <= tol
                 and abs(res["slope_chordal"] - res["d"]) <= tol)
    return res


def _exp_lengthbias(kappa: float, cfg: ExperimentConfig) -> dict:
    rep = verify_lengthbias(disk_config(kappa),
                            n_per_cell=cfg.budget("n_per_cell"),
                            chordal_n=cfg.budget("n_chordal"),
                            seed=spawn_seed(cfg.seed, f"lb-{kappa:g}"))
    lo, hi = cfg.tol("mass_ratio_lo"), cfg.tol("mass_ratio_hi")
    out = rep.to_dict()
    out["ok"] = (not rep.incomplete and rep.trend_ok
                 and rep.distances[-1] <= cfg.tol("lengthbias_final")
                 and all(lo <= r <= hi for r in rep.mass_ratios))
    return out


_RUNNERS = {
    "green": _exp_green,
    "martingale": _exp_martingale,
    "drift": _exp_drift,
    "escape": _exp_escape,
    "theta-scan": _exp_theta,
    "lengthbias": _exp_lengthbias,
}


# ---------------------------------------------------------------------------
# artifact emission


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n")


_GNUPLOT = """set datafile separator ','
set key autotitle columnhead
set logscale xy
plot '{csv}' using 1:2 with linespoints, '' using 1:3 with linespoints
"""


def _emit_plots(out: Path, stem: str, name: str, res: dict) -> list[str]:
    files = []
    rows = None
    if name == "martingale":
        rows = (["t", "mean", "stderr"],
                list(zip(res["t"], res["mean"], res["stderr"])))
    elif name == "escape":
        hdr = ["r", "p_two_sided", "p_chordal"]
        rows = (hdr, [(a["r"], a["p"], b["p"])
                      for a, b in zip(res["two_sided"], res["chordal_weighted"])])
    elif name == "theta-scan":
        rows = (["diam", "mean_two_sided", "mean_chordal"],
                list(zip(res["diams"], res["twosided_mean"],
                         res["chordal_weighted_mean"])))
    elif name == "lengthbias":
        rows = (["mesh", "distance", "ci", "mass_ratio"],
                list(zip(res["mesh_ladder"], res["distances"],
                         res["distance_cis"], res["mass_ratios"])))
    if rows is None:
        return files
    csv = out / f"{stem}.csv"
    _write_csv(csv, rows[0], [[float(v) for v in r] for r in rows[1]])
    gp = out / f"{stem}.gp"
    gp.write_text(_GNUPLOT.format(csv=csv.name))
    files.extend([csv.name, gp.name])
    return files


def run_suite(cfg: ExperimentConfig) -> tuple[int, list[dict]]:
    """Run the configured experiments; write one report per (name, kappa).

    Returns (exit status, reports).  Status 0 means every experiment met
    its tolerance, 1 means at least one hard check failed.  Invalid or
    unwritable output configuration raises instead of returning.
    """
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".writable"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PreconditionError(f"output dir {cfg.out_dir!r} unusable: {exc}")
    reports = []
    artifacts = []
    for name in cfg.experiments:
        for kappa in cfg.kappas:
            res = _jsonable(_RUNNERS[name](kappa, cfg))
            doc = {
                "schema": "suite-v1",
                "experiment": name,
                "kappa": kappa,
                "config": cfg.to_dict(),
                "code_version": CODE_VERSION,
                "convention": CONVENTION_TAG,
                "results": res,
                "ok": bool(res["ok"]),
            }
            stem = f"{name}-kappa-{kappa:g}"
            (out / f"{stem}.json").write_text(
                json.dumps(doc, sort_keys=True, indent=1) + "\n")
            artifacts.append(f"{stem}.json")
            artifacts.extend(_emit_plots(out, stem, name, res))
            reports.append(doc)
    summary = {
        "schema": "suite-v1",
        "ok": all(r["ok"] for r in reports),
        "artifacts": artifacts,
        "config": cfg.to_dict(),
        "code_version": CODE_VERSION,
        "convention": CONVENTION_TAG,
    }
    (out / "suite.json").write_text(
        json.dumps(summary, sort_keys=True, indent=1) + "\n")
    return (0 if summary["ok"] else 1), reports


# ---------------------------------------------------------------------------
# trace ingestion


def ingest_traces(directory: str | Path) -> tuple[PathEnsemble, dict]:
    """Load every curve file in a directory into one ensemble.

    Each binary curve file must carry a JSON sidecar (same stem) naming
    kappa, dt, seed and the driving convention.  Files that fail to parse
    are skipped and listed in the manifest; traces from different kappa
    or a different convention in one directory are an error, not a skip,
    since silently mixing laws would poison every downstream statistic.
    """
    d = Path(directory)
    if not d.is_dir():
        raise PreconditionError(f"{directory!r} is not a directory")
    files = sorted(d.glob("*.slc1"))
    curves = []
    weights = []
    loaded = []
    skipped = {}
    kappa_seen: set[float] = set()
    for f in files:
        try:
            curve = read_slc1(f)
            side = read_sidecar(f.with_suffix(".json"))
        except (OSError, ValueError, KeyError, PreconditionError) as exc:
            skipped[f.name] = str(exc)
            continue
        if side["convention"] != CONVENTION_TAG:
            raise MixedEnsembleError(
                f"{f.name}: convention {side['convention']!r} does not match "
                f"{CONVENTION_TAG!r}")
        kappa_seen.add(float(side["kappa"]))
        if len(kappa_seen) > 1:
            raise MixedEnsembleError(
                f"directory mixes kappa values {sorted(kappa_seen)}")
        curves.append(curve)
        weights.append(float(side.get("weight", 1.0)))
        loaded.append(f.name)
    if not curves:
        warnings.warn(f"no usable traces in {directory!r}", stacklevel=2)
    manifest = {
        "loaded": loaded,
        "skipped": skipped,
        "kappa": kappa_seen.pop() if kappa_seen else None,
    }
    return PathEnsemble(np.array(weights, dtype=np.float64), tuple(curves)), manifest
