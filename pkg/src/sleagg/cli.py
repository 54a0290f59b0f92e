"""Command line entry points.

Every subcommand is a thin wrapper over a library call: parse arguments,
run, serialize.  Output locations resolve against the SLEAGG_OUT
environment variable when relative (the only environment knob); all
other behavior comes from flags or a versioned JSON config file.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .aggregate import theta_moment_scan, verify_lengthbias
from .content import natural_length_proxy
from .errors import PreconditionError, SleaggError
from .green import (
    GreenParams,
    disk_config,
    green_config,
    halfplane_config,
    tail_integrability,
    two_slit_config,
)
from .harness import ExperimentConfig, _emit_plots, _jsonable, escape_experiment, run_suite
from .io import read_slc1, write_ensemble, write_sidecar, write_slc1
from .loewner import sample_chordal
from .measures import PathEnsemble
from .twosided import oracle_reweighted, sample_twosided

_CONFIGS = {
    "half_plane": lambda kappa: halfplane_config(kappa),
    "disk": lambda kappa: disk_config(kappa),
    "two_slit": lambda kappa: two_slit_config(kappa),
}


def _out_root() -> Path:
    return Path(os.environ.get("SLEAGG_OUT", "."))


def _resolve(pathstr: str) -> Path:
    p = Path(pathstr)
    return p if p.is_absolute() else _out_root() / p


def _parse_complex(s: str) -> complex:
    try:
        return complex(s.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse complex number {s!r}")


def _parse_floats(s: str) -> tuple:
    return tuple(float(v) for v in s.split(","))


def _dump_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), sort_keys=True, indent=1) + "\n")


def _cmd_sample_chordal(args) -> int:
    out = _resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.n):
        curve, _ = sample_chordal(args.kappa, args.t_max, args.dt, args.seed,
                                  path_index=i)
        stem = out / f"chordal-{i:05d}"
        write_slc1(stem.with_suffix(".slc1"), curve)
        write_sidecar(stem.with_suffix(".json"), kappa=args.kappa, dt=args.dt,
                      seed=args.seed, extra={"path_index": i, "t_max": args.t_max})
    print(f"wrote {args.n} traces to {out}")
    return 0


def _cmd_sample_twosided(args) -> int:
    out = _resolve(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _CONFIGS[args.config](args.kappa)
    wrote = 0
    for i in range(args.n):
        s = sample_twosided(cfg, args.zeta, seed=args.seed, path_index=i,
                            dt=args.dt)
        stem = out / f"twosided-{i:05d}"
        write_slc1(stem.with_suffix(".slc1"), s.curve)
        write_sidecar(stem.with_suffix(".json"), kappa=args.kappa, dt=args.dt,
                      seed=args.seed,
                      extra={"path_index": i, "weight": s.weight,
                             "zeta": [args.zeta.real, args.zeta.imag],
                             "hit_time": s.hit_time, "mass": s.mass})
        wrote += 1
    print(f"wrote {wrote} two-sided traces to {out}")
    return 0


def _cmd_oracle_2sr(args) -> int:
    curves = []
    for i in range(args.n):
        curve, _ = sample_chordal(args.kappa, args.t_max, args.dt, args.seed,
                                  path_index=i)
        curves.append(curve)
    ens = PathEnsemble(np.ones(len(curves)), tuple(curves))
    p = GreenParams(args.kappa)
    kept = oracle_reweighted(ens, args.zeta, args.eps, p)
    out = _resolve(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_ensemble(out, kept.weights, kept.curves)
    write_sidecar(out.with_suffix(".json"), kappa=args.kappa, dt=args.dt,
                  seed=args.seed,
                  extra={"eps": args.eps, "survivors": len(kept),
                         "zeta": [args.zeta.real, args.zeta.imag]})
    print(f"kept {len(kept)}/{args.n} traces, mass {kept.total_mass:.6g}")
    return 0


def _cmd_natural_length(args) -> int:
    curve = read_slc1(args.trace)
    p = GreenParams(args.kappa)
    val = natural_length_proxy(curve, p, delta=args.delta)
    print(json.dumps({"length": val, "kappa": args.kappa, "d": p.d,
                      "delta": args.delta, "samples": len(curve)},
                     sort_keys=True))
    return 0


def _cmd_green(args) -> int:
    cfg = _CONFIGS[args.config](args.kappa)
    g = green_config(cfg, args.zeta)
    integrable, exponent = tail_integrability(args.kappa)
    print(json.dumps({"green": g, "kappa": args.kappa,
                      "zeta": [args.zeta.real, args.zeta.imag],
                      "config": args.config, "tail_integrable": integrable,
                      "tail_exponent": exponent}, sort_keys=True))
    return 0


def _cmd_escape_stats(args) -> int:
    res = escape_experiment(args.kappa, args.n, args.seed)
    if args.out:
        _dump_json(_resolve(args.out), res)
    print(json.dumps({"slope_two_sided": res["slope_two_sided"],
                      "slope_chordal": res["slope_chordal"],
                      "bound_slope": res["bound_slope"]}, sort_keys=True))
    return 0


def _cmd_theta_scan(args) -> int:
    res = theta_moment_scan(disk_config(args.kappa), center=args.center,
                            diams=args.diams, n=args.n, seed=args.seed)
    if args.out:
        _dump_json(_resolve(args.out), res)
    print(json.dumps({"slope_twosided": res["slope_twosided"],
                      "slope_chordal": res["slope_chordal"], "d": res["d"]},
                     sort_keys=True))
    return 0


def _cmd_verify_lengthbias(args) -> int:
    rep = verify_lengthbias(disk_config(args.kappa), meshes=args.mesh_ladder,
                            n_per_cell=args.budget_per_cell,
                            chordal_n=args.chordal_n, seed=args.seed,
                            progress=args.progress)
    doc = rep.to_dict()
    out = _resolve(args.out)
    _dump_json(out, doc)
    if args.plots:
        _emit_plots(out.parent, out.stem, "lengthbias", doc)
    print(json.dumps({"distances": list(rep.distances),
                      "mass_ratios": list(rep.mass_ratios),
                      "trend_ok": rep.trend_ok,
                      "incomplete": rep.incomplete}, sort_keys=True))
    return 0


def _cmd_run_suite(args) -> int:
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        cfg = ExperimentConfig.from_dict(doc)
        if args.out:
            cfg = ExperimentConfig.from_dict({**doc, "out_dir": args.out})
    else:
        cfg = ExperimentConfig(
            kappas=tuple(args.kappa) if args.kappa else (8.0 / 3.0,),
            experiments=tuple(args.experiments.split(","))
            if args.experiments else ("green", "drift"),
            seed=args.seed,
            out_dir=args.out or "suite-out",
        )
    status, reports = run_suite(cfg)
    for r in reports:
        flag = "ok" if r["ok"] else "FAIL"
        print(f"{r['experiment']} kappa={r['kappa']:g}: {flag}")
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="sleagg",
        description="Sampling and verification for aggregated interior-point "
                    "SLE measures.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(sp, n_default=100):
        sp.add_argument("--kappa", type=float, required=True)
        sp.add_argument("--n", type=int, default=n_default)
        sp.add_argument("--seed", type=int, default=0)

    sp = sub.add_parser("sample-chordal", help="write chordal traces + sidecars")
    common(sp)
    sp.add_argument("--t-max", type=float, default=1.0)
    sp.add_argument("--dt", type=float, default=1e-4)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_sample_chordal)

    sp = sub.add_parser("sample-twosided",
                        help="write two-sided radial traces through zeta")
    common(sp)
    sp.add_argument("--zeta", type=_parse_complex, required=True)
    sp.add_argument("--config", choices=sorted(_CONFIGS), default="disk")
    sp.add_argument("--dt", type=float, default=2e-4)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_sample_twosided)

    sp = sub.add_parser("oracle-2sr",
                        help="restriction-reweighted chordal ensemble near zeta")
    common(sp, n_default=2000)
    sp.add_argument("--zeta", type=_parse_complex, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--t-max", type=float, default=2.0)
    sp.add_argument("--dt", type=float, default=1e-4)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=_cmd_oracle_2sr)

    sp = sub.add_parser("natural-length", help="content proxy of a stored trace")
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--trace", required=True)
    sp.add_argument("--delta", type=float, default=None)
    sp.set_defaults(fn=_cmd_natural_length)

    sp = sub.add_parser("green", help="Green's function value at a point")
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--zeta", type=_parse_complex, required=True)
    sp.add_argument("--config", choices=sorted(_CONFIGS), default="half_plane")
    sp.set_defaults(fn=_cmd_green)

    sp = sub.add_parser("escape-stats",
                        help="escape-frequency ladder for both pinned laws")
    common(sp, n_default=1000)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_escape_stats)

    sp = sub.add_parser("theta-scan",
                        help="natural-time moments over shrinking squares")
    common(sp, n_default=600)
    sp.add_argument("--center", type=_parse_complex, default=0j)
    sp.add_argument("--diams", type=_parse_floats, default=(0.3, 0.15, 0.075))
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_theta_scan)

    sp = sub.add_parser("verify-lengthbias",
                        help="aggregate vs length-biased chordal over a mesh ladder")
    sp.add_argument("--kappa", type=float, required=True)
    sp.add_argument("--mesh-ladder", type=_parse_floats,
                    default=(0.5, 0.25, 0.125))
    sp.add_argument("--budget-per-cell", type=int, default=500)
    sp.add_argument("--chordal-n", type=int, default=5000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default="lengthbias-report.json")
    sp.add_argument("--plots", action="store_true",
                    help="also write CSV data and a gnuplot script")
    sp.add_argument("--progress", action="store_true")
    sp.set_defaults(fn=_cmd_verify_lengthbias)

    sp = sub.add_parser("run-suite", help="run configured experiment suite")
    sp.add_argument("--config", default=None,
                    help="versioned JSON config (suite-config-v1)")
    sp.add_argument("--kappa", type=float, action="append")
    sp.add_argument("--experiments", default=None,
                    help="comma-separated experiment names")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(fn=_cmd_run_suite)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except PreconditionError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SleaggError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
