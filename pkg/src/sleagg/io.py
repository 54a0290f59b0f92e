"""On-disk formats for curves and weighted curve families.

Binary curve format ``SLC1``: 4-byte magic ``SLC1``, u64 little-endian
sample count, then per sample three f64 little-endian values (t, x, y).
Round-trips bit-exactly.

Text format: CSV with header ``t,x,y`` and 17-significant-digit floats,
which also round-trips f64 exactly.

Ensemble format ``SLEN``: magic, u64 atom count, f64 total mass, then per
atom an f64 weight followed by an embedded SLC1 block.

Sampler outputs are accompanied by a JSON sidecar recording kappa, dt,
seed and a convention tag, so mixed families are detectable at ingest.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .curves import Curve
from .errors import PreconditionError

__all__ = [
    "write_slc1",
    "read_slc1",
    "write_curve_csv",
    "read_curve_csv",
    "write_ensemble",
    "read_ensemble",
    "write_sidecar",
    "read_sidecar",
    "CONVENTION_TAG",
]

_MAGIC_CURVE = b"SLC1"
_MAGIC_ENS = b"SLEN"

# Driving convention recorded next to every sampled trace: capacity
# parametrization d/dt g = a / (g - U) with a = 2/kappa and U a standard
# Brownian motion (unit quadratic variation).
CONVENTION_TAG = "dgdt=a/(g-U);a=2/kappa;driver=std-bm"


def _curve_bytes(curve: Curve) -> bytes:
    n = len(curve)
    buf = np.empty((n, 3), dtype="<f8")
    buf[:, 0] = curve.times
    buf[:, 1] = curve.points.real
    buf[:, 2] = curve.points.imag
    return _MAGIC_CURVE + struct.pack("<Q", n) + buf.tobytes()


def _curve_from(buf: bytes, off: int) -> tuple[Curve, int]:
    if buf[off : off + 4] != _MAGIC_CURVE:
        raise PreconditionError(f"bad curve magic at offset {off}")
    (n,) = struct.unpack_from("<Q", buf, off + 4)
    start = off + 12
    end = start + 24 * n
    if end > len(buf):
        raise PreconditionError("truncated curve block")
    arr = np.frombuffer(buf[start:end], dtype="<f8").reshape(n, 3)
    return Curve(times=arr[:, 0].copy(), points=(arr[:, 1] + 1j * arr[:, 2])), end


def write_slc1(path: str | Path, curve: Curve) -> None:
    Path(path).write_bytes(_curve_bytes(curve))


def read_slc1(path: str | Path) -> Curve:
    buf = Path(path).read_bytes()
    curve, end = _curve_from(buf, 0)
    if end != len(buf):
        raise PreconditionError(f"{path}: trailing bytes after curve block")
    return curve


def write_curve_csv(path: str | Path, curve: Curve) -> None:
    with open(path, "w") as fh:
        fh.write("t,x,y\n")
        for t, p in zip(curve.times, curve.points):
            fh.write(f"{t:.17g},{p.real:.17g},{p.imag:.17g}\n")


def read_curve_csv(path: str | Path) -> Curve:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,x,y":
            raise PreconditionError(f"{path}: expected header 't,x,y', got {header!r}")
        rows = [line.split(",") for line in fh if line.strip()]
    arr = np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    if arr.size == 0:
        raise PreconditionError(f"{path}: no samples")
    return Curve(times=arr[:, 0], points=arr[:, 1] + 1j * arr[:, 2])


def write_ensemble(path: str | Path, weights, curves) -> None:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.shape[0] != len(curves):
        raise PreconditionError("weights/curves length mismatch")
    parts = [_MAGIC_ENS, struct.pack("<Qd", w.shape[0], float(w.sum()))]
    for wi, c in zip(w, curves):
        parts.append(struct.pack("<d", wi))
        parts.append(_curve_bytes(c))
    Path(path).write_bytes(b"".join(parts))


def read_ensemble(path: str | Path) -> tuple[np.ndarray, list[Curve]]:
    buf = Path(path).read_bytes()
    if buf[:4] != _MAGIC_ENS:
        raise PreconditionError(f"{path}: bad ensemble magic")
    n, mass = struct.unpack_from("<Qd", buf, 4)
    off = 4 + 16
    weights = np.empty(n, dtype=np.float64)
    curves = []
    for i in range(n):
        (weights[i],) = struct.unpack_from("<d", buf, off)
        off += 8
        c, off = _curve_from(buf, off)
        curves.append(c)
    if off != len(buf):
        raise PreconditionError(f"{path}: trailing bytes")
    if not np.isclose(weights.sum(), mass, rtol=1e-12, atol=1e-300):
        raise PreconditionError(f"{path}: header mass {mass} != sum of weights {weights.sum()}")
    return weights, curves


def write_sidecar(path: str | Path, *, kappa: float, dt: float, seed: int,
                  extra: dict | None = None) -> None:
    doc = {"kappa": float(kappa), "dt": float(dt), "seed": int(seed),
           "convention": CONVENTION_TAG}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_sidecar(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    for key in ("kappa", "dt", "seed", "convention"):
        if key not in doc:
            raise PreconditionError(f"{path}: sidecar missing key {key!r}")
    return doc
