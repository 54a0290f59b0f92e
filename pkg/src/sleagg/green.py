"""Green's function for chordal SLE and conformal plumbing.

In the upper half-plane with the chord running 0 to infinity,

    G(zeta) = c * (Im zeta)^(d-2) * (sin arg zeta)^(4a-1),   d = 1 + kappa/8.

Other configurations are reached by conformal covariance
G_D(zeta) = |T'(zeta)|^(2-d) * G_H(T(zeta)) where T maps (D, z, w) to
(H, 0, infinity).  T is unique only up to positive scaling, but the
scaling cancels exactly against the homogeneity of G, so any choice of
normalizing Mobius map gives the same value.

Supported domains: the half-plane, the unit disk, the plane minus the two
rays (-inf, -1] and [1, +inf) (the escape-statistic geometry: it contains
the unit disk and its boundary meets the unit circle at the marked points
-1 and 1), and the half-plane minus a Loewner hull.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import PreconditionError
from .loewner import LoewnerState, map_derivative, map_point

__all__ = [
    "TAIL_KAPPA_THRESHOLD",
    "GreenParams",
    "Configuration",
    "halfplane_config",
    "disk_config",
    "two_slit_config",
    "green_halfplane",
    "green_config",
    "sin_arg_factor",
    "boundary_distance_lower",
    "main_estimate_check",
    "conformal_radius",
    "conformal_radius_mc",
    "two_point_green_comparison",
    "tail_integrability",
    "annulus_green_integral",
    "disk_green_mass",
    "load_calibration",
    "save_calibration",
]

TAIL_KAPPA_THRESHOLD = 8.0 * (math.sqrt(2.0) - 1.0)

INF = complex(math.inf, 0.0)


def _finite(w: complex) -> bool:
    return math.isfinite(w.real) and math.isfinite(w.imag)


@dataclass(frozen=True)
class GreenParams:
    """All kappa-derived exponents in one place."""

    kappa: float
    c: float = 1.0

    def __post_init__(self):
        if not (0 < self.kappa <= 4):
            raise PreconditionError(f"kappa must be in (0, 4], got {self.kappa}")
        if not (self.c > 0):
            raise PreconditionError("normalization constant must be positive")

    @property
    def a(self) -> float:
        return 2.0 / self.kappa

    @property
    def d(self) -> float:
        return 1.0 + self.kappa / 8.0

    @property
    def fouram1(self) -> float:
        return 8.0 / self.kappa - 1.0

    @property
    def beta(self) -> float:
        return self.fouram1 + self.d - 2.0


@dataclass(frozen=True)
class Configuration:
    """A chordal configuration (D, z, w).

    kind: "half_plane", "disk", "two_slit_plane", or "slit_half_plane".
    For "slit_half_plane" the domain is H minus the hull of `state` (w must
    be the point at infinity and z is taken to be the hull tip).
    """

    kind: str
    z: complex
    w: complex
    kappa: float
    state: LoewnerState | None = None

    def __post_init__(self):
        if self.kind not in ("half_plane", "disk", "two_slit_plane", "slit_half_plane"):
            raise PreconditionError(f"unknown domain kind {self.kind!r}")
        if self.z == self.w:
            raise PreconditionError("marked boundary points must differ")
        if self.kind == "slit_half_plane":
            if self.state is None:
                raise PreconditionError("slit_half_plane needs a Loewner state")
            if _finite(self.w):
                raise PreconditionError("slit_half_plane supports w at infinity only")


def halfplane_config(kappa: float, x: float = 0.0, y: complex = INF) -> Configuration:
    return Configuration(kind="half_plane", z=complex(x), w=complex(y), kappa=kappa)


def disk_config(kappa: float, z: complex = -1 + 0j, w: complex = 1 + 0j) -> Configuration:
    return Configuration(kind="disk", z=z, w=w, kappa=kappa)


def two_slit_config(kappa: float) -> Configuration:
    return Configuration(kind="two_slit_plane", z=-1 + 0j, w=1 + 0j, kappa=kappa)


# ---------------------------------------------------------------------------
# base maps onto the half-plane (before Mobius normalization)


def disk_to_halfplane(zeta):
    return 1j * (1 + zeta) / (1 - zeta)


def disk_to_halfplane_deriv(zeta):
    return 2j / (1 - zeta) ** 2


def halfplane_to_disk(W):
    return (W - 1j) / (W + 1j)


def two_slit_to_halfplane(z):
    psi = np.exp(1j * np.arcsin(z))
    return (1j * psi - 1) / (1j * psi + 1)


def two_slit_to_halfplane_deriv(z):
    psi = np.exp(1j * np.arcsin(z))
    return -2 * psi / ((1j * psi + 1) ** 2 * np.sqrt(1 - z * z))


def halfplane_to_two_slit(W):
    psi = -1j * (1 + W) / (1 - W)
    return np.sin(-1j * np.log(psi))


def _base_map(cfg: Configuration, zeta: complex) -> tuple[complex, complex]:
    """(phi(zeta), phi'(zeta)) for the un-normalized map D -> H."""
    if cfg.kind == "half_plane":
        return zeta, 1.0 + 0j
    if cfg.kind == "disk":
        if abs(zeta) >= 1:
            raise PreconditionError("point not inside the unit disk")
        return complex(disk_to_halfplane(zeta)), complex(disk_to_halfplane_deriv(zeta))
    if cfg.kind == "two_slit_plane":
        if zeta.imag == 0 and abs(zeta.real) >= 1:
            raise PreconditionError("point lies on a boundary ray")
        return complex(two_slit_to_halfplane(zeta)), complex(two_slit_to_halfplane_deriv(zeta))
    # slit half-plane: the tracked Loewner map
    st = cfg.state
    return map_point(st, zeta), map_derivative(st, zeta) * 1.0 + 0j  # modulus only


def _marked_images(cfg: Configuration) -> tuple[complex, complex]:
    if cfg.kind == "half_plane":
        return cfg.z, cfg.w
    if cfg.kind == "disk":
        b1 = INF if cfg.z == 1 else complex(disk_to_halfplane(cfg.z))
        b2 = INF if cfg.w == 1 else complex(disk_to_halfplane(cfg.w))
        return b1, b2
    if cfg.kind == "two_slit_plane":
        b1 = INF if cfg.z == 1 else complex(two_slit_to_halfplane(cfg.z))
        b2 = INF if cfg.w == 1 else complex(two_slit_to_halfplane(cfg.w))
        return b1, b2
    # slit half-plane: tip maps to the final driver value, w stays infinite
    return complex(cfg.state.driver_values()[-1]), INF


def _normalizer(b1: complex, b2: complex) -> tuple[float, float, float, float]:
    """Real Mobius coefficients (A,B,C,D), positive determinant, sending
    b1 to 0 and b2 to infinity."""
    f1, f2 = _finite(b1), _finite(b2)
    if f1 and f2:
        x1, x2 = b1.real, b2.real
        s = 1.0 if x2 > x1 else -1.0
        return s, -s * x1, -1.0, x2
    if f1:
        return 1.0, -b1.real, 0.0, 1.0
    if f2:
        return 0.0, 1.0, -1.0, b2.real
    raise PreconditionError("both marked points at infinity")


def _mobius(coef, W):
    A, B, C, D = coef
    return (A * W + B) / (C * W + D)


def _mobius_deriv(coef, W):
    A, B, C, D = coef
    return (A * D - B * C) / (C * W + D) ** 2


def config_map(cfg: Configuration, zeta: complex) -> tuple[complex, complex]:
    """(T(zeta), T'(zeta)) for a map T sending (D, z, w) to (H, 0, inf)."""
    W, dW = _base_map(cfg, zeta)
    if W.imag <= 0:
        raise PreconditionError("point does not map to the open half-plane")
    coef = _normalizer(*_marked_images(cfg))
    return complex(_mobius(coef, W)), complex(_mobius_deriv(coef, W) * dW)


# ---------------------------------------------------------------------------
# Green values


def green_halfplane(zeta, p: GreenParams):
    """The half-plane formula for the chord 0 to infinity; vectorized."""
    z = np.asarray(zeta, dtype=np.complex128)
    im = z.imag
    if np.any(im <= 0):
        raise PreconditionError("green_halfplane needs Im > 0")
    sin_arg = im / np.abs(z)
    out = p.c * im ** (p.d - 2.0) * sin_arg**p.fouram1
    if np.ndim(zeta) == 0:
        return float(out)
    return out


def green_config(cfg: Configuration, zeta: complex, p: GreenParams | None = None) -> float:
    if p is None:
        p = GreenParams(cfg.kappa)
    T, dT = config_map(cfg, zeta)
    return float(abs(dT) ** (2.0 - p.d) * green_halfplane(T, p))


def sin_arg_factor(cfg: Configuration, zeta: complex) -> float:
    """sin arg T(zeta): the harmonic factor of the Green's function.

    Independent of the normalizing map's free scaling.
    """
    T, _ = config_map(cfg, zeta)
    return T.imag / abs(T)


def conformal_radius(cfg: Configuration, zeta: complex) -> float:
    """Conformal radius of the domain about zeta; marked points play no role."""
    W, dW = _base_map(cfg, zeta)
    if W.imag <= 0:
        raise PreconditionError("point not interior")
    return 2.0 * W.imag / abs(dW)


def boundary_distance_lower(cfg: Configuration, zeta: complex) -> float:
    """dist(zeta, boundary): exact for the explicit domains, the Koebe
    lower bound crad/4 for Loewner slit domains."""
    if cfg.kind == "half_plane":
        return zeta.imag
    if cfg.kind == "disk":
        return 1.0 - abs(zeta)
    if cfg.kind == "two_slit_plane":
        x, y = zeta.real, zeta.imag
        d1 = abs(y) if x >= 1 else math.hypot(x - 1, y)
        d2 = abs(y) if x <= -1 else math.hypot(x + 1, y)
        return min(d1, d2)
    return conformal_radius(cfg, zeta) / 4.0


def main_estimate_check(cfg: Configuration, zeta: complex, zeta_prime: complex,
                        p: GreenParams | None = None) -> tuple[float, float]:
    """(log G(zeta)/G(zeta'), r) with r = |zeta-zeta'| / dist(zeta, boundary).

    The bound |log ratio| <= c*r holds for r <= 1/2 with an unspecified
    constant; callers fit c empirically.
    """
    if p is None:
        p = GreenParams(cfg.kappa)
    r = abs(zeta - zeta_prime) / boundary_distance_lower(cfg, zeta)
    if r > 0.5:
        raise PreconditionError(f"separation ratio r={r:.3g} exceeds 1/2")
    if zeta == zeta_prime:
        return 0.0, 0.0
    g0 = green_config(cfg, zeta, p)
    g1 = green_config(cfg, zeta_prime, p)
    return math.log(g0 / g1), r


def two_point_green_comparison(zeta: complex, omega: complex, p: GreenParams) -> float:
    """Comparison value for the unordered two-point Green's function in
    (H, 0, inf): G(zeta) G(omega) q^(d-2) (S(zeta) v q)^(-beta), with
    q = |zeta-omega| / |omega| after ordering |zeta| < |omega|."""
    if zeta == omega:
        raise PreconditionError("two-point comparison needs distinct points")
    if abs(zeta) > abs(omega):
        zeta, omega = omega, zeta
    q = abs(zeta - omega) / abs(omega)
    s = zeta.imag / abs(zeta)
    return (
        green_halfplane(zeta, p)
        * green_halfplane(omega, p)
        * q ** (p.d - 2.0)
        * max(s, q) ** (-p.beta)
    )


def tail_integrability(kappa: float) -> tuple[bool, float]:
    """Whether the Green's function of a finite-endpoint half-plane
    configuration is integrable at infinity, plus the radial integrand
    exponent 4a - 1/(4a) - 3 governing it."""
    if not (0 < kappa <= 4):
        raise PreconditionError(f"kappa must be in (0, 4], got {kappa}")
    fa = 8.0 / kappa
    return bool(kappa < TAIL_KAPPA_THRESHOLD), float(fa - 1.0 / fa - 3.0)


# ---------------------------------------------------------------------------
# quadrature


def annulus_green_integral(kappa: float, r_lo: float, r_hi: float,
                           x: float = 0.0, y: float = 1.0,
                           n_r: int = 96, n_t: int = 96) -> float:
    """Integral of G over {r_lo < |zeta| < r_hi} in H for the chord x to y
    (finite endpoints).  Log-radial Gauss grid; the annulus must avoid the
    endpoint singularities."""
    if r_lo <= max(abs(x), abs(y)):
        raise PreconditionError("annulus must exclude the marked points")
    p = GreenParams(kappa)
    cfg = halfplane_config(kappa, x=x, y=complex(y))
    coef = _normalizer(*_marked_images(cfg))
    sn, sw = np.polynomial.legendre.leggauss(n_r)
    tn, tw = np.polynomial.legendre.leggauss(n_t)
    s = 0.5 * (sn + 1) * (math.log(r_hi) - math.log(r_lo)) + math.log(r_lo)
    ws = 0.5 * (math.log(r_hi) - math.log(r_lo)) * sw
    th = 0.5 * (tn + 1) * math.pi
    wt = 0.5 * math.pi * tw
    r = np.exp(s)
    Z = r[:, None] * np.exp(1j * th[None, :])
    T = _mobius(coef, Z)
    dT = _mobius_deriv(coef, Z)
    vals = np.abs(dT) ** (2.0 - p.d) * green_halfplane(T, p)
    # dA = r dr dtheta = r^2 ds dtheta on the log-radial grid
    integ = (vals * (r**2)[:, None] * ws[:, None] * wt[None, :]).sum()
    return float(integ)


def disk_green_mass(cfg: Configuration, p: GreenParams | None = None, *,
                    s_z: float = 0.0, s_w: float = 0.0, rho_max: float = 1.0,
                    inner_margin: float = 0.0, n_r: int = 200, n_t: int = 400) -> float:
    """Integral of G over the unit disk minus B(z, s_z), B(w, s_w), minus an
    inner margin off the boundary, clipped to |zeta| <= rho_max.  Polar
    Gauss grid with masking; accuracy is limited by the masked cells, so
    callers comparing against it should allow a percent-level tolerance."""
    if cfg.kind != "disk":
        raise PreconditionError("disk_green_mass expects a disk configuration")
    if p is None:
        p = GreenParams(cfg.kappa)
    rn, rw = np.polynomial.legendre.leggauss(n_r)
    tn, tw = np.polynomial.legendre.leggauss(n_t)
    rmax = min(rho_max, 1.0 - inner_margin)
    r = 0.5 * (rn + 1) * rmax
    wr = 0.5 * rmax * rw
    th = (tn + 1) * math.pi
    wt = math.pi * tw
    Z = r[:, None] * np.exp(1j * th[None, :])
    mask = np.ones(Z.shape, dtype=bool)
    if s_z > 0:
        mask &= np.abs(Z - cfg.z) > s_z
    if s_w > 0:
        mask &= np.abs(Z - cfg.w) > s_w
    W = disk_to_halfplane(Z)
    dW = disk_to_halfplane_deriv(Z)
    coef = _normalizer(*_marked_images(cfg))
    T = _mobius(coef, W)
    dT = _mobius_deriv(coef, W) * dW
    vals = np.abs(dT) ** (2.0 - p.d) * green_halfplane(T, p)
    vals = np.where(mask, vals, 0.0)
    return float((vals * r[:, None] * wr[:, None] * wt[None, :]).sum())


# ---------------------------------------------------------------------------
# Brownian (walk-on-spheres) oracle for the conformal radius


@njit(cache=True)
def _wos_disk_kernel(zx: float, zy: float, n_walks: int, h: float, seed: int):
    np.random.seed(seed)
    acc = 0.0
    acc2 = 0.0
    for _ in range(n_walks):
        x = zx
        y = zy
        for _ in range(100000):
            r = math.sqrt(x * x + y * y)
            dist = 1.0 - r
            if dist < h:
                break
            ang = np.random.uniform(0.0, 2.0 * math.pi)
            x += dist * math.cos(ang)
            y += dist * math.sin(ang)
        r = math.sqrt(x * x + y * y)
        if r > 0.0:
            bx, by = x / r, y / r
        else:
            bx, by = 1.0, 0.0
        v = 0.5 * math.log((bx - zx) ** 2 + (by - zy) ** 2)
        acc += v
        acc2 += v * v
    mean = acc / n_walks
    var = max(acc2 / n_walks - mean * mean, 0.0) / n_walks
    return mean, math.sqrt(var)


@njit(cache=True)
def _wos_two_slit_kernel(zx: float, zy: float, n_walks: int, h: float, seed: int):
    np.random.seed(seed)
    acc = 0.0
    acc2 = 0.0
    for _ in range(n_walks):
        x = zx
        y = zy
        for _ in range(200000):
            d1 = abs(y) if x >= 1.0 else math.hypot(x - 1.0, y)
            d2 = abs(y) if x <= -1.0 else math.hypot(x + 1.0, y)
            dist = d1 if d1 < d2 else d2
            if dist < h:
                break
            ang = np.random.uniform(0.0, 2.0 * math.pi)
            x += dist * math.cos(ang)
            y += dist * math.sin(ang)
        # project to the nearest ray point
        if x >= 1.0:
            b1x, b1y = x, 0.0
        else:
            b1x, b1y = 1.0, 0.0
        if x <= -1.0:
            b2x, b2y = x, 0.0
        else:
            b2x, b2y = -1.0, 0.0
        if (x - b1x) ** 2 + (y - b1y) ** 2 <= (x - b2x) ** 2 + (y - b2y) ** 2:
            bx, by = b1x, b1y
        else:
            bx, by = b2x, b2y
        v = 0.5 * math.log((bx - zx) ** 2 + (by - zy) ** 2)
        acc += v
        acc2 += v * v
    mean = acc / n_walks
    var = max(acc2 / n_walks - mean * mean, 0.0) / n_walks
    return mean, math.sqrt(var)


def conformal_radius_mc(kind: str, zeta: complex, n_walks: int = 100_000,
                        seed: int = 0, h_rel: float = 1e-3) -> tuple[float, float]:
    """Monte Carlo conformal radius via exp E log|B_exit - zeta|.

    Returns (estimate, standard error of the estimate).  Serves as the
    independent oracle for the map-based closed forms; bias is O(h_rel).
    """
    if kind == "disk":
        scale = 1.0 - abs(zeta)
        mean, se = _wos_disk_kernel(zeta.real, zeta.imag, n_walks, h_rel * scale, seed)
    elif kind == "two_slit_plane":
        x, y = zeta.real, zeta.imag
        d1 = abs(y) if x >= 1 else math.hypot(x - 1, y)
        d2 = abs(y) if x <= -1 else math.hypot(x + 1, y)
        scale = min(d1, d2)
        mean, se = _wos_two_slit_kernel(zeta.real, zeta.imag, n_walks, h_rel * scale, seed)
    else:
        raise PreconditionError(f"no Brownian oracle for domain kind {kind!r}")
    est = math.exp(mean)
    return est, est * se


# ---------------------------------------------------------------------------
# calibration storage


def load_calibration(path: str) -> dict:
    if not os.path.exists(path):
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_calibration(path: str, table: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table, fh, indent=2, sort_keys=True)
        fh.write("\n")


def calibration_key(kappa: float) -> str:
    return f"{kappa:.6g}"
