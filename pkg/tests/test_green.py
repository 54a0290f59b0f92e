from __future__ import annotations

import numpy as np
import pytest

from sleagg.errors import PreconditionError
from sleagg.green import (
    Configuration,
    GreenParams,
    TAIL_KAPPA_THRESHOLD,
    annulus_green_integral,
    conformal_radius,
    conformal_radius_mc,
    disk_config,
    green_config,
    green_halfplane,
    halfplane_config,
    main_estimate_check,
    tail_integrability,
    two_point_green_comparison,
)


class TestGreenParams:
    def test_exponents_one_place(self):
        p = GreenParams(8.0 / 3.0)
        assert p.a == pytest.approx(0.75)
        assert p.d == pytest.approx(4.0 / 3.0)
        assert p.fouram1 == pytest.approx(2.0)
        assert p.beta == pytest.approx(2.0 + p.d - 2.0)

    @pytest.mark.parametrize("kappa", [2.0, 8.0 / 3.0, 3.0, 4.0])
    def test_invariant_ranges(self, kappa):
        p = GreenParams(kappa)
        assert 1.0 < p.d <= 1.5
        assert p.beta > 0
        assert p.a * kappa == pytest.approx(2.0)

    def test_rejects_out_of_range(self):
        with pytest.raises(PreconditionError):
            GreenParams(5.0)
        with pytest.raises(PreconditionError):
            GreenParams(0.0)


class TestGreenHalfplane:
    def test_unit_point(self):
        assert green_halfplane(1j, GreenParams(4.0)) == pytest.approx(1.0)
        assert green_halfplane(1j, GreenParams(8.0 / 3.0)) == pytest.approx(1.0)

    def test_closed_forms(self):
        # (Im)^(d-2) (sin arg)^(4a-1): 1+i at kappa=8/3 -> (sin pi/4)^2 = 1/2
        assert green_halfplane(1 + 1j, GreenParams(8.0 / 3.0)) == pytest.approx(0.5)
        # 2i at kappa=4 -> 2^(-1/2)
        assert green_halfplane(2j, GreenParams(4.0)) == pytest.approx(2.0 ** -0.5)

    def test_rejects_boundary_and_lower(self):
        p = GreenParams(4.0)
        for z in (1.0 + 0j, 0j, 0.3 - 0.2j):
            with pytest.raises(PreconditionError):
                green_halfplane(z, p)

    def test_reflection_symmetry(self):
        p = GreenParams(8.0 / 3.0)
        for z in (0.4 + 0.9j, 1.7 + 0.1j, -2.0 + 3.0j):
            assert green_halfplane(z, p) == green_halfplane(-np.conj(z), p)

    def test_maximal_on_imaginary_axis(self):
        p = GreenParams(3.0)
        for radius in (0.5, 1.0, 4.0):
            th = np.linspace(0.02, np.pi - 0.02, 101)
            vals = green_halfplane(radius * np.exp(1j * th), p)
            assert np.argmax(vals) == 50
            assert np.all(np.diff(vals[:51]) > 0)

    def test_vectorized_matches_scalar(self):
        p = GreenParams(8.0 / 3.0)
        zs = np.array([1j, 2j, 1 + 1j, -0.3 + 0.8j])
        arr = green_halfplane(zs, p)
        for z, v in zip(zs, arr):
            assert v == green_halfplane(complex(z), p)


class TestGreenConfig:
    def test_halfplane_equals_formula(self):
        cfg = halfplane_config(4.0)
        z = 0.3 + 0.7j
        assert green_config(cfg, z) == pytest.approx(
            float(green_halfplane(z, GreenParams(4.0))))

    def test_scaling_covariance(self):
        # f(z) = 2z fixes (0, inf): G(zeta) = 2^(2-d) G(2 zeta)
        p = GreenParams(8.0 / 3.0)
        for z in (1j, 0.5 + 1.2j, -0.8 + 0.9j):
            lhs = green_halfplane(z, p)
            rhs = 2.0 ** (2.0 - p.d) * green_halfplane(2 * z, p)
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_disk_two_mobius_choices_agree(self):
        # map independence: any H-automorphism fixing (0, inf) composed on top
        # of the disk-to-halfplane map leaves the covariant value unchanged
        kappa = 8.0 / 3.0
        p = GreenParams(kappa)
        cfg = disk_config(kappa)

        def push(f, df, w):
            return abs(df(w)) ** (2.0 - p.d) * float(green_halfplane(f(w), p))

        f1 = lambda w: 1j * (1 + w) / (1 - w)
        df1 = lambda w: 2j / (1 - w) ** 2
        f2 = lambda w: 2.0 * f1(w)
        df2 = lambda w: 2.0 * df1(w)
        for w in (0j, 0.3 + 0.2j, -0.5 + 0.1j, 0.1 - 0.6j):
            v1, v2 = push(f1, df1, w), push(f2, df2, w)
            assert abs(v1 - v2) <= 1e-10 * abs(v1)
            assert green_config(cfg, w) == pytest.approx(v1, rel=1e-10)

    def test_finite_chord_manual_oracle(self):
        # (H, 0, 1) via T(z) = z/(1-z), T: 0 -> 0, 1 -> inf
        kappa = 8.0 / 3.0
        p = GreenParams(kappa)
        cfg = Configuration(kind="half_plane", z=0.0, w=1.0, kappa=kappa)
        for zeta in (0.3 + 0.4j, 0.5 + 0.1j, -1.0 + 2.0j):
            T = zeta / (1 - zeta)
            dT = 1 / (1 - zeta) ** 2
            manual = abs(dT) ** (2.0 - p.d) * float(green_halfplane(T, p))
            assert green_config(cfg, zeta) == pytest.approx(manual, rel=1e-12)

    def test_rejects_exterior_point(self):
        with pytest.raises(PreconditionError):
            green_config(disk_config(4.0), 1.2 + 0.1j)
        with pytest.raises(PreconditionError):
            Configuration(kind="half_plane", z=1.0, w=1.0, kappa=4.0)

    def test_mobius_covariance_randomized(self):
        # 100 random real Mobius maps transporting a finite-chord configuration
        rng = np.random.default_rng(727)
        kappa = 8.0 / 3.0
        p = GreenParams(kappa)
        cfg = Configuration(kind="half_plane", z=0.0, w=1.0, kappa=kappa)
        zeta = 0.4 + 0.6j
        base = green_config(cfg, zeta)
        for _ in range(100):
            m = rng.normal(size=4)
            det = m[0] * m[3] - m[1] * m[2]
            if abs(det) < 1e-3:
                continue
            if det < 0:
                m[0], m[1] = -m[0], -m[1]
                det = -det
            m = m / np.sqrt(det)
            f = lambda z: (m[0] * z + m[1]) / (m[2] * z + m[3])
            df = lambda z: 1.0 / (m[2] * z + m[3]) ** 2
            cfg2 = Configuration(kind="half_plane", z=f(0.0), w=f(1.0), kappa=kappa)
            rhs = abs(df(zeta)) ** (2.0 - p.d) * green_config(cfg2, f(zeta))
            assert abs(base - rhs) <= 1e-10 * base


class TestMainEstimate:
    def test_coincident_points(self):
        assert main_estimate_check(halfplane_config(4.0), 1j, 1j) == (0.0, 0.0)

    def test_closed_form_log_ratio(self):
        cfg = halfplane_config(4.0)
        p = GreenParams(4.0)
        lr, r = main_estimate_check(cfg, 1j, 1j + 0.1)
        assert r == pytest.approx(0.1)
        expected = np.log(float(green_halfplane(1j, p)) /
                          float(green_halfplane(1j + 0.1, p)))
        assert lr == pytest.approx(expected, rel=1e-12)
        assert abs(lr) <= 0.5 * r  # fitted constant for this configuration

    def test_dyadic_ratio_stays_bounded(self):
        cfg = halfplane_config(4.0)
        ratios = []
        for k in range(1, 10):
            lr, r = main_estimate_check(cfg, 1j, 1j + 2.0 ** -k * np.exp(0.4j))
            ratios.append(abs(lr) / r)
        assert max(ratios) < 1.0
        # the ratio settles to the local gradient rather than blowing up
        assert abs(ratios[-1] - ratios[-2]) < 0.02 * ratios[-1]

    def test_rejects_large_separation(self):
        with pytest.raises(PreconditionError):
            main_estimate_check(halfplane_config(4.0), 1j, 1j + 0.6)


class TestConformalRadius:
    def test_closed_forms(self):
        assert conformal_radius(disk_config(4.0), 0j) == pytest.approx(1.0)
        assert conformal_radius(halfplane_config(4.0), 1j) == pytest.approx(2.0)
        assert conformal_radius(halfplane_config(4.0), -3.0 + 0.4j) == pytest.approx(0.8)
        z = 0.3 + 0.2j
        assert conformal_radius(disk_config(4.0), z) == pytest.approx(1 - abs(z) ** 2)

    def test_brownian_oracle_disk_center(self):
        # walk-on-spheres from the center exits on the first sphere, so the
        # estimate is exact up to the stopping shell
        val, se = conformal_radius_mc("disk", 0j, n_walks=100_000, seed=3)
        assert abs(val - 1.0) <= max(3 * se, 1e-9)

    def test_brownian_oracle_disk_off_center(self):
        z = 0.3 + 0.2j
        val, se = conformal_radius_mc("disk", z, n_walks=100_000, seed=3)
        true = 1 - abs(z) ** 2
        assert se > 0
        assert abs(val - true) <= 3 * se + 1e-3 * true


class TestTwoPointComparison:
    def test_swap_symmetric(self):
        p = GreenParams(4.0)
        assert two_point_green_comparison(1j, 2j, p) == \
            two_point_green_comparison(2j, 1j, p)
        assert two_point_green_comparison(0.5 + 0.5j, -1 + 2j, p) == \
            two_point_green_comparison(-1 + 2j, 0.5 + 0.5j, p)

    def test_plug_in_closed_form(self):
        # kappa=4, beta=1/2: zeta=i, omega=2i -> G(i) G(2i) (1/2)^(-1/2) (1 v 1/2)^(-1/2)
        p = GreenParams(4.0)
        v = two_point_green_comparison(1j, 2j, p)
        gi = float(green_halfplane(1j, p))
        g2i = float(green_halfplane(2j, p))
        assert v == pytest.approx(gi * g2i * (0.5 ** -0.5) * 1.0, rel=1e-12)

    def test_rejects_coincident(self):
        with pytest.raises(PreconditionError):
            two_point_green_comparison(1j, 1j, GreenParams(4.0))

    def test_short_distance_divergence_rate(self):
        p = GreenParams(4.0)
        zeta = 0.7 + 1.1j
        qs = np.array([2.0 ** -k for k in range(3, 11)])
        vals = np.array([two_point_green_comparison(zeta, zeta * (1 + q), p)
                         for q in qs])
        slope = np.polyfit(np.log(qs), np.log(vals), 1)[0]
        assert slope == pytest.approx(p.d - 2.0, abs=0.01)


class TestTailIntegrability:
    def test_predicate_values(self):
        ok3, exp3 = tail_integrability(3.0)
        ok4, exp4 = tail_integrability(4.0)
        assert ok3 is True and ok4 is False
        a3, a4 = 2.0 / 3.0, 0.5
        assert exp3 == pytest.approx(4 * a3 - 1 / (4 * a3) - 3)
        assert exp4 == pytest.approx(4 * a4 - 1 / (4 * a4) - 3)

    def test_threshold_location(self):
        thr = 8.0 * (np.sqrt(2.0) - 1.0)
        assert TAIL_KAPPA_THRESHOLD == pytest.approx(thr, rel=1e-12)
        assert tail_integrability(thr - 1e-6)[0] is True
        assert tail_integrability(thr + 1e-6)[0] is False

    @pytest.mark.parametrize("kappa", [3.0, 4.0])
    def test_annulus_quadrature_growth_matches_exponent(self, kappa):
        # shell mass over [R, 4R] scales like R^(-exponent-1): geometric decay
        # exactly when the predicate reports an integrable tail
        ok, expo = tail_integrability(kappa)
        shells = []
        for r_lo, r_hi in ((4.0, 16.0), (16.0, 64.0), (64.0, 256.0)):
            shells.append(annulus_green_integral(kappa, r_lo, r_hi))
        g1 = np.log(shells[1] / shells[0]) / np.log(4.0)
        g2 = np.log(shells[2] / shells[1]) / np.log(4.0)
        assert g2 == pytest.approx(-expo - 1.0, abs=0.03)
        assert abs(g2 - g1) < 0.05
        assert (g2 < 0) == ok
