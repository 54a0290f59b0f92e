from __future__ import annotations

import numpy as np
import pytest

from sleagg.curves import (
    Curve,
    CurveMetricKind,
    concat,
    dist_dc,
    dist_dd_upper,
    first_circle_hit,
    oscillation,
    pairwise_distances,
    reverse,
    thin_curve,
    truncate_at_time,
)
from sleagg.errors import PreconditionError

from .conftest import make_polyline, segment


def ramp(rate: float) -> Curve:
    """gamma(t) = rate*t clipped at 1, on [0, 1]."""
    t_knee = 1.0 / rate
    ts = np.array([0.0, t_knee, 1.0])
    ps = np.array([0.0 + 0.0j, 1.0 + 0.0j, 1.0 + 0.0j])
    if t_knee >= 1.0:
        ts = np.array([0.0, 1.0])
        ps = np.array([0.0 + 0.0j, rate + 0.0j])
    return Curve(times=ts, points=ps)


class TestCurveInvariants:
    def test_times_must_start_at_zero(self):
        with pytest.raises(PreconditionError):
            Curve(times=np.array([0.5, 1.0]), points=np.zeros(2, dtype=complex))

    def test_times_must_be_nondecreasing(self):
        with pytest.raises(PreconditionError):
            Curve(times=np.array([0.0, 2.0, 1.0]), points=np.zeros(3, dtype=complex))

    def test_nonfinite_points_rejected(self):
        with pytest.raises(PreconditionError):
            Curve(times=np.array([0.0, 1.0]), points=np.array([0j, complex(np.inf, 0)]))

    def test_length_one_curve_has_zero_duration(self):
        c = Curve(times=np.zeros(1), points=np.array([1.0 + 2.0j]))
        assert c.duration == 0.0


class TestOscillation:
    def test_constant_curve_is_zero(self):
        c = segment(1j, 1j, 2.0, n=5)
        assert oscillation(c, 0.7) == 0.0

    def test_unit_speed_segment(self):
        # Lipschitz-1 path: osc(delta) = delta
        c = segment(0, 1, 1.0, n=101)
        assert oscillation(c, 0.25) == pytest.approx(0.25, abs=1e-9)

    @pytest.mark.parametrize("n", [1, 3, 6])
    def test_clipped_ramp_full_window(self, n):
        # gamma(t) = 2^n t clipped at 1: osc over the whole window is 1
        assert oscillation(ramp(2.0**n), 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_delta(self, rng):
        c = make_polyline(rng)
        deltas = np.linspace(0.05, c.duration, 12)
        vals = [oscillation(c, d) for d in deltas]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_rejects_nonpositive_delta(self):
        c = segment(0, 1, 1.0)
        with pytest.raises(PreconditionError):
            oscillation(c, 0.0)


class TestDistDc:
    def test_identical_curves(self, rng):
        c = make_polyline(rng)
        assert dist_dc(c, c) == 0.0

    def test_constant_curves_duration_gap(self):
        a = segment(1j, 1j, 1.0, n=3)
        b = segment(1j, 1j, 3.0, n=4)
        assert dist_dc(a, b) == pytest.approx(2.0, abs=1e-12)

    def test_clipped_ramp_pair_lower_bound(self):
        # sup term at the rescaled quarter point is 1/2 for rates 2 and 4
        assert dist_dc(ramp(2.0), ramp(4.0)) >= 0.5 - 1e-9

    def test_symmetry(self, rng):
        for _ in range(30):
            a, b = make_polyline(rng), make_polyline(rng)
            assert dist_dc(a, b) == pytest.approx(dist_dc(b, a), rel=1e-12)

    def test_triangle_inequality(self, rng):
        for _ in range(30):
            a, b, c = (make_polyline(rng) for _ in range(3))
            slack = 1e-9
            assert dist_dc(a, c) <= dist_dc(a, b) + dist_dc(b, c) + slack


class TestDistDdUpper:
    def test_identical_curves(self, rng):
        c = make_polyline(rng)
        assert dist_dd_upper(c, c) == 0.0

    @pytest.mark.parametrize("m,n", [(1, 2), (1, 4), (2, 5)])
    def test_clipped_ramp_family_bound(self, m, n):
        # reparametrization absorbs the rate change; only the 2^-m shoulder is left
        val = dist_dd_upper(ramp(2.0**m), ramp(2.0**n))
        assert val <= 2.0**-m + 0.02

    def test_below_dc(self, rng):
        for _ in range(40):
            a, b = make_polyline(rng), make_polyline(rng)
            assert dist_dd_upper(a, b) <= dist_dc(a, b) + 1e-9

    def test_sandwich(self, rng):
        # dd <= dc <= dd + osc_b(2 dd) + slack
        for _ in range(40):
            a, b = make_polyline(rng), make_polyline(rng)
            dd = dist_dd_upper(a, b)
            dc = dist_dc(a, b)
            osc = oscillation(b, max(2.0 * dd, 1e-12))
            assert dc <= dd + osc + 0.05 * max(1.0, dc)

    def test_symmetry(self, rng):
        for _ in range(30):
            a, b = make_polyline(rng), make_polyline(rng)
            assert dist_dd_upper(a, b) == pytest.approx(dist_dd_upper(b, a), rel=1e-12)

    def test_triangle_inequality_as_alignment_cost(self, rng):
        for _ in range(30):
            a, b, c = (make_polyline(rng) for _ in range(3))
            assert dist_dd_upper(a, c) <= dist_dd_upper(a, b) + dist_dd_upper(b, c) + 1e-9


class TestReverse:
    def test_constant_fixed_point(self):
        c = segment(2j, 2j, 1.5, n=4)
        r = reverse(c)
        assert np.array_equal(r.points, c.points[::-1])
        assert r.duration == c.duration

    def test_involution(self, rng):
        c = make_polyline(rng)
        rr = reverse(reverse(c))
        assert np.allclose(rr.times, c.times)
        assert np.array_equal(rr.points, c.points)

    def test_segment_swaps_endpoints(self):
        c = segment(0, 1 + 1j, 2.0, n=7)
        r = reverse(c)
        assert r.points[0] == 1 + 1j
        assert r.points[-1] == 0
        assert r.duration == pytest.approx(2.0)

    def test_preserves_both_metrics(self, rng):
        for _ in range(25):
            a, b = make_polyline(rng), make_polyline(rng)
            assert dist_dc(reverse(a), reverse(b)) == pytest.approx(dist_dc(a, b), rel=1e-10, abs=1e-12)
            assert dist_dd_upper(reverse(a), reverse(b)) == pytest.approx(dist_dd_upper(a, b), rel=1e-10, abs=1e-12)


class TestConcat:
    def test_zero_duration_identity(self, rng):
        c = make_polyline(rng)
        tail = Curve(times=np.zeros(1), points=np.array([c.points[-1]]))
        glued = concat(c, tail)
        assert glued.duration == c.duration
        assert np.array_equal(glued.points, c.points)

    def test_durations_add(self):
        a = segment(0, 1, 1.0)
        b = segment(1, 1 + 1j, 2.0)
        assert concat(a, b).duration == pytest.approx(3.0)

    def test_endpoint_mismatch_rejected(self):
        a = segment(0, 1, 1.0)
        b = segment(2, 3, 1.0)
        with pytest.raises(PreconditionError):
            concat(a, b)

    def test_subadditivity(self, rng):
        # dd(concat(a1,b1), concat(a0,b0)) <= dd(a1,a0) + dd(b1,b0) + slack
        for _ in range(25):
            a0, a1 = make_polyline(rng), make_polyline(rng)
            b0 = make_polyline(rng)
            b0 = Curve(times=b0.times, points=b0.points - b0.points[0] + a0.points[-1])
            b1 = make_polyline(rng)
            b1 = Curve(times=b1.times, points=b1.points - b1.points[0] + a1.points[-1])
            lhs = dist_dd_upper(concat(a1, b1), concat(a0, b0))
            rhs = dist_dd_upper(a1, a0) + dist_dd_upper(b1, b0)
            gap = abs(a1.duration - a0.duration)
            assert lhs <= rhs + gap + 1e-6


class TestToolkit:
    def test_truncate_interpolates(self):
        c = segment(0, 2, 2.0, n=3)
        cut = truncate_at_time(c, 0.5)
        assert cut.duration == pytest.approx(0.5)
        assert cut.points[-1] == pytest.approx(0.5)

    def test_first_circle_hit_matches_scan(self, rng):
        for _ in range(20):
            c = make_polyline(rng)
            center = c.points[len(c.points) // 2] + 0.05
            radius = 0.3
            t_hit = first_circle_hit(c, center, radius)
            inside = np.abs(c.points - center) <= radius
            if np.isnan(t_hit):
                assert not inside.any()
            else:
                k = np.argmax(inside) if inside.any() else len(inside)
                # the true hit is on or before the first inside vertex
                if inside.any():
                    assert t_hit <= c.times[k] + 1e-12

    def test_thin_curve_keeps_endpoints_and_duration(self, rng):
        c = make_polyline(rng, n_min=30, n_max=60)
        t = thin_curve(c, 8)
        assert len(t.points) <= 8
        assert t.points[0] == c.points[0]
        assert t.points[-1] == c.points[-1]
        assert t.duration == c.duration

    def test_pairwise_matches_scalar(self, rng):
        curves = [make_polyline(rng) for _ in range(5)]
        mat = pairwise_distances(curves, curves, kind=CurveMetricKind.DD_UPPER)
        for i in range(5):
            for j in range(5):
                assert mat[i, j] == pytest.approx(dist_dd_upper(curves[i], curves[j]), rel=1e-12, abs=1e-12)
