from __future__ import annotations

import numpy as np
import pytest

from sleagg.curves import Curve, CurveMetricKind, dist_dd_upper
from sleagg.errors import PreconditionError
from sleagg.measures import (
    PartitionSpec,
    PathEnsemble,
    dist_ds,
    mixture,
    prokhorov,
    riemann_sum,
    systematic_resample,
    total_mass_bounds_check,
    weighted_average_identity_check,
)

from .conftest import make_polyline, segment


def atom(curve: Curve, w: float = 1.0) -> PathEnsemble:
    return PathEnsemble(weights=np.array([w]), curves=(curve,))


def scale(ens: PathEnsemble, a: float) -> PathEnsemble:
    return PathEnsemble(weights=ens.weights * a, curves=ens.curves)


def random_ensemble(rng, n_atoms: int = 4, mass_scale: float = 1.0) -> PathEnsemble:
    ws = rng.random(n_atoms) * mass_scale + 0.05
    cs = tuple(make_polyline(rng, n_min=3, n_max=8) for _ in range(n_atoms))
    return PathEnsemble(weights=ws, curves=cs)


class TestEnsembleInvariants:
    def test_rejects_nonpositive_weights(self, rng):
        c = make_polyline(rng)
        with pytest.raises(PreconditionError):
            PathEnsemble(weights=np.array([0.0]), curves=(c,))

    def test_normalized_sums_to_one(self, rng):
        ens = random_ensemble(rng, 6)
        assert ens.normalized().weights.sum() == pytest.approx(1.0, rel=1e-12)

    def test_total_mass(self, rng):
        ens = random_ensemble(rng, 5)
        assert ens.total_mass == pytest.approx(ens.weights.sum(), rel=1e-12)


class TestProkhorov:
    def test_identical_is_zero(self, rng):
        ens = random_ensemble(rng, 4)
        assert prokhorov(ens, ens) == pytest.approx(0.0, abs=2e-6)

    def test_pure_scaling(self, rng):
        # d(mu, a*mu) = (a-1)|mu| for a >= 1
        ens = random_ensemble(rng, 3)
        val = prokhorov(ens, scale(ens, 1.5))
        assert val == pytest.approx(0.5 * ens.total_mass, rel=1e-3)

    def test_two_unit_atoms(self, rng):
        # brute force for two unit point masses: min(curve distance, 1)
        a = segment(0, 1, 1.0, n=5)
        b = Curve(times=a.times, points=a.points + 0.3)
        d_ab = dist_dd_upper(a, b)
        assert prokhorov(atom(a), atom(b)) == pytest.approx(min(d_ab, 1.0), abs=2e-6)

    def test_far_atoms_saturate_at_mass(self, rng):
        a = segment(0, 1, 1.0)
        b = segment(100, 101, 1.0)
        assert prokhorov(atom(a), atom(b)) == pytest.approx(1.0, abs=2e-6)

    def test_empty_cases(self, rng):
        ens = random_ensemble(rng, 3)
        empty = PathEnsemble(weights=np.zeros(0), curves=())
        assert prokhorov(empty, empty) == 0.0
        assert prokhorov(ens, empty) == pytest.approx(ens.total_mass, rel=1e-6)

    def test_bounded_by_max_mass(self, rng):
        for _ in range(20):
            a = random_ensemble(rng, 3, mass_scale=2.0)
            b = random_ensemble(rng, 4, mass_scale=0.5)
            assert prokhorov(a, b) <= max(a.total_mass, b.total_mass) + 1e-9

    def test_additivity(self, rng):
        # d(mu+mu', nu+nu') <= d(mu,nu) + d(mu',nu')
        for _ in range(15):
            mu, nu = random_ensemble(rng, 3), random_ensemble(rng, 3)
            mu2, nu2 = random_ensemble(rng, 2), random_ensemble(rng, 2)
            ab, _ = mixture([mu, mu2], [mu.total_mass, mu2.total_mass])
            cd, _ = mixture([nu, nu2], [nu.total_mass, nu2.total_mass])
            lhs = prokhorov(ab, cd)
            rhs = prokhorov(mu, nu) + prokhorov(mu2, nu2)
            assert lhs <= rhs + 5e-6

    def test_scaling_bounds(self, rng):
        # a > 1: d(a mu, a nu) <= a d(mu, nu) and d(mu, nu) <= d(a mu, a nu)
        for _ in range(10):
            mu, nu = random_ensemble(rng, 3), random_ensemble(rng, 3)
            a = 1.0 + 2.0 * rng.random()
            d1 = prokhorov(mu, nu)
            d2 = prokhorov(scale(mu, a), scale(nu, a))
            assert d2 <= a * d1 + 5e-6
            assert d1 <= d2 + 5e-6


class TestMassBounds:
    def test_randomized(self, rng):
        for _ in range(20):
            a = random_ensemble(rng, int(rng.integers(1, 5)))
            b = random_ensemble(rng, int(rng.integers(1, 5)))
            rep = total_mass_bounds_check(a, b)
            assert rep["ok"], rep

    def test_identical(self, rng):
        a = random_ensemble(rng, 3)
        rep = total_mass_bounds_check(a, a)
        assert rep["ok"] and rep["distance"] == pytest.approx(0.0, abs=2e-6)

    def test_one_empty_forces_equality(self, rng):
        a = random_ensemble(rng, 3)
        empty = PathEnsemble(weights=np.zeros(0), curves=())
        rep = total_mass_bounds_check(a, empty)
        assert rep["ok"]
        assert rep["distance"] == pytest.approx(a.total_mass, rel=1e-6)


class TestDistDs:
    def test_identical_is_zero(self, rng):
        ens = random_ensemble(rng, 4)
        assert dist_ds(ens, ens) == pytest.approx(0.0, abs=2e-6)

    def test_scale_by_e_gives_one(self, rng):
        ens = random_ensemble(rng, 3)
        assert dist_ds(ens, scale(ens, np.e)) == pytest.approx(1.0, abs=2e-6)

    def test_eighteen_epsilon(self, rng):
        # d_S(mu_i, nu_i) <= eps <= 1 for all i implies d_S(sums) <= 18 eps
        for _ in range(10):
            k = int(rng.integers(2, 5))
            mus = [random_ensemble(rng, 3) for _ in range(k)]
            nus = []
            for m in mus:
                # nearby copy: jitter weights a little
                f = 1.0 + 0.05 * (rng.random() - 0.5)
                nus.append(PathEnsemble(weights=m.weights * f, curves=m.curves))
            eps = max(dist_ds(m, n) for m, n in zip(mus, nus))
            assert eps <= 1.0
            sum_mu, _ = mixture(mus, [m.total_mass for m in mus])
            sum_nu, _ = mixture(nus, [n.total_mass for n in nus])
            lhs = dist_ds(sum_mu, sum_nu)
            assert lhs <= 18.0 * max(eps, 1e-9) + 5e-6


class TestRiemannSum:
    def test_constant_integrand_preserves_mass(self, rng):
        mu = random_ensemble(rng, 3)
        spec = PartitionSpec(rect=(0.0, 1.0, 0.0, 1.0), mesh=0.25)
        out, _ = riemann_sum(lambda x: mu, spec)
        # total cell area is 1, so the mixture reproduces mu's mass
        assert out.total_mass == pytest.approx(mu.total_mass, rel=1e-9)

    def test_mass_linearity(self, rng):
        mus = {}

        def f(x):
            key = (round(x.real, 9), round(x.imag, 9))
            if key not in mus:
                mus[key] = random_ensemble(rng, 2)
            return mus[key]

        spec = PartitionSpec(rect=(0.0, 1.0, 0.0, 1.0), mesh=0.5)
        out, _ = riemann_sum(f, spec)
        # bookkeeping identity: |sum| = sum of area_i * |f(p_i)| over the cells
        cells = spec.cells()
        areas = (cells[:, 1] - cells[:, 0]) * (cells[:, 3] - cells[:, 2])
        pts = spec.sample_points(cells)
        expected = sum(a * f(complex(p)).total_mass for a, p in zip(areas, pts))
        assert out.total_mass == pytest.approx(expected, rel=1e-9)

    def test_refinement_bound_on_synthetic_field(self, rng):
        # f(x) = unit atom at a segment translated by x: osc_f(h) <= |h| sup-scale
        base = segment(0, 1, 1.0, n=6)

        def f(x):
            return atom(Curve(times=base.times, points=base.points + 0.3 * x.real))

        coarse = PartitionSpec(rect=(0.0, 1.0, 0.0, 1.0), mesh=0.5)
        fine = PartitionSpec(rect=(0.0, 1.0, 0.0, 1.0), mesh=0.25)
        sq, _ = riemann_sum(f, fine)
        sp, _ = riemann_sum(f, coarse)
        d = prokhorov(sq, sp, kind=CurveMetricKind.DC)
        # osc_f over one coarse cell: translation by at most 0.3 * mesh diag
        osc = 0.3 * np.sqrt(2.0) * 0.5
        assert d <= osc + 5e-6

    def test_rejects_bad_mesh(self):
        with pytest.raises(PreconditionError):
            PartitionSpec(rect=(0.0, 1.0, 0.0, 1.0), mesh=0.0)


class TestMixtureContraction:
    def test_identical_families(self, rng):
        mus = [random_ensemble(rng, 2) for _ in range(3)]
        rep = weighted_average_identity_check(mus, np.ones(3) / 3.0, mus)
        assert rep["ok"] and rep["lhs"] == pytest.approx(0.0, abs=2e-6)

    def test_single_target_contraction(self, rng):
        mus = [random_ensemble(rng, 2) for _ in range(3)]
        target = random_ensemble(rng, 3)
        rep = weighted_average_identity_check(mus, np.ones(3) / 3.0, target)
        assert rep["ok"], rep

    def test_two_atom_families(self, rng):
        a, b = make_polyline(rng), make_polyline(rng)
        mus = [atom(a), atom(b)]
        nus = [atom(b), atom(a)]
        rep = weighted_average_identity_check(mus, np.array([0.5, 0.5]), nus)
        assert rep["ok"], rep

    def test_randomized_five_families(self, rng):
        for _ in range(5):
            mus = [random_ensemble(rng, 2) for _ in range(5)]
            nus = [random_ensemble(rng, 2) for _ in range(5)]
            probs = rng.random(5) + 0.1
            probs /= probs.sum()
            rep = weighted_average_identity_check(mus, probs, nus)
            assert rep["ok"], rep


class TestResampling:
    def test_systematic_preserves_weight_proportions(self, rng):
        w = np.array([1.0, 2.0, 7.0])
        idx = systematic_resample(w, 10000, seed=5)
        counts = np.bincount(idx, minlength=3) / 10000.0
        assert np.allclose(counts, w / w.sum(), atol=0.01)

    def test_mixture_cap_resamples(self, rng):
        ens = [random_ensemble(rng, 50) for _ in range(4)]
        masses = [e.total_mass for e in ens]
        out, resampled = mixture(ens, masses, cap=60, seed=3)
        assert resampled
        assert len(out.curves) <= 60
        assert out.total_mass == pytest.approx(sum(masses), rel=1e-9)
