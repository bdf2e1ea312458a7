"""Measure-preserving automorphism constructions and their sampling checks."""

import numpy as np
import pytest
from scipy import stats as scipy_stats

from anchordt import mpa


def gaussian_sampler(mu=0.0, sigma=1.0):
    return lambda rng, n: mu + sigma * rng.standard_normal(n)


class TestReflection:
    def test_reflects_through_mu(self):
        m = mpa.reflection_mpa(0.0)
        assert m(1.0) == -1.0

    def test_mu_is_fixed(self):
        for mu in (-2.0, 0.0, 0.7):
            assert mpa.reflection_mpa(mu)(mu) == mu

    def test_involution(self):
        m = mpa.reflection_mpa(1.3)
        x = np.linspace(-4, 4, 101)
        np.testing.assert_allclose(m(m(x)), x, atol=1e-12)


class TestCdfConjugate:
    def test_uniform_gives_one_minus_u(self):
        m = mpa.cdf_conjugate_mpa(lambda u: u, lambda q: q)
        u = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(m(u), 1.0 - u, atol=1e-12)
        assert m(np.array([0.5]))[0] == pytest.approx(0.5)

    def test_gaussian_reduces_to_reflection(self):
        mu, sigma = 0.4, 2.0
        m = mpa.cdf_conjugate_mpa(lambda x: scipy_stats.norm.cdf(x, mu, sigma),
                                  lambda q: scipy_stats.norm.ppf(q, mu, sigma))
        x = np.linspace(mu - 3 * sigma, mu + 3 * sigma, 201)
        np.testing.assert_allclose(m(x), 2 * mu - x, atol=1e-7)

    def test_exponential_fixed_point_at_ln2(self):
        m = mpa.cdf_conjugate_mpa(lambda x: scipy_stats.expon.cdf(x),
                                  lambda q: scipy_stats.expon.ppf(q))
        assert m(np.array([np.log(2.0)]))[0] == pytest.approx(np.log(2.0), abs=1e-12)

    def test_involution_where_cdf_roundtrips(self):
        m = mpa.cdf_conjugate_mpa(lambda x: scipy_stats.norm.cdf(x),
                                  lambda q: scipy_stats.norm.ppf(q))
        x = np.linspace(-3, 3, 101)
        np.testing.assert_allclose(m(m(x)), x, atol=1e-9)

    def test_inconsistent_inverse_raises(self):
        bad = mpa.cdf_conjugate_mpa(lambda x: scipy_stats.norm.cdf(x),
                                    lambda q: 2.0 * scipy_stats.norm.ppf(q))
        with pytest.raises(mpa.InverseConsistencyError):
            bad(np.array([1.0]))


class TestPushforwardKs:
    def test_identity_map_statistic_near_sampling_noise(self):
        # two-sample KS critical scale: 1.36 * sqrt(2/n), allow 1.5x
        n = 100000
        cap = 1.36 * np.sqrt(2.0 / n) * 1.5
        for seed in range(5):
            stat = mpa.pushforward_ks_check(gaussian_sampler(), lambda x: x,
                                            n, seed)
            assert stat < cap

    def test_gaussian_reflection_passes(self):
        stat = mpa.pushforward_ks_check(gaussian_sampler(0.7, 1.1),
                                        mpa.reflection_mpa(0.7), 100000, 0)
        assert stat < 0.01

    def test_shift_map_fails_loudly(self):
        # KS distance between N(0,1) and N(1,1) is 2*Phi(1/2)-1 ~ 0.383
        stat = mpa.pushforward_ks_check(gaussian_sampler(),
                                        lambda x: x + 1.0, 100000, 0)
        assert stat > 0.3

    def test_small_n_rejected(self):
        with pytest.raises(ValueError, match="n >= 1000"):
            mpa.pushforward_ks_check(gaussian_sampler(), lambda x: x, 10, 0)


class TestFixedPoints:
    def test_reflection_has_single_fixed_point(self):
        report = mpa.count_fixed_points(mpa.reflection_mpa(0.7), (-5.0, 5.0))
        assert report.count == 1
        assert report.locations[0] == pytest.approx(0.7, abs=1e-6)
        assert not report.is_identity

    def test_identity_flagged_separately(self):
        report = mpa.count_fixed_points(lambda x: x, (-2.0, 2.0))
        assert report.is_identity
        assert report.count == 0

    def test_exponential_conjugate_fixed_point(self):
        m = mpa.cdf_conjugate_mpa(lambda x: scipy_stats.expon.cdf(x),
                                  lambda q: scipy_stats.expon.ppf(q))
        report = mpa.count_fixed_points(m, (0.01, 10.0))
        assert report.count == 1
        assert report.locations[0] == pytest.approx(np.log(2.0), abs=1e-6)

    def test_multiple_roots_counted(self):
        # sin(3x) = 0 at x = k*pi/3; five such points fall inside [-3, 3]
        report = mpa.count_fixed_points(lambda x: x + np.sin(3 * x),
                                        (-3.0, 3.0))
        assert report.count == 5
        np.testing.assert_allclose(report.locations,
                                   [k * np.pi / 3 for k in range(-2, 3)],
                                   atol=1e-6)


class TestPermutedMpa:
    def test_swap_identity_fixed_fraction_vanishes(self):
        pm = mpa.PermutedMpa(permutation=np.array([1, 0]),
                             maps=[lambda v: v, lambda v: v])
        frac = mpa.permutation_fixed_measure_probe(
            pm, lambda rng, n: rng.standard_normal((2, n)), 100000, 1e-3, 0)
        assert frac <= 1e-3

    def test_swap_with_reflections_fixed_line(self):
        # h(Pi x) = (-x2, -x1): fixed set is the line x2 = -x1
        pm = mpa.PermutedMpa(permutation=np.array([1, 0]),
                             maps=[mpa.reflection_mpa(0.0),
                                   mpa.reflection_mpa(0.0)])
        frac = mpa.permutation_fixed_measure_probe(
            pm, lambda rng, n: rng.standard_normal((2, n)), 100000, 1e-3, 1)
        assert frac <= 1e-3

    def test_fraction_is_monotone_in_tolerance(self):
        pm = mpa.PermutedMpa(permutation=np.array([1, 0]),
                             maps=[lambda v: v, lambda v: v])
        sampler = lambda rng, n: rng.standard_normal((2, n))
        fracs = [mpa.permutation_fixed_measure_probe(pm, sampler, 100000, tol, 2)
                 for tol in (1e-4, 1e-2, 1e-1)]
        assert fracs[0] <= fracs[1] <= fracs[2]

    def test_planted_fixed_point_detected(self):
        pm = mpa.PermutedMpa(permutation=np.array([1, 0]),
                             maps=[lambda v: v, lambda v: v])

        def sampler_with_plant(rng, n):
            pts = rng.standard_normal((2, n)) + 5.0   # off the fixed line
            pts[:, 0] = 0.25                          # exactly on x1 = x2
            return pts

        frac = mpa.permutation_fixed_measure_probe(pm, sampler_with_plant,
                                                   100000, 1e-3, 3)
        assert frac >= 1.0 / 100000

    def test_identity_permutation_rejected(self):
        pm = mpa.PermutedMpa(permutation=np.array([0, 1]),
                             maps=[lambda v: v, lambda v: v])
        with pytest.raises(ValueError, match="non-identity"):
            mpa.permutation_fixed_measure_probe(
                pm, lambda rng, n: rng.standard_normal((2, n)), 100000, 1e-3, 0)

    def test_invalid_permutation_rejected(self):
        with pytest.raises(ValueError, match="permutation"):
            mpa.PermutedMpa(permutation=np.array([0, 0]),
                            maps=[lambda v: v, lambda v: v])


class TestFiniteTranslations:
    def test_uniform_transports_are_id_and_flip(self):
        report = mpa.finite_translations_check(
            lambda rng, n: rng.uniform(0.0, 1.0, n), lambda x: x, seed=0)
        assert report.passed
        assert report.ks_increasing < 0.01
        assert report.ks_decreasing < 0.01
        assert report.crossing_count == 1

    def test_gaussian_shift_pair(self):
        report = mpa.finite_translations_check(
            gaussian_sampler(), lambda x: x + 3.0, seed=1)
        assert report.passed

    def test_transports_match_analytic_forms(self):
        # p1 = N(0,1), p2 = N(3,1): increasing transport x+3, decreasing 3-x
        rng = np.random.default_rng(5)
        f1 = mpa.EmpiricalCdf(rng.standard_normal(200000))
        f2 = mpa.EmpiricalCdf(rng.standard_normal(200000) + 3.0)
        grid = np.linspace(-1.5, 1.5, 41)
        up = f2.quantile(f1.cdf(grid))
        down = f2.quantile(1.0 - f1.cdf(grid))
        assert np.abs(up - (grid + 3.0)).max() < 0.05
        assert np.abs(down - (3.0 - grid)).max() < 0.05


class TestEmpiricalCdf:
    def test_roundtrip_in_interior(self):
        sample = np.random.default_rng(0).standard_normal(50000)
        cdf = mpa.EmpiricalCdf(sample)
        x = np.linspace(-2, 2, 21)
        np.testing.assert_allclose(cdf.quantile(cdf.cdf(x)), x, atol=1e-3)

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            mpa.EmpiricalCdf(np.array([1.0]))
