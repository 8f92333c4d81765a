import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphereplane.errors import DomainError
from sphereplane.fitting import constant_fit
from sphereplane.synthgen import SplitMix64, gen_vzero
from sphereplane.vzero import (
    VZeroSeries,
    constancy_test,
    inflate_errors,
    periodogram,
    relative_errors,
    scatter_comparison,
    trend_fits,
    wavelength_bounds,
)

MV = 1e-3
D_GRID = np.linspace(100e-9, 5e-6, 500)


def _quoted_series(chi2=3603.0, n=500, mean=15.29 * MV, sigma=0.13 * MV):
    """Alternating +/-a about ``mean`` so that the constant fit has the given chi2."""
    a = sigma * math.sqrt(chi2 / n)
    v0 = mean + a * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return VZeroSeries(np.linspace(1e-7, 5e-6, n), v0, np.full(n, sigma))


def _excess_scatter(seed=3):
    return gen_vzero("constant", {"c": 15.29 * MV}, D_GRID, 0.13 * MV, 0.31 * MV, seed)


class TestSeries:
    def test_requires_sigma(self):
        with pytest.raises(ValueError):
            VZeroSeries([0.0, 1.0], [1.0, 2.0], None)

    def test_requires_two_points(self):
        with pytest.raises(ValueError):
            VZeroSeries([0.0], [1.0], [1.0])

    def test_rejects_non_positive_sigma(self):
        with pytest.raises(ValueError):
            VZeroSeries([0.0, 1.0], [1.0, 2.0], [1.0, 0.0])


class TestQuotedArithmetic:
    def test_reduced_chi2(self):
        rep = constancy_test(_quoted_series())
        assert rep.chi2 == pytest.approx(3603, rel=1e-12)
        assert rep.dof == 499
        assert round(rep.chi2_red, 1) == 7.2
        assert rep.inflation_factor == pytest.approx(math.sqrt(3603 / 499), rel=1e-12)

    def test_inflated_mean_sigma(self):
        rep = constancy_test(_quoted_series())
        assert rep.mean_sigma == pytest.approx(0.13 * MV, rel=1e-12)
        assert rep.inflated_mean_sigma / MV == pytest.approx(0.349, abs=0.0005)
        assert round(rep.inflated_mean_sigma / MV, 2) == 0.35

    def test_relative_errors(self):
        rep = constancy_test(_quoted_series())
        assert rep.weighted_mean == pytest.approx(15.29 * MV, rel=1e-12)
        before, after = relative_errors(rep)
        assert round(before, 2) == 0.85
        assert 2.275 <= after < 2.295
        assert (before, after) == (rep.rel_err_before, rep.rel_err_after)

    def test_rounded_inflated_sigma_gives_2_29(self):
        assert round(100 * 0.35 / 15.29, 2) == 2.29

    def test_survival_probability_tiny(self):
        assert constancy_test(_quoted_series()).survival_probability < 1e-100


class TestConstancy:
    def test_inflation_identity(self):
        series = _excess_scatter()
        rep = constancy_test(series)
        again = constancy_test(inflate_errors(series, rep.inflation_factor))
        assert again.chi2_red == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(0, 2**64 - 1), st.floats(0.01, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_inflation_identity_any_seed(self, seed, scatter):
        series = gen_vzero("constant", {"c": 0.01}, D_GRID[:50], 1e-3, scatter * 1e-3, seed)
        rep = constancy_test(series)
        again = constancy_test(inflate_errors(series, rep.inflation_factor))
        assert abs(again.chi2_red - 1.0) <= 1e-12

    def test_factor_one_identity(self):
        series = _excess_scatter()
        out = inflate_errors(series, 1.0)
        np.testing.assert_array_equal(out.sigma, series.sigma)
        np.testing.assert_array_equal(out.v0, series.v0)

    def test_factor_two_quarters_chi2(self):
        series = _excess_scatter()
        assert constancy_test(inflate_errors(series, 2.0)).chi2 == pytest.approx(constancy_test(series).chi2 / 4, rel=1e-14)

    @pytest.mark.parametrize("factor", [0.0, -1.0, float("nan")])
    def test_bad_factor(self, factor):
        with pytest.raises(DomainError):
            inflate_errors(_excess_scatter(), factor)

    @given(st.floats(1e-3, 1e3))
    @settings(deadline=None)
    def test_mean_invariant_under_uniform_inflation(self, factor):
        series = _excess_scatter()
        a, b = constancy_test(series), constancy_test(inflate_errors(series, factor))
        assert b.weighted_mean == pytest.approx(a.weighted_mean, rel=1e-12)
        assert b.chi2_red == pytest.approx(a.chi2_red / factor**2, rel=1e-12)

    def test_ratio_of_relative_errors_is_factor(self):
        rep = constancy_test(_excess_scatter())
        before, after = relative_errors(rep)
        assert after / before == pytest.approx(rep.inflation_factor, rel=1e-14)

    def test_degenerate(self):
        rep = constancy_test(VZeroSeries([0.0, 1.0, 2.0], [0.01] * 3, [1e-4, 2e-4, 3e-4]))
        assert rep.chi2 == 0.0 and rep.inflation_factor == 0.0
        assert rep.degenerate_inflation
        assert relative_errors(rep)[1] == 0.0

    def test_zero_mean(self):
        rep = constancy_test(VZeroSeries([0.0, 1.0], [-1e-3, 1e-3], [1e-3, 1e-3]))
        assert rep.weighted_mean == 0.0
        with pytest.raises(DomainError):
            relative_errors(rep)

    def test_permutation_invariance(self):
        series = _excess_scatter()
        order = np.argsort(SplitMix64(9).normals(len(series)))
        shuffled = VZeroSeries(series.distance[order], series.v0[order], series.sigma[order])
        a, b = constancy_test(series).to_dict(), constancy_test(shuffled).to_dict()
        assert a.keys() == b.keys()
        for k in a:
            assert a[k] == pytest.approx(b[k], rel=1e-12), k

    def test_both_means_reported(self):
        series = VZeroSeries([0, 1, 2], [1.0, 2.0, 4.0], [1.0, 1.0, 0.5])
        rep = constancy_test(series)
        assert rep.unweighted_mean == pytest.approx(7 / 3)
        assert rep.weighted_mean == pytest.approx((1 + 2 + 16) / 6)

    def test_bessel_sample_std(self):
        rep = constancy_test(VZeroSeries([0, 1], [0.0, 2.0], [1.0, 1.0]))
        assert rep.sample_std == pytest.approx(math.sqrt(2))


class TestScatter:
    def test_excess_scatter_ratio(self):
        cmp = scatter_comparison(_excess_scatter())
        assert cmp.ratio == pytest.approx(0.31 / 0.13, abs=0.2)

    @pytest.mark.parametrize("seed", range(5))
    def test_consistent_errors(self, seed):
        n = 500
        series = gen_vzero("constant", {"c": 0.015}, D_GRID, 0.13 * MV, 0.13 * MV, seed)
        assert abs(scatter_comparison(series).ratio - 1) < 3 / math.sqrt(2 * n)

    def test_two_equal_values(self):
        cmp = scatter_comparison(VZeroSeries([0, 1], [0.5, 0.5], [0.1, 0.1]))
        assert cmp.sample_std == 0.0 and cmp.ratio == 0.0


class TestTrendFits:
    def test_constant_branch_matches_constant_fit(self):
        series = _excess_scatter()
        a = trend_fits(series).constant
        b = constant_fit(series.as_data())
        assert a.params.tobytes() == b.params.tobytes()
        assert a.covariance.tobytes() == b.covariance.tobytes()
        assert a.chi2 == b.chi2 and a.dof == b.dof

    def test_null_linear_below_threshold(self):
        threshold = 9.0  # 3 sigma for one extra degree of freedom
        passes = 0
        for seed in range(100):
            series = gen_vzero("constant", {"c": 0.015}, D_GRID[::5], 0.13 * MV, 0.13 * MV, seed)
            fits = trend_fits(series)
            passes += fits.delta_chi2_linear < threshold
        assert passes >= 95

    @pytest.mark.parametrize("seed", range(5))
    def test_injected_slope_recovered(self, seed):
        d = D_GRID[::5]
        sigma = 0.13 * MV
        sigma_b = sigma / math.sqrt(np.sum((d - d.mean()) ** 2))
        b = 5 * sigma_b
        series = gen_vzero("linear", {"c": 0.015, "b": b}, d, sigma, sigma, seed)
        fits = trend_fits(series)
        assert fits.linear.converged
        assert fits.delta_chi2_linear > 0
        assert fits.linear.error("b") == pytest.approx(sigma_b, rel=1e-6)
        assert abs(fits.linear.value("b") - b) < 3 * sigma_b

    @pytest.mark.parametrize("seed", range(5))
    def test_injected_sinusoid_dominates(self, seed):
        sigma = 0.13 * MV
        params = {"c": 0.015, "A": 3 * sigma, "wavelength": 1.7e-6, "phase": 0.4}
        series = gen_vzero("sinusoid", params, D_GRID[::4], sigma, sigma, seed)
        fits = trend_fits(series)
        assert fits.sinusoid.converged
        assert fits.delta_chi2_sinusoid > max(fits.delta_chi2_linear, 0.0)
        assert fits.sinusoid.value("wavelength") == pytest.approx(1.7e-6, rel=0.02)
        assert abs(fits.sinusoid.value("A")) == pytest.approx(3 * sigma, rel=0.15)

    def test_too_few_points_for_sinusoid(self):
        series = VZeroSeries(np.arange(5.0), [1.0, 2.0, 1.5, 1.2, 1.9], np.ones(5))
        fits = trend_fits(series)
        assert fits.sinusoid is None and math.isnan(fits.delta_chi2_sinusoid)

    def test_wavelength_bounds(self):
        assert wavelength_bounds(np.array([0.0, 2.0, 1.0, 3.0])) == (2.0, 6.0)

    def test_wavelength_bounds_degenerate(self):
        with pytest.raises(ValueError):
            wavelength_bounds(np.array([1.0, 1.0]))

    def test_periodogram_peak(self):
        d = np.linspace(0.0, 10.0, 200)
        series = VZeroSeries(d, 1 + 0.5 * np.sin(2 * np.pi * d / 2.5 + 1.0), np.full(d.size, 0.01))
        lams, gains, amps, phases = periodogram(series, 400)
        k = int(np.argmax(gains))
        assert lams[k] == pytest.approx(2.5, rel=0.02)
        assert amps[k] == pytest.approx(0.5, rel=0.05)
