import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from skewreserve import GigParams, make_rng, spawn_rngs
from skewreserve.distributions import (
    gig_logpdf,
    sample_beta,
    sample_gamma,
    sample_gamma_left_truncated,
    sample_gamma_right_truncated,
    sample_gig,
    sample_inverse_gamma,
    sample_normal,
    sample_truncated_normal_lower,
    skew_normal_pdf,
)

KS_P = 0.001


def test_determinism_and_spawning():
    a = make_rng(123).standard_normal(8)
    b = make_rng(123).standard_normal(8)
    assert np.array_equal(a, b)
    r1, r2 = spawn_rngs(99, 2)
    assert not np.array_equal(r1.standard_normal(8), r2.standard_normal(8))


class TestNormal:
    def test_degenerate_variance_limit(self, rng):
        x = sample_normal(rng, 3.0, 1e-12, size=100_000)
        assert np.std(x) < 1e-5

    def test_mean_clt_bound(self, rng):
        x = sample_normal(rng, 0.0, 1.0, size=1_000_000)
        assert abs(x.mean()) < 4 / math.sqrt(1_000_000)

    def test_variance_moment(self, rng):
        x = sample_normal(rng, 5.0, 4.0, size=1_000_000)
        se = 4.0 * math.sqrt(2 / (1_000_000 - 1))
        assert abs(x.var(ddof=1) - 4.0) < 5 * se

    def test_nonpositive_variance_rejected(self, rng):
        with pytest.raises(ValueError):
            sample_normal(rng, 0.0, 0.0)


class TestTruncatedNormal:
    def test_half_normal_mean(self, rng):
        x = sample_truncated_normal_lower(rng, 0.0, 1.0, 0.0, size=1_000_000)
        assert np.all(x >= 0)
        target = math.sqrt(2 / math.pi)
        se = math.sqrt((1 - target**2) / x.size)
        assert abs(x.mean() - target) < 5 * se

    def test_vacuous_truncation_matches_normal(self, rng):
        x = sample_truncated_normal_lower(rng, 0.0, 1.0, -1e6, size=100_000)
        assert stats.kstest(x, "norm").pvalue > 0.01

    def test_far_tail_matches_quadrature_mean(self, rng):
        x = sample_truncated_normal_lower(rng, 0.0, 1.0, 5.0, size=200_000)
        assert np.all(x >= 5.0)
        num = integrate.quad(lambda t: t * math.exp(-t * t / 2), 5, 20)[0]
        den = integrate.quad(lambda t: math.exp(-t * t / 2), 5, 20)[0]
        mean = num / den
        assert abs(x.mean() - mean) < 5 * x.std() / math.sqrt(x.size)

    def test_ks_on_parameter_grid(self, rng):
        for mu, var, lo in [(0, 1, 0.2), (2, 3, 1.0), (-1, 0.5, 1.5), (0, 1, 3.0)]:
            x = sample_truncated_normal_lower(rng, mu, var, lo, size=100_000)
            sd = math.sqrt(var)
            a = (lo - mu) / sd
            assert stats.kstest(x, stats.truncnorm(a, np.inf, loc=mu, scale=sd).cdf).pvalue > KS_P


class TestGammaFamily:
    def test_exponential_special_case(self, rng):
        lam = 2.5
        x = sample_gamma(rng, 1.0, lam, size=1_000_000)
        se = (1 / lam) / math.sqrt(x.size)
        assert abs(x.mean() - 1 / lam) < 5 * se

    def test_inverse_gamma_mean(self, rng):
        x = sample_inverse_gamma(rng, 3.0, 2.0, size=1_000_000)
        se = x.std(ddof=1) / math.sqrt(x.size)
        assert abs(x.mean() - 1.0) < 5 * se

    def test_beta_uniform_special_case(self, rng):
        x = sample_beta(rng, 1.0, 1.0, size=100_000)
        assert stats.kstest(x, "uniform").pvalue > 0.01

    def test_nonpositive_parameters_rejected(self, rng):
        for fn in (sample_gamma, sample_inverse_gamma, sample_beta):
            with pytest.raises(ValueError):
                fn(rng, 0.0, 1.0)


class TestTruncatedGamma:
    def test_infinite_upper_is_untruncated(self, rng):
        x = np.array([sample_gamma_right_truncated(rng, 2.0, 3.0, math.inf) for _ in range(100_000)])
        assert stats.kstest(x, stats.gamma(2.0, scale=1 / 3.0).cdf).pvalue > KS_P

    def test_truncated_mean_vs_quadrature(self, rng):
        x = np.array([sample_gamma_right_truncated(rng, 2.0, 3.0, 1.0) for _ in range(200_000)])
        assert np.all((x > 0) & (x < 1))
        num = integrate.quad(lambda t: t * t * math.exp(-3 * t), 0, 1)[0]
        den = integrate.quad(lambda t: t * math.exp(-3 * t), 0, 1)[0]
        assert abs(x.mean() - num / den) < 5 * x.std() / math.sqrt(x.size)

    def test_slash_conditional_shape_in_unit_interval(self, rng):
        nu, b = 3.0, 2.0
        x = np.array([sample_gamma_right_truncated(rng, nu + 1, b, 1.0) for _ in range(50_000)])
        assert np.all((x > 0) & (x < 1))

    def test_mixture_and_invcdf_paths_agree(self, rng):
        a, b = 2.5, 4.0
        scalar = np.array([sample_gamma_right_truncated(rng, a, b, 1.0) for _ in range(100_000)])
        vector = sample_gamma_right_truncated(rng, a, np.full(100_000, b), 1.0)
        assert stats.ks_2samp(scalar, vector).pvalue > KS_P

    def test_large_shape_regime(self, rng):
        # shape >> rate: the truncated-density mass hugs the upper bound
        x = sample_gamma_right_truncated(rng, 500.0, np.full(20_000, 3.0), 1.0)
        assert np.all((x > 0) & (x < 1))
        num = integrate.quad(lambda t: t * t ** 499 * math.exp(-3 * t), 0, 1)[0]
        den = integrate.quad(lambda t: t ** 499 * math.exp(-3 * t), 0, 1)[0]
        assert abs(x.mean() - num / den) < 5 * x.std() / math.sqrt(x.size)

    def test_left_truncated(self, rng):
        x = np.array([sample_gamma_left_truncated(rng, 91.0, 30.0, 1.0) for _ in range(50_000)])
        assert np.all(x > 1.0)
        cdf = stats.gamma(91.0, scale=1 / 30.0)
        lo = cdf.cdf(1.0)
        ks = stats.kstest(x, lambda t: (cdf.cdf(t) - lo) / (1 - lo))
        assert ks.pvalue > KS_P

    def test_doubly_truncated(self, rng):
        x = np.array([sample_gamma_left_truncated(rng, 5.0, 1.0, 2.0, 4.0) for _ in range(50_000)])
        assert np.all((x > 2.0) & (x < 4.0))


class TestGig:
    def test_inverse_gaussian_reduction(self, rng):
        p = GigParams(-0.5, 2.0, 8.0)
        x = np.array([sample_gig(rng, p) for _ in range(1_000_000)])
        target = math.sqrt(2.0 / 8.0)
        assert abs(x.mean() - target) < 5 * x.std() / math.sqrt(x.size)

    def test_log_symmetry_at_zero_order(self, rng):
        p = GigParams(0.0, 3.0, 3.0)
        x = np.log([sample_gig(rng, p) for _ in range(200_000)])
        assert abs(x.mean()) < 5 * x.std() / math.sqrt(x.size)

    def test_vg_conditional_moments_vs_quadrature(self, rng):
        nu, q = 4.0, 2.0
        p = GigParams(1 - nu / 2, nu, q)
        x = np.array([sample_gig(rng, p) for _ in range(200_000)])
        num = integrate.quad(lambda t: t * math.exp(gig_logpdf(t, p)), 0, 200)[0]
        assert abs(x.mean() - num) < 5 * x.std() / math.sqrt(x.size)

    def test_density_normalized(self):
        p = GigParams(-1.0, 4.0, 2.0)
        val = integrate.quad(lambda t: math.exp(gig_logpdf(t, p)), 0, np.inf)[0]
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_extreme_scales_stay_finite(self, rng):
        for chi, psi in [(1e-6, 1e6), (1e6, 1e-6), (1e-6, 1e-6), (1e6, 1e6)]:
            p = GigParams(-1.0, chi, psi)
            x = [sample_gig(rng, p) for _ in range(200)]
            assert np.all(np.isfinite(x)) and np.all(np.array(x) > 0)

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            GigParams(0.5, -1.0, 2.0)

    def test_ks_against_numeric_cdf(self, rng):
        p = GigParams(0.7, 1.5, 2.5)
        x = np.array([sample_gig(rng, p) for _ in range(50_000)])
        grid = np.linspace(1e-9, 40, 4001)
        pdf = np.exp(gig_logpdf(grid, p))
        cdf_grid = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2 * np.diff(grid))])
        cdf_grid /= cdf_grid[-1]
        ks = stats.kstest(x, lambda t: np.interp(t, grid, cdf_grid))
        assert ks.pvalue > KS_P


class TestSkewNormalPdf:
    def test_kappa_zero_is_normal(self):
        z = np.linspace(-5, 7, 41)
        assert np.allclose(skew_normal_pdf(z, 1.0, 2.0, 0.0), stats.norm.pdf(z, 1.0, math.sqrt(2.0)))

    def test_value_at_location(self):
        assert skew_normal_pdf(2.0, 2.0, 4.0, 17.0) == pytest.approx(stats.norm.pdf(0.0, scale=2.0))

    def test_normalization_quadrature(self):
        val = integrate.quad(lambda z: skew_normal_pdf(z, 1.0, 4.0, 3.0), -80, 80)[0]
        assert val == pytest.approx(1.0, abs=1e-8)

    def test_nonpositive_variance_rejected(self):
        with pytest.raises(ValueError):
            skew_normal_pdf(0.0, 0.0, -1.0, 0.0)
