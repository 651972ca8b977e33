import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewreserve import (
    BETA_SLASH,
    GAMMA_T,
    INVGAMMA_VG,
    POINT,
    ModelSpec,
    MomentNotDefinedError,
    NuPrior,
    Priors,
    e_lambda_pow,
    init_state,
    kappa_to_rho,
    marginal_kurtosis,
    marginal_mean,
    marginal_skewness,
    marginal_variance,
    mixing_prior_logdensity,
    prior_scenario,
    rho_to_kappa,
    spec_from_code,
)
from skewreserve.mcmc import sample_mixing

MOMENT_KS = (-0.5, -1.0, -1.5, -2.0)


def mc_lambda_moment(rng, family, nu, k, n=1_000_000):
    lam = np.asarray(sample_mixing(rng, family, nu, size=n), dtype=float)
    x = lam**k
    return x.mean(), x.std(ddof=1) / math.sqrt(n)


class TestSpecCodes:
    def test_eight_codes(self):
        seen = set()
        for code in ("n", "st", "s", "vg", "sn", "sst", "ss", "svg"):
            spec = spec_from_code(code)
            seen.add((spec.skew, spec.mixing))
            assert spec.code == code
        assert len(seen) == 8

    def test_unknown_code(self):
        with pytest.raises(ValueError):
            spec_from_code("xx")

    def test_prior_scenarios(self):
        assert prior_scenario(1).var_ig == (0.01, 0.01)
        assert prior_scenario(2).var_ig == (0.001, 0.001)
        assert prior_scenario(3).rho_beta == (0.5, 0.5)
        assert prior_scenario(4).nu_prior == NuPrior("uniform", 2.0, 40.0)
        assert prior_scenario(5).nu_prior == NuPrior("exponential", 0.3)
        with pytest.raises(NotImplementedError):
            prior_scenario(6)

    def test_default_nu_priors(self):
        p = Priors()
        assert p.nu(GAMMA_T) == NuPrior("gamma", 12.0, 0.8)
        assert p.nu(BETA_SLASH) == NuPrior("gamma", 0.2, 0.05)
        assert p.nu(INVGAMMA_VG) == NuPrior("gamma", 12.0, 0.8)


class TestRhoKappa:
    @given(st.floats(min_value=-0.999, max_value=0.999))
    @settings(max_examples=200, deadline=None)
    def test_bijection(self, rho):
        assert kappa_to_rho(rho_to_kappa(rho)) == pytest.approx(rho, abs=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            rho_to_kappa(1.0)


class TestMixingLogDensity:
    def test_point_mass(self):
        assert mixing_prior_logdensity(POINT, None, 1.0) == 0.0
        with pytest.raises(ValueError):
            mixing_prior_logdensity(POINT, None, 0.5)

    def test_gamma_t_exponential_case(self):
        # nu=2 makes the mixing law Gamma(1,1): density exp(-lam)
        assert mixing_prior_logdensity(GAMMA_T, 2.0, 1.0) == pytest.approx(-1.0)

    def test_beta_slash_density(self):
        assert mixing_prior_logdensity(BETA_SLASH, 3.0, 0.5) == pytest.approx(math.log(0.75))

    def test_support_violations(self):
        with pytest.raises(ValueError):
            mixing_prior_logdensity(BETA_SLASH, 3.0, 1.5)
        with pytest.raises(ValueError):
            mixing_prior_logdensity(GAMMA_T, 2.0, -0.1)


class TestLambdaMoments:
    def test_vg_inverse_moment_is_one(self):
        for nu in (0.5, 3.0, 17.2):
            assert e_lambda_pow(INVGAMMA_VG, nu, -1.0) == pytest.approx(1.0)

    def test_gamma_t_closed_forms(self):
        assert e_lambda_pow(GAMMA_T, 4.0, -1.0) == pytest.approx(2.0)
        assert e_lambda_pow(BETA_SLASH, 2.0, -1.0) == pytest.approx(2.0)

    def test_pole_raises(self):
        with pytest.raises(MomentNotDefinedError):
            e_lambda_pow(GAMMA_T, 2.0, -1.0)
        with pytest.raises(MomentNotDefinedError):
            e_lambda_pow(BETA_SLASH, 1.0, -1.0)
        with pytest.raises(MomentNotDefinedError):
            e_lambda_pow(GAMMA_T, 4.0, -2.0)

    @pytest.mark.parametrize("family", [GAMMA_T, BETA_SLASH, INVGAMMA_VG])
    @pytest.mark.parametrize("nu", [3.0, 5.0, 8.0, 20.0])
    def test_monte_carlo_cross_check(self, family, nu, rng):
        floors = {GAMMA_T: {-0.5: 1, -1.0: 2, -1.5: 3, -2.0: 4},
                  BETA_SLASH: {-0.5: 0.5, -1.0: 1, -1.5: 1.5, -2.0: 2},
                  INVGAMMA_VG: {-0.5: 0, -1.0: 0, -1.5: 0, -2.0: 0}}
        for k in MOMENT_KS:
            if nu <= floors[family][k]:
                with pytest.raises(MomentNotDefinedError):
                    e_lambda_pow(family, nu, k)
                continue
            if nu <= floors[family].get(2 * k, 2 * floors[family][k]):
                continue  # the MC estimator itself has infinite variance here
            exact = e_lambda_pow(family, nu, k)
            est, se = mc_lambda_moment(rng, family, nu, k, n=200_000)
            assert abs(est - exact) < 6 * se, (family, nu, k)


class TestMarginalMoments:
    def test_point_rho_zero_gaussian(self):
        spec = spec_from_code("n")
        assert marginal_mean(spec, 2.0, 4.0, 0.0) == 2.0
        assert marginal_variance(spec, 4.0, 0.0) == 4.0
        assert marginal_skewness(spec, 0.0) == 0.0
        assert marginal_kurtosis(spec, 0.0) == 3.0

    def test_point_nonzero_rho(self):
        spec = spec_from_code("sn")
        rho, s2 = 0.6, 2.0
        assert marginal_mean(spec, 1.0, s2, rho) == pytest.approx(
            1.0 + math.sqrt(2 / math.pi) * math.sqrt(s2) * rho
        )
        assert marginal_variance(spec, s2, rho) == pytest.approx(s2 * (1 - (2 / math.pi) * rho**2))

    def test_gamma_t_variance(self):
        spec = spec_from_code("sst")
        assert marginal_variance(spec, 1.0, 0.0, nu=4.0) == pytest.approx(2.0)

    def test_skewness_limit_at_rho_one(self):
        spec = spec_from_code("sn")
        target = math.sqrt(2) * (4 - math.pi) / (math.pi - 2) ** 1.5
        assert marginal_skewness(spec, 0.999999) == pytest.approx(target, abs=1e-4)
        assert target == pytest.approx(0.9953, abs=1e-4)

    def test_symmetric_t_kurtosis_oracle(self):
        spec = spec_from_code("sst")
        assert marginal_kurtosis(spec, 0.0, nu=5.0) == pytest.approx(9.0)
        for nu in (4.5, 6.0, 10.0):
            assert marginal_kurtosis(spec, 0.0, nu=nu) == pytest.approx(3 * (nu - 2) / (nu - 4))

    @pytest.mark.parametrize("code", ["sst", "ss"])
    def test_heavy_tail_to_point_limit(self, code):
        spec = spec_from_code(code)
        point = spec_from_code("sn")
        rho = -0.7
        assert marginal_variance(spec, 1.3, rho, nu=1e4) == pytest.approx(
            marginal_variance(point, 1.3, rho), abs=1e-2
        )
        assert marginal_kurtosis(spec, rho, nu=1e4) == pytest.approx(
            marginal_kurtosis(point, rho), abs=1e-2
        )

    def test_moment_nonexistence_propagates(self):
        spec = spec_from_code("sst")
        with pytest.raises(MomentNotDefinedError):
            marginal_variance(spec, 1.0, 0.0, nu=2.0)
        with pytest.raises(MomentNotDefinedError):
            marginal_kurtosis(spec, 0.0, nu=4.0)


class TestInitState:
    def test_constant_triangle_floor(self):
        from skewreserve import parse_triangle, log_transform

        text = "accident_year,dev_year,amount\n" + "\n".join(
            f"{i},{j},{math.exp(5)!r}" for i in range(1, 4) for j in range(1, 5 - i)
        )
        lt = log_transform(parse_triangle(text))
        state = init_state(spec_from_code("sst"), lt)
        assert state.mu == pytest.approx(5.0)
        assert state.sigma2 == pytest.approx(1e-6)

    def test_invariants_hold_per_family(self, small_logtri):
        for code in ("n", "st", "s", "vg", "sn", "sst", "ss", "svg"):
            spec = spec_from_code(code)
            state = init_state(spec, small_logtri)
            state.check(spec)

    def test_non_skew_pins_rho_and_T(self, small_logtri):
        state = init_state(spec_from_code("st"), small_logtri)
        assert state.rho == 0.0
        assert np.all(state.T == 0.0)
