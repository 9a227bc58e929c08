"""Distribution machinery tests: closed forms against frozen hand-computed
values, sampling moments against analytic standard errors, and the seeded
stream contract."""

import numpy as np
import pytest
import scipy.stats

from convosim.sampler import (
    RENDER_LANE,
    SIMULATION_LANE,
    BetaParams,
    GammaParams,
    NegBinomialParams,
    RatioMoments,
    beta_from_moments,
    derive_session_rng,
    gamma_params_for_gap,
    sample_gap,
    sample_negative_binomial,
    sample_sentence_length,
    sample_session_mean,
)


def _se_of_variance(var: float, excess_kurtosis: float, n: int) -> float:
    # Standard error of the sample variance from the fourth central moment.
    mu4 = var * var * (excess_kurtosis + 3.0)
    return float(np.sqrt((mu4 - var * var * (n - 3) / (n - 1)) / n))


class TestRatioMoments:
    def test_valid(self):
        m = RatioMoments(mean=0.5, variance=0.05)
        assert m.mean == 0.5

    @pytest.mark.parametrize("mean", [0.0, 1.0, -0.1, 1.5])
    def test_mean_out_of_range(self, mean):
        with pytest.raises(ValueError, match="mean"):
            RatioMoments(mean=mean, variance=0.01)

    def test_variance_at_feasibility_bound_rejected(self):
        # variance == mean*(1-mean) would drive both Beta parameters to zero.
        with pytest.raises(ValueError, match="variance"):
            RatioMoments(mean=0.5, variance=0.25)

    @pytest.mark.parametrize("variance", [0.0, -0.01, 0.3])
    def test_variance_out_of_range(self, variance):
        with pytest.raises(ValueError, match="variance"):
            RatioMoments(mean=0.5, variance=variance)


class TestBetaFit:
    def test_symmetric_case_frozen(self):
        params = beta_from_moments(RatioMoments(mean=0.5, variance=0.05))
        assert params.alpha == pytest.approx(2.0, abs=1e-12)
        assert params.beta == pytest.approx(2.0, abs=1e-12)

    def test_silence_target_frozen(self):
        # Hand-evaluated: a=m^2(1-m)/v-m, b=m(1-m)^2/v-(1-m) at (0.1473, 0.0061).
        params = beta_from_moments(RatioMoments(mean=0.1473, variance=0.0061))
        assert params.alpha == pytest.approx(2.885696587377049, rel=1e-12)
        assert params.beta == pytest.approx(16.70491160934426, rel=1e-12)

    def test_moment_round_trip(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            mean = float(rng.uniform(0.01, 0.99))
            variance = float(rng.uniform(0.05, 0.95)) * mean * (1.0 - mean)
            params = beta_from_moments(RatioMoments(mean=mean, variance=variance))
            assert params.mean == pytest.approx(mean, rel=1e-12)
            assert params.variance == pytest.approx(variance, rel=1e-12)

    def test_params_positive_enforced(self):
        with pytest.raises(ValueError):
            BetaParams(alpha=0.0, beta=1.0)
        with pytest.raises(ValueError):
            BetaParams(alpha=1.0, beta=-2.0)


class TestSessionMeanSampling:
    def test_in_open_interval(self):
        params = beta_from_moments(RatioMoments(mean=0.1473, variance=0.0061))
        rng = derive_session_rng(3, 0)
        draws = [sample_session_mean(params, rng) for _ in range(1000)]
        assert all(0.0 < d < 1.0 for d in draws)

    def test_moments_within_three_se(self):
        moments = RatioMoments(mean=0.1473, variance=0.0061)
        params = beta_from_moments(moments)
        rng = derive_session_rng(4, 0)
        n = 100_000
        draws = np.array([sample_session_mean(params, rng) for _ in range(n)])
        _m, v, _s, k = scipy.stats.beta.stats(params.alpha, params.beta, moments="mvsk")
        se_mean = np.sqrt(float(v) / n)
        assert abs(draws.mean() - moments.mean) < 3 * se_mean
        se_var = _se_of_variance(float(v), float(k), n)
        assert abs(draws.var() - moments.variance) < 3 * se_var


class TestNegativeBinomial:
    def test_param_validation(self):
        with pytest.raises(ValueError, match="k"):
            NegBinomialParams(k=0.0, p=0.5)
        with pytest.raises(ValueError, match="p"):
            NegBinomialParams(k=1.0, p=0.0)
        with pytest.raises(ValueError, match="p"):
            NegBinomialParams(k=1.0, p=1.2)

    def test_geometric_pmf(self):
        # k=1 reduces to a geometric: P(X=j) = p (1-p)^j = 0.5^(j+1).
        params = NegBinomialParams(k=1.0, p=0.5)
        rng = derive_session_rng(6, 0)
        n = 100_000
        draws = np.array([sample_negative_binomial(params, rng) for _ in range(n)])
        for j in range(4):
            expected = 0.5 ** (j + 1)
            freq = float(np.mean(draws == j))
            se = np.sqrt(expected * (1.0 - expected) / n)
            assert abs(freq - expected) < 3 * se

    @pytest.mark.parametrize("k,p", [(2.0, 0.4), (2.5, 0.35)])
    def test_moments_within_three_se(self, k, p):
        params = NegBinomialParams(k=k, p=p)
        rng = derive_session_rng(7, 0)
        n = 100_000
        draws = np.array([sample_negative_binomial(params, rng) for _ in range(n)])
        mean = k * (1.0 - p) / p
        var = k * (1.0 - p) / (p * p)
        _m, _v, _s, kurt = scipy.stats.nbinom.stats(k, p, moments="mvsk")
        assert abs(draws.mean() - mean) < 3 * np.sqrt(var / n)
        assert abs(draws.var() - var) < 3 * _se_of_variance(var, float(kurt), n)

    def test_p_one_degenerates_to_zero(self):
        params = NegBinomialParams(k=3.0, p=1.0)
        rng = derive_session_rng(8, 0)
        assert all(sample_negative_binomial(params, rng) == 0 for _ in range(50))

    def test_sentence_length_clamped_to_one(self):
        params = NegBinomialParams(k=3.0, p=1.0)
        rng = derive_session_rng(9, 0)
        assert all(sample_sentence_length(params, rng) == 1 for _ in range(50))

    def test_sentence_length_at_least_one_generally(self):
        params = NegBinomialParams(k=2.0, p=0.4)
        rng = derive_session_rng(10, 0)
        assert min(sample_sentence_length(params, rng) for _ in range(2000)) >= 1


class TestGammaGaps:
    def test_fit_frozen(self):
        params = gamma_params_for_gap(2.0, 1.0)
        assert params.shape == pytest.approx(4.0, abs=1e-12)
        assert params.scale == pytest.approx(0.5, abs=1e-12)
        assert params.mean == pytest.approx(2.0, abs=1e-12)

    def test_degenerate_mean_rejected(self):
        with pytest.raises(ValueError, match="degenerate gap"):
            gamma_params_for_gap(0.0, 1.0)
        with pytest.raises(ValueError, match="degenerate gap"):
            gamma_params_for_gap(-0.5, 1.0)
        with pytest.raises(ValueError, match="variance"):
            gamma_params_for_gap(1.0, 0.0)

    def test_sampling_moments(self):
        params = gamma_params_for_gap(2.0, 1.0)
        rng = derive_session_rng(11, 0)
        n = 100_000
        draws = np.array([sample_gap(params, rng) for _ in range(n)])
        assert draws.min() >= 0.0
        assert abs(draws.mean() - 2.0) < 0.02
        assert abs(draws.var() - 1.0) < 0.05

    def test_shape_below_one_supported(self):
        # Required gap smaller than its own standard deviation gives shape < 1.
        params = gamma_params_for_gap(0.2, 0.16)
        assert params.shape == pytest.approx(0.25)
        rng = derive_session_rng(12, 0)
        draws = np.array([sample_gap(params, rng) for _ in range(100_000)])
        assert abs(draws.mean() - 0.2) < 3 * np.sqrt(0.16 / 100_000)

    def test_shape_one_cdf_matches_exponential(self):
        theta = 0.7
        params = gamma_params_for_gap(theta, theta * theta)
        assert params.shape == pytest.approx(1.0)
        rng = derive_session_rng(13, 0)
        draws = np.array([sample_gap(params, rng) for _ in range(100_000)])
        for x in (0.5 * theta, theta, 2.0 * theta):
            empirical = float(np.mean(draws <= x))
            analytic = 1.0 - np.exp(-x / theta)
            assert abs(empirical - analytic) < 0.01


class TestSeededStreams:
    def test_same_triple_same_stream(self):
        a = derive_session_rng(42, 7)
        b = derive_session_rng(42, 7)
        assert np.array_equal(a.random(32), b.random(32))

    def test_different_sessions_differ(self):
        a = derive_session_rng(42, 7)
        b = derive_session_rng(42, 8)
        assert not np.array_equal(a.random(32), b.random(32))

    def test_lanes_are_independent(self):
        sim = derive_session_rng(42, 7, SIMULATION_LANE)
        render = derive_session_rng(42, 7, RENDER_LANE)
        assert not np.array_equal(sim.random(32), render.random(32))

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            derive_session_rng(-1, 0)
        with pytest.raises(ValueError):
            derive_session_rng(0, -2)


class TestGammaParamsType:
    def test_validation(self):
        with pytest.raises(ValueError):
            GammaParams(shape=0.0, scale=1.0)
        with pytest.raises(ValueError):
            GammaParams(shape=1.0, scale=0.0)
