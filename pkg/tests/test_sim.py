import numpy as np
import pytest
from scipy import special, stats

from survsel.sim import (
    CENSOR_TIMES,
    TARGET_CENSOR_RATES,
    ScenarioSpec,
    SimError,
    concordance_index,
    gen_gh_survival,
    gen_scenario,
    lognormal_cum_hazard,
    permute_response,
    sample_alaplace,
    scenario_truth,
    selection_metrics,
)


class TestScenarioSpec:
    def test_validation(self):
        with pytest.raises(SimError):
            ScenarioSpec(scenario=7, n=10)
        with pytest.raises(SimError):
            ScenarioSpec(scenario=3, n=10, error="alaplace")
        with pytest.raises(SimError):
            ScenarioSpec(scenario=1, n=0)

    def test_censor_constants(self):
        assert ScenarioSpec(scenario=1, n=5).censor_time == CENSOR_TIMES[1]


class TestGenScenario:
    def test_seed_determinism(self):
        spec = ScenarioSpec(scenario=1, n=200)
        a = gen_scenario(spec, seed=5)
        b = gen_scenario(spec, seed=5)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.d, b.d)
        np.testing.assert_array_equal(a.X_raw, b.X_raw)
        c = gen_scenario(spec, seed=6)
        assert not np.array_equal(a.y, c.y)

    def test_uncensored_flag(self):
        data = gen_scenario(ScenarioSpec(scenario=2, n=100, censored=False), seed=1)
        assert np.all(data.d == 1)

    @pytest.mark.parametrize("scenario", [1, 2, 3, 4, 5, 6])
    def test_censoring_rates_smoke(self, scenario):
        n = 40_000
        data = gen_scenario(ScenarioSpec(scenario=scenario, n=n), seed=scenario)
        rate = 1.0 - data.d.mean()
        assert rate == pytest.approx(TARGET_CENSOR_RATES[scenario], abs=0.015)

    def test_spurious_covariates(self):
        spec = ScenarioSpec(scenario=1, n=3000, p_total=50)
        data = gen_scenario(spec, seed=2)
        assert data.X_raw.shape == (3000, 50)
        corr = np.corrcoef(data.X_raw[:, [0, 10, 40]].T)
        off = corr[np.triu_indices(3, 1)]
        assert np.all(np.abs(off - 0.5) < 0.06)

    def test_omit_x2(self):
        spec = ScenarioSpec(scenario=1, n=50, p_total=3, omit_x2=True)
        data = gen_scenario(spec, seed=3)
        assert data.X_raw.shape == (50, 2)
        assert scenario_truth(spec) == (1, 0)

    def test_truth_index(self):
        assert scenario_truth(ScenarioSpec(scenario=1, n=5, p_total=4)) == (1, 2, 0, 0)

    def test_even_scenarios_have_nonnegative_x2(self):
        for scenario in (2, 4, 6):
            data = gen_scenario(ScenarioSpec(scenario=scenario, n=500), seed=4)
            assert np.all(data.X_raw[:, 1] >= 0.0)

    def test_alaplace_variant_runs(self):
        data = gen_scenario(
            ScenarioSpec(scenario=1, n=50_000, censored=False, error="alaplace"),
            seed=5,
        )
        lp = data.X_raw[:, 0] + 0.5 * np.log(np.abs(data.X_raw[:, 1]))
        resid = data.y - lp
        assert resid.var() == pytest.approx(0.25, abs=0.01)


class TestGhSurvival:
    def test_aft_special_case_distribution(self):
        # a = b reduces to an accelerated log-normal: exact CDF comparison
        rng = np.random.default_rng(6)
        n = 100_000
        a = np.full(n, 0.7)
        u = rng.uniform(size=n)
        t = gen_gh_survival(a, a, u)
        stat, _ = stats.kstest(t, lambda v: special.ndtr((np.log(v) + 0.7) / 0.5))
        assert stat < 0.01

    def test_ph_special_case_distribution(self):
        rng = np.random.default_rng(7)
        n = 100_000
        b = np.full(n, 0.4)
        u = rng.uniform(size=n)
        t = gen_gh_survival(np.zeros(n), b, u)

        def cdf(v):
            s0 = special.ndtr(-(np.log(v)) / 0.5)
            return 1.0 - s0 ** np.exp(0.4)

        stat, _ = stats.kstest(t, cdf)
        assert stat < 0.01

    def test_u_to_one_gives_zero_time(self):
        us = np.array([0.5, 1 - 1e-4, 1 - 1e-8, 1 - 1e-12])
        t = gen_gh_survival(np.zeros(4), np.zeros(4), us)
        assert np.all(np.diff(t) < 0)  # t decreases toward 0 as u -> 1
        assert t[-1] < 0.05

    def test_round_trip_in_hazard_space(self):
        rng = np.random.default_rng(8)
        n = 2000
        a = rng.normal(0, 0.6, n)
        b = rng.normal(0, 0.6, n)
        u = rng.uniform(0.001, 0.999, n)
        t = gen_gh_survival(a, b, u)
        H = np.exp(b - a) * lognormal_cum_hazard(t * np.exp(a))
        assert np.abs(H - (-np.log(u))).max() < 1e-8

    def test_bad_u_rejected(self):
        with pytest.raises(SimError):
            gen_gh_survival(np.zeros(1), np.zeros(1), np.array([0.0]))


class TestAlaplace:
    def test_moments(self):
        rng = np.random.default_rng(9)
        x = sample_alaplace(400_000, 0.1, -0.5, rng)
        assert x.var() == pytest.approx(2 * 0.1 * (1 + 0.25), rel=0.02)
        assert x.mean() == pytest.approx(-2 * (-0.5) * np.sqrt(0.1), abs=0.005)

    def test_mass_split(self):
        rng = np.random.default_rng(10)
        x = sample_alaplace(200_000, 0.1, -0.5, rng)
        assert np.mean(x < 0) == pytest.approx(0.25, abs=0.005)


class TestPermute:
    def test_multiset_preserved(self):
        data = gen_scenario(ScenarioSpec(scenario=1, n=120), seed=11)
        perm = permute_response(data, seed=1)
        pairs = sorted(zip(data.y, data.d))
        ppairs = sorted(zip(perm.y, perm.d))
        assert pairs == ppairs
        np.testing.assert_array_equal(perm.X_raw, data.X_raw)

    def test_seed_determinism_and_not_identity(self):
        data = gen_scenario(ScenarioSpec(scenario=1, n=120), seed=12)
        p1 = permute_response(data, seed=7)
        p2 = permute_response(data, seed=7)
        np.testing.assert_array_equal(p1.y, p2.y)
        assert not np.array_equal(p1.y, data.y)


class TestSelectionMetrics:
    def test_exact(self):
        m = selection_metrics((1, 2, 0), (1, 2, 0))
        assert m.exact_match and m.truly_active_selected == 2
        assert m.truly_inactive_selected == 0

    def test_null_selection(self):
        m = selection_metrics((0, 0, 0), (1, 2, 0))
        assert not m.exact_match
        assert m.truly_active_selected == 0 and m.truly_inactive_selected == 0

    def test_false_positive_count(self):
        m = selection_metrics((1, 0, 2), (1, 2, 0))
        assert m.truly_inactive_selected == 1


class TestConcordance:
    def test_perfect(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        d = np.ones(4, dtype=int)
        scores = -y  # higher score = shorter survival
        assert concordance_index(scores, y, d) == 1.0

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(13)
        n = 2000
        y = rng.exponential(size=n)
        d = np.ones(n, dtype=int)
        scores = rng.normal(size=n)
        assert concordance_index(scores, y, d) == pytest.approx(0.5, abs=0.02)

    def test_hand_worked_with_censoring(self):
        y = np.array([1.0, 2.0, 3.0, 4.0])
        d = np.array([1, 0, 1, 1])
        scores = np.array([3.0, 1.0, 0.5, 2.0])
        # usable: (0,1) (0,2) (0,3) concordant; (2,3) discordant
        assert concordance_index(scores, y, d) == pytest.approx(0.75)

    def test_no_usable_pairs(self):
        with pytest.raises(SimError):
            concordance_index([1.0, 2.0], [1.0, 2.0], [0, 1])
