import math
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import solve_discrete_lyapunov
from scipy.stats import norm

from avianwatch.forecasting import (
    DesignError,
    FitError,
    ModelSpec,
    SarimaxParams,
    SearchError,
    build_design,
    fit,
    forecast,
    grid_search,
    kalman_loglik,
    r2_score,
    run_ablation,
    to_state_space,
)
from avianwatch.forecasting.search import expand_grid, run_seeds
from avianwatch.forecasting.statespace import ar_to_pacf, pacf_to_ar
from conftest import MONDAY, weekly


def ar1_series(phi, n, seed, mu=0.0, burn=100):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=n + burn)
    x = np.zeros(n + burn)
    for t in range(1, n + burn):
        x[t] = phi * x[t - 1] + e[t]
    return mu + x[burn:]


def dataset(values, exog=(), lag=0, train=None, eval_weeks=13):
    return build_design(weekly(values), [weekly(x) for x in exog], lag=lag, train_weeks=train, eval_weeks=eval_weeks)


def reference_filter(T, R, sigma2, mu, y):
    """Plain textbook Kalman filter with full matrices; returns one-step predictions and loglik."""
    r = T.shape[0]
    Z = np.zeros(r)
    Z[0] = 1.0
    Q = sigma2 * np.outer(R, R)
    a = np.zeros(r)
    P = solve_discrete_lyapunov(T, Q)
    preds, ll = [], 0.0
    for obs in y:
        pred = mu + Z @ a
        F = Z @ P @ Z
        v = obs - pred
        preds.append(pred)
        ll += -0.5 * (math.log(2 * math.pi * F) + v * v / F)
        K = P @ Z / F
        a = T @ (a + K * v)
        P = T @ (P - np.outer(K, Z @ P)) @ T.T + Q
    return np.array(preds), ll


class TestSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            ModelSpec(p=5)
        with pytest.raises(ValueError):
            ModelSpec(P=1, s=0)
        with pytest.raises(ValueError):
            ModelSpec(p=-1)
        assert ModelSpec(1, 1, 1, 1, 0, 0, 4).n_diff == 1

    def test_parameter_count(self):
        assert ModelSpec(2, 0, 1, exog_count=2).k_params == 1 + 2 + 2 + 1 + 1


class TestDesign:
    def test_split_lag0(self):
        ds = dataset(np.arange(65.0), [np.arange(65.0)])
        assert (ds.train_weeks, ds.eval_weeks) == (52, 13)

    def test_split_lag3(self):
        x = np.arange(65.0) * 10
        ds = dataset(np.arange(65.0), [x], lag=-3)
        assert (ds.train_weeks, ds.eval_weeks) == (49, 13)
        # the regressor for case week t is the value observed three weeks earlier
        assert ds.exog[0].values[0] == x[0] and ds.endog.values[0] == 3.0
        assert ds.endog.start_week == MONDAY + timedelta(weeks=3)

    def test_too_short(self):
        with pytest.raises(DesignError, match="needs"):
            dataset(np.arange(10.0), [np.arange(10.0)], lag=-3)

    def test_positive_lag_rejected(self):
        with pytest.raises(DesignError):
            dataset(np.arange(30.0), [np.arange(30.0)], lag=1)

    def test_explicit_train_keeps_recent_weeks(self):
        ds = dataset(np.arange(65.0), [], train=40)
        assert len(ds.endog) == 53 and ds.endog.values[0] == 12.0


class TestStateSpace:
    def test_ar1_transition(self):
        ss = to_state_space(ModelSpec(1, 0, 0), SarimaxParams(ar=(0.6,), sigma2=1.0))
        assert ss.transition.tolist() == [[0.6]]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            to_state_space(ModelSpec(2, 0, 0), SarimaxParams(ar=(0.5,)))
        with pytest.raises(ValueError):
            to_state_space(ModelSpec(exog_count=1), SarimaxParams())

    def test_arma11_autocovariances(self):
        phi, theta, s2 = 0.55, -0.3, 1.7
        ss = to_state_space(ModelSpec(1, 0, 1), SarimaxParams(ar=(phi,), ma=(theta,), sigma2=s2))
        P0 = solve_discrete_lyapunov(ss.transition, s2 * np.outer(ss.selection, ss.selection))
        Z = ss.design
        implied = [Z @ np.linalg.matrix_power(ss.transition, h) @ P0 @ Z for h in range(6)]
        g0 = s2 * (1 + 2 * phi * theta + theta**2) / (1 - phi**2)
        g1 = s2 * (1 + phi * theta) * (phi + theta) / (1 - phi**2)
        closed = [g0, g1] + [g1 * phi ** (h - 1) for h in range(2, 6)]
        assert implied == pytest.approx(closed, abs=1e-10)

    def test_white_noise_reduction(self):
        y = np.random.default_rng(1).normal(2, 1.5, 20)
        ss = to_state_space(ModelSpec(), SarimaxParams(intercept=2.0, sigma2=2.25))
        assert kalman_loglik(ss, y) == pytest.approx(norm(2, 1.5).logpdf(y).sum(), abs=1e-10)
        ar0 = to_state_space(ModelSpec(1, 0, 0), SarimaxParams(intercept=2.0, ar=(0.0,), sigma2=2.25))
        assert kalman_loglik(ar0, y) == pytest.approx(kalman_loglik(ss, y), abs=1e-12)

    def test_dense_oracle(self, oracles):
        worst = 0.0
        for f in oracles["kalman"]:
            spec = ModelSpec(f["p"], 0, f["q"])
            ss = to_state_space(spec, SarimaxParams(f["intercept"], (), tuple(f["ar"]), tuple(f["ma"]), sigma2=f["sigma2"]))
            worst = max(worst, abs(kalman_loglik(ss, f["y"]) - f["loglik"]))
        assert worst < 1e-8

    def test_regression_terms(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(15, 2))
        y = 1 + X @ [0.5, -2.0] + rng.normal(size=15)
        ss = to_state_space(ModelSpec(exog_count=2), SarimaxParams(1.0, (0.5, -2.0), sigma2=1.0))
        assert kalman_loglik(ss, y, X) == pytest.approx(norm.logpdf(y - 1 - X @ [0.5, -2.0]).sum(), abs=1e-10)
        with pytest.raises(ValueError):
            kalman_loglik(ss, y)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-0.99, 0.99), min_size=1, max_size=4))
    def test_pacf_round_trip(self, partials):
        phi = pacf_to_ar(np.array(partials))
        assert np.max(np.abs(np.roots(np.r_[1.0, -phi]))) < 1.0
        assert ar_to_pacf(phi) == pytest.approx(partials, abs=1e-8)


class TestFit:
    def test_constant_series_mean(self):
        m = fit(ModelSpec(), dataset(np.full(65, 7.0)))
        assert m.params.intercept == pytest.approx(7.0, abs=1e-6)

    def test_intercept_is_sample_mean(self):
        y = np.random.default_rng(0).normal(5, 2, 65)
        m = fit(ModelSpec(), dataset(y))
        assert m.params.intercept == pytest.approx(y[:52].mean(), abs=1e-6)
        assert m.params.sigma2 == pytest.approx(y[:52].var(), rel=1e-6)

    def test_ar1_agrees_with_frozen_reference(self, oracles):
        for f in oracles["ar1"][:5]:
            y = np.array(f["y"])
            ds = dataset(y, train=len(y) - 2, eval_weeks=2)
            m = fit(ModelSpec(1, 0, 0), ds, seed=f["seed"])
            assert m.params.ar[0] == pytest.approx(f["phi"], abs=0.05)
            assert m.loglik >= f["llf"] - 1e-4 * abs(f["llf"])

    def test_too_few_weeks(self):
        with pytest.raises(FitError):
            fit(ModelSpec(2, 0, 2), dataset(np.random.default_rng(0).normal(size=20), eval_weeks=12))

    def test_deterministic(self):
        y = ar1_series(0.5, 65, 3)
        a = fit(ModelSpec(1, 0, 1), dataset(y), seed=4)
        b = fit(ModelSpec(1, 0, 1), dataset(y), seed=4)
        assert a == b

    def test_estimates_are_stationary_and_invertible(self):
        y = ar1_series(0.9, 65, 8)
        m = fit(ModelSpec(2, 0, 2), dataset(y), seed=1)
        assert m.max_root_modulus < 1.0
        assert m.params.sigma2 > 0

    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 10_000))
    def test_nested_loglik(self, seed):
        y = ar1_series(0.6, 65, seed, mu=3.0)
        ds = dataset(y)
        small = fit(ModelSpec(1, 0, 0), ds, seed=seed)
        large = fit(ModelSpec(2, 0, 0), ds, seed=seed)
        assert large.loglik >= small.loglik - 1e-6


class TestForecast:
    def test_intercept_only(self):
        y = np.random.default_rng(5).normal(3, 1, 65)
        ds = dataset(y)
        m = fit(ModelSpec(), ds)
        assert forecast(m, ds) == pytest.approx(np.full(13, m.params.intercept), abs=1e-12)

    def test_ar1_first_step(self):
        y = ar1_series(0.7, 65, 6, mu=4.0)
        ds = dataset(y)
        m = fit(ModelSpec(1, 0, 0), ds)
        phi, mu = m.params.ar[0], m.params.intercept
        assert forecast(m, ds)[0] == pytest.approx(mu * (1 - phi) + phi * y[51], abs=1e-10)

    def test_matches_reference_filter(self):
        rng = np.random.default_rng(7)
        y = 2.0 + np.convolve(rng.normal(size=70), [1, 0.4, 0.2])[:65]
        ds = dataset(y)
        m = fit(ModelSpec(2, 0, 1), ds, seed=3)
        ss = to_state_space(m.spec, m.params)
        preds, ll = reference_filter(ss.transition, ss.selection, ss.state_cov, m.params.intercept, y)
        assert forecast(m, ds) == pytest.approx(preds[52:], abs=1e-10)
        assert ll == pytest.approx(kalman_loglik(ss, y), abs=1e-9)

    def test_differenced_forecast_by_hand(self):
        y = np.cumsum(np.random.default_rng(8).normal(1, 1, 65))
        ds = dataset(y)
        m = fit(ModelSpec(0, 1, 0, include_intercept=False), ds)
        # random walk without drift: each prediction is the previous actual value
        assert forecast(m, ds) == pytest.approx(y[51:64], abs=1e-10)

    def test_shift_equivariance(self):
        y = ar1_series(0.5, 65, 9, mu=10.0)
        x = np.random.default_rng(9).normal(size=65)
        for spec in (ModelSpec(1, 0, 1, exog_count=1), ModelSpec(2, 0, 0, exog_count=1)):
            base = forecast(fit(spec, dataset(y, [x]), 2), dataset(y, [x]))
            moved = forecast(fit(spec, dataset(y + 250.0, [x]), 2), dataset(y + 250.0, [x]))
            assert moved == pytest.approx(base + 250.0, abs=1e-6)

    def test_horizon_bounds(self):
        y = np.random.default_rng(5).normal(size=65)
        ds = dataset(y)
        m = fit(ModelSpec(), ds)
        assert forecast(m, ds, horizon=4).size == 4
        with pytest.raises(ValueError):
            forecast(m, ds, horizon=14)


class TestR2:
    def test_examples(self):
        a = np.array([1.0, 3.0, 2.0, 5.0])
        assert r2_score(a, a) == 1.0
        assert r2_score(a, np.full(4, a.mean())) == 0.0
        with pytest.raises(ValueError):
            r2_score([2, 2], [1, 2])

    def test_formula(self):
        rng = np.random.default_rng(10)
        a, f = rng.normal(size=13), rng.normal(size=13)
        mean = sum(a) / 13
        expected = 1 - sum((ai - fi) ** 2 for ai, fi in zip(a, f)) / sum((ai - mean) ** 2 for ai in a)
        assert r2_score(a, f) == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.01, 100), st.floats(-1e3, 1e3))
    def test_affine_invariance(self, seed, scale, shift):
        rng = np.random.default_rng(seed)
        a, f = rng.normal(size=13), rng.normal(size=13)
        assert r2_score(scale * a + shift, scale * f + shift) == pytest.approx(r2_score(a, f), rel=1e-9, abs=1e-9)


WN_GRID = expand_grid(p=(0, 1), d=(0,), q=(0,))


def winners(generate, runs=100):
    out = []
    for seed in range(runs):
        ranked = grid_search(WN_GRID, dataset(generate(seed)), seed=seed)
        out.append((ranked[0].spec.p, ranked[0].spec.d, ranked[0].spec.q))
    return out


@pytest.fixture(scope="module")
def white_noise_winners():
    return winners(lambda seed: np.random.default_rng(seed).normal(size=65))


class TestGridSearch:
    def test_single_spec(self):
        ranked = grid_search([(1, 0, 0, 0, 0, 0, 0)], dataset(ar1_series(0.5, 65, 1)))
        assert len(ranked) == 1 and ranked[0].spec.p == 1

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            expand_grid(P=(1,), s=0)
        assert len(expand_grid()) == 18

    def test_all_fail(self):
        with pytest.raises(SearchError):
            grid_search([(4, 0, 4, 0, 0, 0, 0)], dataset(np.random.default_rng(0).normal(size=22), eval_weeks=10))

    def test_white_noise_rate_matches_aic_theory(self, white_noise_winners):
        # AIC picks the extra AR term when the LR statistic exceeds 2: P(chi2_1 > 2) ~ 0.157
        share = sum(w == (0, 0, 0) for w in white_noise_winners) / len(white_noise_winners)
        assert share == pytest.approx(1 - 0.1573, abs=3 * math.sqrt(0.157 * 0.843 / 100))

    @pytest.mark.xfail(strict=True, reason="AIC selection rate is bounded near 84% by the chi-square(1) tail")
    def test_white_noise_prefers_null_in_90_percent(self, white_noise_winners):
        assert sum(w == (0, 0, 0) for w in white_noise_winners) >= 90

    def test_ar1_prefers_ar1(self):
        wins = winners(lambda seed: ar1_series(0.7, 65, seed), runs=50)
        assert sum(w == (1, 0, 0) for w in wins) >= 45

    def test_eval_r2_criterion(self):
        ranked = grid_search(WN_GRID, dataset(ar1_series(0.8, 65, 3)), criterion="eval_r2")
        r2s = [r.eval_r2 for r in ranked]
        assert r2s == sorted(r2s, reverse=True)


def synthetic_ablation_data(seed, n=65, lead=3):
    rng = np.random.default_rng(seed)
    x1 = ar1_series(0.6, n + lead, rng.integers(1 << 30))
    x2 = ar1_series(0.6, n + lead, rng.integers(1 << 30))
    y = 10 + x1[:n] + x2[:n] + rng.normal(size=n)
    # exog observed `lead` weeks before the cases they explain
    return build_design(
        weekly(y, MONDAY + timedelta(weeks=lead)),
        [weekly(x1[:n]), weekly(x2[:n])],
        lag=-lead,
        exog_names=("posts", "trends"),
    )


class TestAblation:
    def test_report_structure(self):
        ds = synthetic_ablation_data(1)
        rep = run_ablation(ds, runs=3, seed=5, spec=ModelSpec(1, 0, 0))
        assert [s.scenario for s in rep.scenarios] == ["i", "ii", "iii", "iv"]
        assert {s.runs for s in rep.scenarios} == {3}
        assert rep.scenario("i").wilcoxon_p is None
        assert all(s.mean_r2 <= 1 for s in rep.scenarios)
        text = rep.to_text()
        assert "scenario,exog_posts,exog_trends,mean_r2,std_r2,runs,wilcoxon_p_vs_baseline" in text
        assert "pearson_exog,vif_posts,vif_trends" in text
        assert rep.scenario("iv").mean_r2 > rep.scenario("i").mean_r2

    def test_single_run_has_no_std(self):
        rep = run_ablation(synthetic_ablation_data(2), runs=1, seed=0, spec=ModelSpec(1, 0, 0))
        assert rep.scenario("iv").std_r2 is None
        assert ",NA," in rep.to_text()

    def test_needs_two_exog(self):
        with pytest.raises(ValueError):
            run_ablation(dataset(np.random.default_rng(0).normal(size=65)), runs=2)

    def test_seeds_shared_and_distinct(self):
        seeds = run_seeds(7, 30)
        assert len(set(seeds)) == 30 and seeds == run_seeds(7, 30)
