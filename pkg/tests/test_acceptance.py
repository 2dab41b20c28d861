"""Acceptance suite: one test per criterion, summarised by the conftest hook."""

import math
import time
from fractions import Fraction
from importlib import resources

import numpy as np
import pytest

from avianwatch.cli import main
from avianwatch.forecasting import ModelSpec, SarimaxParams, build_design, fit, kalman_loglik, run_ablation, to_state_space
from avianwatch.ingestion import AlignedPair
from avianwatch.relevance import (
    IRRELEVANT,
    RELEVANT,
    LabeledCorpus,
    evaluate,
    load_corpus,
    predict,
    stratified_split,
    train_classifier,
)
from avianwatch.stats import vif, wilcoxon_one_tailed
from avianwatch.timeseries import adf_test, cross_correlate, ensure_stationary, kpss_test, lagged_correlation
from conftest import weekly
from test_forecasting import ar1_series, synthetic_ablation_data
from test_stats import columns_with_r, enumeration_pvalue
from test_timeseries import naive_pearson


@pytest.mark.acceptance(1, "lag recovery")
def test_lag_recovery(record_property):
    hits = 0
    t0 = time.perf_counter()
    for seed in range(100):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 4))
        n = 104
        driver = ar1_series(0.5, n + k, int(rng.integers(1 << 30)))
        signal_sd = driver.std()
        # online sees week t+k's cases at week t; noise sd equals signal sd (SNR = 1)
        online = driver[k:] + rng.normal(0, signal_sd, n)
        cases = driver[:n]
        res = lagged_correlation(weekly(online), weekly(cases))
        hits += res.result.lag == -k
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{hits}/100 recovered in {elapsed:.2f} s")
    assert hits >= 95
    assert elapsed < 5.0


@pytest.mark.acceptance(2, "cross-correlation oracle")
def test_cross_correlation_oracle(record_property):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(20, 90))
        a, b = rng.normal(size=n), rng.normal(size=n)
        for c in cross_correlate(AlignedPair(weekly(a), weekly(b)), (-6, 6)):
            xs = a[max(c.lag, 0) : n + min(c.lag, 0)]
            ys = b[max(-c.lag, 0) : n - max(c.lag, 0)]
            worst = max(worst, abs(c.r - naive_pearson(list(xs), list(ys))))
    record_property("detail", f"max abs deviation {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.acceptance(3, "stationarity calibration")
def test_stationarity_calibration(oracles, record_property):
    wn_adf = wn_kpss = rw_adf = rw_kpss = 0
    for seed in range(500):
        e = np.random.default_rng(seed).normal(size=200)
        wn_adf += adf_test(e).stationary
        wn_kpss += kpss_test(e).stationary
        rw = np.cumsum(np.random.default_rng(10_000 + seed).normal(size=200))
        rw_adf += not adf_test(rw).stationary
        rw_kpss += not kpss_test(rw).stationary
    worst = 0.0
    for f in oracles["stationarity"]:
        x = np.array(f["values"])
        worst = max(worst, abs(adf_test(x).statistic - f["adf_stat"]), abs(kpss_test(x).statistic - f["kpss_stat"]))
    record_property(
        "detail",
        f"WN stationary ADF {wn_adf}/500 KPSS {wn_kpss}/500; RW nonstationary ADF {rw_adf}/500 KPSS {rw_kpss}/500; "
        f"reference deviation {worst:.1e} over {len(oracles['stationarity'])} fixtures",
    )
    assert min(wn_adf, wn_kpss, rw_adf, rw_kpss) >= 450
    assert len(oracles["stationarity"]) == 10 and worst <= 1e-4


@pytest.mark.acceptance(4, "ADF-fail KPSS-pass differencing")
def test_adf_fail_kpss_pass(oracles, record_property):
    x = np.array(oracles["bc_like"]["values"])
    adf, kpss = adf_test(x), kpss_test(x)
    _, d, _ = ensure_stationary(weekly(x))
    record_property("detail", f"ADF stationary={adf.stationary} KPSS stationary={kpss.stationary} d_applied={d}")
    assert not adf.stationary and kpss.stationary
    assert d == 1


@pytest.mark.acceptance(5, "Kalman likelihood exactness")
def test_kalman_exactness(oracles, record_property):
    fixtures = oracles["kalman"]
    orders = {(f["p"], f["q"]) for f in fixtures}
    worst = 0.0
    for f in fixtures:
        ss = to_state_space(
            ModelSpec(f["p"], 0, f["q"]),
            SarimaxParams(f["intercept"], (), tuple(f["ar"]), tuple(f["ma"]), sigma2=f["sigma2"]),
        )
        worst = max(worst, abs(kalman_loglik(ss, f["y"]) - f["loglik"]))
    record_property("detail", f"{len(fixtures)} draws over {len(orders)} orders, max abs deviation {worst:.1e}")
    assert orders == {(p, q) for p in range(3) for q in range(3) if p + q <= 2}
    assert all(len(f["y"]) <= 12 for f in fixtures) and len(fixtures) == 50 * len(orders)
    assert worst <= 1e-8


@pytest.mark.acceptance(6, "AR(1) recovery")
def test_ar1_recovery(record_property):
    t0 = time.perf_counter()
    phis = []
    for seed in range(20):
        # two trailing weeks only satisfy the evaluation minimum; the fit sees 300
        y = ar1_series(0.7, 302, seed)
        ds = build_design(weekly(y), [], lag=0, train_weeks=300, eval_weeks=2)
        phis.append(fit(ModelSpec(1, 0, 0), ds, seed=seed).params.ar[0])
    elapsed = time.perf_counter() - t0
    inside = sum(0.6 <= p <= 0.8 for p in phis)
    record_property("detail", f"{inside}/20 in [0.6, 0.8] in {elapsed:.2f} s")
    assert inside >= 18
    assert elapsed < 30.0


@pytest.mark.acceptance(7, "ablation ordering")
def test_ablation_ordering(record_property):
    ordered = 0
    weak = []
    for k in range(50):
        rep = run_ablation(synthetic_ablation_data(500 + k), runs=30, seed=k)
        ordered += rep.table_order_holds()
        p = rep.scenario("iv").wilcoxon_p
        if p is None or p >= 0.01:
            weak.append(f"{500 + k}:{rep.spec.label()}")
    record_property("detail", f"ordering held on {ordered}/50; (iv) vs (i) p >= 0.01 on {len(weak)}/50 {' '.join(weak)}")
    assert ordered >= 40
    assert not weak


@pytest.mark.acceptance(8, "VIF check")
def test_vif(record_property):
    a, b = columns_with_r(0.20)
    rep = vif([a, b])
    record_property("detail", f"r={rep.pearson[0, 1]:.4f} VIF={rep.vif[0]:.4f},{rep.vif[1]:.4f}")
    assert rep.pearson[0, 1] == pytest.approx(0.20, abs=1e-12)
    assert rep.vif == pytest.approx((1.04, 1.04), abs=0.01)


@pytest.mark.acceptance(9, "Wilcoxon exactness")
def test_wilcoxon_exactness(record_property):
    checked = 0
    for n in range(5, 13):
        rng = np.random.default_rng(n)
        for _ in range(5):
            x = rng.normal(0.3, 1, n).round(1)
            y = rng.normal(0, 1, n).round(1)
            if np.count_nonzero(x - y) < 5:
                continue
            assert wilcoxon_one_tailed(x, y) == pytest.approx(enumeration_pvalue(x, y), abs=1e-15)
            checked += 1
    five = wilcoxon_one_tailed([2, 3, 4, 5, 6], [1, 1, 1, 1, 1])
    record_property("detail", f"{checked} fixtures match enumeration; n=5 all-positive p={five}")
    assert five == 0.03125


@pytest.mark.acceptance(10, "classifier floor")
def test_classifier_floor(record_property):
    corpus = load_corpus((resources.files("avianwatch") / "data" / "sample" / "corpus.csv").read_bytes())
    counts = (sum(lab == RELEVANT for _, lab in corpus.items), sum(lab == IRRELEVANT for _, lab in corpus.items))
    train, test = stratified_split(corpus, 0.2, seed=0)
    acc = evaluate(train_classifier(train), test).accuracy

    toy = LabeledCorpus((("flu bird outbreak", RELEVANT), ("funny joke bird", IRRELEVANT)))
    model = train_classifier(toy, alpha=1.0)
    # alpha 1, five-word vocabulary, three tokens per class: every denominator is 8
    rel = {"flu": 2, "bird": 2, "outbreak": 2, "funny": 1, "joke": 1}
    irr = {"flu": 1, "bird": 2, "outbreak": 1, "funny": 2, "joke": 2}
    worst = 0.0
    for text in ("flu", "bird outbreak", "funny joke flu"):
        num = math.prod(Fraction(rel[t], 8) for t in text.split())
        den = math.prod(Fraction(irr[t], 8) for t in text.split())
        worst = max(worst, abs(predict(model, text)[1] - float(num / (num + den))))
    record_property("detail", f"corpus {counts[0]}/{counts[1]} accuracy {acc:.4f}; toy posterior deviation {worst:.1e}")
    assert counts == (1647, 2552)
    assert acc >= 0.75
    assert worst <= 1e-12


@pytest.mark.acceptance(11, "split arithmetic")
def test_split_arithmetic(record_property):
    y = np.arange(65.0)
    lag0 = build_design(weekly(y), [weekly(y)], lag=0)
    lag3 = build_design(weekly(y), [weekly(y)], lag=-3)
    splits = [(lag0.train_weeks, lag0.eval_weeks), (lag3.train_weeks, lag3.eval_weeks)]
    record_property("detail", f"lag 0 {splits[0][0]}/{splits[0][1]}; lag -3 {splits[1][0]}/{splits[1][1]}")
    assert splits == [(52, 13), (49, 13)]


def run_pipeline(out):
    for command in ("ingest", "filter", "correlate", "ablate", "waves"):
        assert main([command, "--sample", "--seed=7", f"--out={out}"]) == 0, command
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


@pytest.mark.acceptance(12, "end-to-end determinism")
def test_end_to_end_determinism(tmp_path, record_property):
    t0 = time.perf_counter()
    first = run_pipeline(tmp_path / "a")
    elapsed = time.perf_counter() - t0
    second = run_pipeline(tmp_path / "b")
    differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    record_property("detail", f"{len(first)} reports, {len(differing)} differ; one pass {elapsed:.1f} s")
    assert first and not differing
    assert elapsed < 60.0
