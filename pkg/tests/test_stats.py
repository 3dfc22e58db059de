import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percwalk.env import Direction, Environment
from percwalk.regen import RegenRecord
from percwalk.stats import (TailEstimate, autocorrelation, diagnostics, gamma_from_zeta, hill_estimate,
                            ks_two_sample, lambda_for_gamma, pooled_autocorrelation, regen_tail_fit,
                            scaling_slope, theta_deviation_check, velocity_estimate, zeta_estimate)
from percwalk.traps import backtrack_BK

UNIT = Direction((1, 0), 1.0)


def record_from_increments(dt, dl, bias=UNIT):
    taus = np.concatenate([[1], 1 + np.cumsum(dt)])
    lv = np.concatenate([[1], 1 + np.cumsum(dl)])
    return RegenRecord.from_levels(taus, lv, bias)


def test_zeta_exponential_rate_two():
    x = np.random.default_rng(1).exponential(0.5, 10 ** 5)
    est = zeta_estimate(x, n_boot=50)
    assert est.exponent == pytest.approx(2.0, abs=0.05)
    assert est.r2 > 0.98 and est.stderr > 0 and est.method == "log-linear"
    lo, hi = est.ci()
    assert lo < est.exponent < hi


def test_zeta_geometric_lattice():
    # P(X > h) = e^{-h} on the integers
    x = np.random.default_rng(2).geometric(1 - math.exp(-1.0), 10 ** 5) - 1
    assert zeta_estimate(x).exponent == pytest.approx(1.0, abs=0.05)


def test_zeta_degenerate_inputs():
    with pytest.raises(ValueError):
        zeta_estimate(np.full(5000, 3.0))
    env = Environment(1, 1.0, 2)
    bk = [backtrack_BK(env, UNIT, (0, 0), box_radius=6) for _ in range(1000)]
    with pytest.raises(ValueError):
        zeta_estimate(bk)


def test_gamma_arithmetic():
    assert gamma_from_zeta(2, 0.5) == 2
    assert gamma_from_zeta(1.5, 0.75) == 1
    with pytest.raises(ValueError):
        gamma_from_zeta(0, 1)
    with pytest.raises(ValueError):
        lambda_for_gamma(1, -1)


@given(st.floats(0.01, 10), st.floats(0.1, 5))
def test_gamma_round_trip(zeta, gamma):
    assert gamma_from_zeta(zeta, lambda_for_gamma(zeta, gamma)) == pytest.approx(gamma, rel=1e-14)


def test_velocity_examples():
    rec = record_from_increments([6] * 200, [3] * 200)
    v, (lo, hi) = velocity_estimate([rec])
    assert v == 0.5 and lo == hi == 0.5
    with pytest.raises(ValueError):
        velocity_estimate([])
    with pytest.raises(ValueError):
        velocity_estimate([record_from_increments([6] * 5, [3] * 5)])


def test_velocity_matches_displacement():
    from percwalk.experiments import WalkParams, run_walks, summarize_walks
    params = WalkParams(0.7, (1, 0), 0.55, 200_000, confirm_horizon=5000)
    res = run_walks(params, 8, seed=3, threads=1)
    summ = summarize_walks(res, params)
    lo, hi = summ["v_ci"]
    disp = np.array([r["final_level"] for r in res]) / params.n_steps
    se = disp.std(ddof=1) / math.sqrt(disp.size)
    assert lo - 3 * se <= disp.mean() <= hi + 3 * se


def test_regen_tail_fit_known_laws():
    rng = np.random.default_rng(4)
    pareto = (1 - rng.random(10 ** 5)) ** (-1 / 1.5)
    est = regen_tail_fit(pareto)
    assert est.exponent == pytest.approx(1.5, abs=0.1) and est.is_power_law()
    expo = rng.exponential(50, 10 ** 5)
    assert not regen_tail_fit(expo).is_power_law()
    with pytest.raises(ValueError):
        regen_tail_fit(pareto[:500])


def test_hill_cross_check():
    x = (1 - np.random.default_rng(5).random(10 ** 5)) ** (-1 / 1.5)
    assert hill_estimate(x, 2000).exponent == pytest.approx(1.5, abs=0.1)


def test_scaling_slope_examples():
    n = np.geomspace(10, 1e5, 8)
    assert scaling_slope(zip(n, n ** 0.7)).exponent == pytest.approx(0.7, abs=1e-9)
    assert scaling_slope(zip(n, np.full(8, 3.0))).exponent == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        scaling_slope(zip(n[:4], n[:4]))
    with pytest.raises(ValueError):
        scaling_slope(zip(np.geomspace(10, 500, 6), np.ones(6)))


def test_scaling_slope_pareto_medians():
    from percwalk.nearstable import HeavyTailSpec, partial_sum_replicas
    spec = HeavyTailSpec.pareto(1.5)
    ns = [2 ** k for k in range(6, 18, 2)]
    S = partial_sum_replicas(spec, ns, 400, seed=9)
    med = np.median(np.abs(S - np.asarray(ns) * spec.mu), axis=0)
    assert scaling_slope(zip(ns, med)).exponent == pytest.approx(1 / 1.5, abs=0.05)


def test_tail_estimate_invariants():
    with pytest.raises(ValueError):
        TailEstimate(1.0, 0.0, -1.0, (0, 1), 1.0, "log-linear")
    with pytest.raises(ValueError):
        TailEstimate(1.0, 0.0, 0.1, (1, 1), 1.0, "log-linear")
    js = TailEstimate(1.0, 0.0, 0.1, (0, 1), 0.99, "log-linear").to_json()
    assert js["estimate"] == 1.0 and js["fit_range"] == [0, 1]


def test_theta_examples():
    unit = [record_from_increments([1] * 500, [1] * 500)]
    tab = theta_deviation_check(unit, [10, 100, 400], D=1.0)
    assert tab.eta_hat == 1.0 and (tab.fraction == 0).all()
    short = theta_deviation_check(unit, [10, 10 ** 6], D=1.0)
    assert short.excluded.tolist() == [0, 1] and math.isnan(short.fraction[1])


def test_theta_zero_tolerance_all_exceed():
    rng = np.random.default_rng(6)
    recs = [record_from_increments(rng.integers(1, 5, 400), rng.geometric(0.4, 400)) for _ in range(30)]
    tab = theta_deviation_check(recs, [50, 100, 200], D=0.0)
    assert (tab.fraction > 0.9).all()


def test_theta_geometric_decreasing():
    rng = np.random.default_rng(7)
    recs = [record_from_increments(np.ones(3000, int), rng.geometric(0.3, 3000)) for _ in range(400)]
    tab = theta_deviation_check(recs, [10, 100, 1000, 5000], D=0.3)
    assert tab.decays and tab.fraction[0] > tab.fraction[-1]


def test_diagnostics():
    rng = np.random.default_rng(8)
    x = rng.normal(size=20_000)
    diag = diagnostics(x)
    assert abs(diag["autocorrelation"][1]) < diag["autocorrelation_bound"]
    assert diag["quantiles"][0.5] == pytest.approx(0.0, abs=0.05)
    with pytest.raises(ValueError):
        diagnostics(x[:5])
    with pytest.raises(ValueError):
        autocorrelation(np.ones(100))
    ac, pairs = pooled_autocorrelation([x[:10_000], x[10_000:]])
    assert pairs == 19_998 and abs(ac) < 4 / math.sqrt(pairs)


def test_ks_identical_halves_uniform_pvalues():
    rng = np.random.default_rng(9)
    ps = [ks_two_sample(rng.normal(size=500), rng.normal(size=500))[1] for _ in range(300)]
    from scipy import stats
    assert stats.kstest(ps, "uniform").pvalue > 0.001


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(1, 20), min_size=100, max_size=300))
def test_velocity_is_ratio_of_sums(dts):
    dts = np.asarray(dts)
    dls = (dts + 1) // 2
    v, _ = velocity_estimate([record_from_increments(dts, dls)])
    assert v == pytest.approx(dls.sum() / dts.sum(), rel=1e-12)


def test_stream_of_records_pooled():
    a = record_from_increments([2] * 60, [1] * 60)
    b = record_from_increments([4] * 60, [1] * 60)
    v, _ = velocity_estimate([a, b])
    assert v == pytest.approx(120 / 360)
