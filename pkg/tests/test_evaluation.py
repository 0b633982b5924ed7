import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ifpred.arma import ArmaModel, FitReport
from ifpred.correlation import SystemParams
from ifpred.evaluation import (ALL_KINDS, EvaluationResult, PredictorDesign, PredictorKind,
                               Scenario, TECH_SCENARIOS, build_tech_scenario, design_predictor,
                               doppler_normalized, emit_results, evaluate_scenario, nmse,
                               run_baselines, running_mean, to_db)
from ifpred.kalman import DecimatedPredictor, SteadyStatePredictor
from ifpred.simulation import ScenarioConfig, simulate

LAST, MEAN = PredictorKind.LAST_VALUE, PredictorKind.MEAN_VALUE


def small_scenario(name="tiny", realizations=6, horizon=120, **params):
    prm = SystemParams(**{"nu": 0.0191, **params})
    return Scenario(name, ScenarioConfig(params=prm, horizon=horizon, realizations=realizations,
                                         seed=3))


# -- metric --------------------------------------------------------------------

def test_nmse_examples():
    assert nmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert nmse([1.0, 1.0], [0.0, 0.0]) == 1.0
    assert nmse([2.0], [1.0]) == pytest.approx(0.25)
    assert to_db(1.0) == 0.0
    assert to_db(0.0) == -150.0
    with pytest.raises(ValueError):
        nmse([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        nmse([1.0], [1.0, 2.0])


@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=30), st.floats(0.1, 10.0))
@settings(max_examples=60)
def test_nmse_scale_invariant(values, c):
    true = np.array(values)
    pred = np.roll(true, 1)
    assert nmse(c * true, c * pred) == pytest.approx(nmse(true, pred), rel=1e-9)


# -- baselines -------------------------------------------------------------------

def test_running_mean_and_alignment():
    x = np.array([1.0, 3.0, 2.0, 6.0])
    np.testing.assert_allclose(running_mean(x), [1.0, 2.0, 2.0, 3.0])
    pairs = run_baselines(x, 2)
    np.testing.assert_array_equal(pairs[LAST][0], [2.0, 6.0])
    np.testing.assert_array_equal(pairs[LAST][1], [1.0, 3.0])
    np.testing.assert_allclose(pairs[MEAN][1], [1.0, 2.0])
    with pytest.raises(ValueError):
        run_baselines(x, 0)
    with pytest.raises(ValueError):
        run_baselines(x, 4)


def test_baselines_on_constant_trace():
    pairs = run_baselines(np.full(50, 3.0), 4)
    for kind in (LAST, MEAN):
        assert nmse(*pairs[kind]) == 0.0


def test_baselines_on_iid_trace():
    rng = np.random.default_rng(0)
    x = rng.exponential(1.0, 400_000)        # var = 1, E[x^2] = 2
    pairs = run_baselines(x, 3)
    assert nmse(*pairs[LAST]) == pytest.approx(1.0, rel=0.02)
    assert nmse(*pairs[MEAN]) == pytest.approx(0.5, rel=0.02)


# -- technology scenarios ------------------------------------------------------

def test_doppler_examples():
    kmh = 1 / 3.6
    assert doppler_normalized(6 * kmh, 2e9, 1e-3) == pytest.approx(0.0222, abs=1e-4)
    assert doppler_normalized(40 * kmh, 2e9, 1e-3) == pytest.approx(0.148, abs=1e-3)
    assert doppler_normalized(6 * kmh, 2.4e9, 4.6e-3) == pytest.approx(0.1227, abs=1e-3)
    with pytest.raises(ValueError):
        doppler_normalized(0.0, 2e9, 1e-3)


def test_tech_scenarios():
    assert {k: v.eta for k, v in TECH_SCENARIOS.items()} == {"LTE1": 225, "LTE2": 35,
                                                            "LTE3": 17, "WSN": 50}
    lte2 = build_tech_scenario("lte-2")
    assert lte2.params().ell == 20 and lte2.params().mu == 0.01
    assert 2 * math.pi * lte2.eta * lte2.nu == pytest.approx(2.404825557695773)
    with pytest.raises(KeyError):
        build_tech_scenario("5G")


# -- design and evaluation ---------------------------------------------------------

def test_design_uses_parameters_only():
    sc = small_scenario()
    d = design_predictor(PredictorKind.INTERFERENCE, sc)
    assert d.decimation == 1 and d.report.met_target
    assert isinstance(d.build(), SteadyStatePredictor)


def test_slow_channel_is_decimated():
    tech = build_tech_scenario("LTE1")
    sc = Scenario("lte1", ScenarioConfig(params=tech.params(), horizon=100), decimate_above=100)
    d = design_predictor(PredictorKind.INTERFERENCE, sc)
    assert d.decimation > 1
    pred = d.build()
    assert isinstance(pred, (SteadyStatePredictor, DecimatedPredictor))


def test_evaluate_with_supplied_traces_matches_generated():
    sc = small_scenario()
    a = evaluate_scenario(sc, deltas=(1, 3), batch=4)
    X = np.array([tr.values for tr in simulate(sc.config)])
    b = evaluate_scenario(sc, deltas=(1, 3), designs=a.designs, traces=X, batch=4)
    assert a.realizations == b.realizations == 6
    for kind in ALL_KINDS:
        for d in (1, 3):
            assert a.nmse(kind, d) == pytest.approx(b.nmse(kind, d), rel=1e-12)


def test_equal_power_aggregation_is_pooled_ratio():
    sc = small_scenario(realizations=4)
    X = np.array([tr.values for tr in simulate(sc.config)])
    res = evaluate_scenario(sc, kinds=[LAST], deltas=(2,), traces=X)
    true, guess = run_baselines(X, 2)[LAST]
    assert res.nmse(LAST, 2) == pytest.approx(nmse(true.ravel(), guess.ravel()), rel=1e-12)
    per = [nmse(t, g) for t, g in zip(true, guess) if np.any(t)]
    assert len(res.per_realization[LAST, 2]) == len(per)


def test_batch_size_does_not_change_result():
    sc = small_scenario()
    a = evaluate_scenario(sc, deltas=(1, 2), batch=6)
    b = evaluate_scenario(sc, deltas=(1, 2), batch=2, designs=a.designs)
    for kind in ALL_KINDS:
        assert a.nmse(kind, 2) == pytest.approx(b.nmse(kind, 2), rel=1e-9)


def test_bad_horizons_rejected():
    with pytest.raises(ValueError):
        evaluate_scenario(small_scenario(), kinds=[LAST], deltas=(0, 1))


# -- crossing ----------------------------------------------------------------------

def _synthetic(curve_a, curve_b):
    deltas = tuple(range(1, len(curve_a) + 1))
    res = EvaluationResult("s", (LAST, MEAN), deltas, 1)
    for kind, curve in ((LAST, curve_a), (MEAN, curve_b)):
        for d, v in zip(deltas, curve):
            res.num[kind, d], res.den[kind, d] = 10 ** (v / 10), 1.0
    return res


def test_crossing_interpolates():
    res = _synthetic([-6, -4, -2, 0, 2], [-1, -1, -1, -1, -1])
    assert res.first_crossing(LAST) == 4
    assert res.crossing_point(LAST) == pytest.approx(3.5)
    assert res.crossing(LAST) == 4
    res = _synthetic([-6, -4, -1.5, 0], [-1, -1, -1, -1])
    assert res.first_crossing(LAST) == 4
    assert res.crossing_point(LAST) == pytest.approx(3 + 0.5 / 1.5)
    assert res.crossing(LAST) == 3
    assert _synthetic([-6, -5], [-1, -1]).crossing(LAST) is None
    assert _synthetic([0, -5], [-1, -1]).crossing_point(LAST) == 1.0


# -- output ------------------------------------------------------------------------

def test_emit_results(tmp_path):
    sc = small_scenario(realizations=3, horizon=60)
    res = evaluate_scenario(sc, kinds=[LAST, MEAN], deltas=(1, 2, 5))
    out = tmp_path / "r.csv"
    emit_results(res, out, tmp_path / "h.csv", tmp_path / "f.csv")
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["scenario", "predictor", "delta", "nmse_db", "realizations"]
    assert len(rows) == 1 + 2 * 3
    assert rows[1][:3] == ["tiny", "last_value", "1"] and rows[1][4] == "3"
    first = out.read_bytes()
    emit_results(evaluate_scenario(sc, kinds=[LAST, MEAN], deltas=(1, 2, 5)), out)
    assert out.read_bytes() == first
    hist = list(csv.reader((tmp_path / "h.csv").open()))
    assert sum(int(r[5]) for r in hist[1:] if r[1] == "last_value" and r[2] == "1") == 3


def test_emit_empty_and_unwritable(tmp_path):
    out = tmp_path / "e.csv"
    emit_results([], out)
    assert out.read_text().strip() == "scenario,predictor,delta,nmse_db,realizations"
    with pytest.raises(OSError):
        emit_results([], tmp_path / "missing" / "x.csv")


def test_design_fit_grid_written(tmp_path):
    rep = FitReport(np.full((3, 3), np.nan), (1, 0), target_db=-30.0)
    rep.mse_grid[1, 0] = -40.0
    design = PredictorDesign(PredictorKind.INTERFERENCE, ArmaModel([1.0, -0.5], [1.0], 1.0), rep)
    res = EvaluationResult("s", (), (1,), 0, designs={PredictorKind.INTERFERENCE: design})
    emit_results(res, tmp_path / "r.csv", fits_path=tmp_path / "f.csv")
    rows = list(csv.reader((tmp_path / "f.csv").open()))
    assert rows[1] == ["s", "interference", "1", "0", "-40.0000", "1"]
    assert rows[2][4] == ""
