from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.pipeline import make_pipeline
from sklearn.utils.estimator_checks import check_get_params_invariance, check_set_params

from cargoshock.analytics import (
    UNKNOWN,
    CalibrationError,
    DropTrial,
    GForceTransformer,
    ImpactClass,
    LambdaCalibrator,
    LegOverlapError,
    aggregate,
    assign_leg,
    calibrate_lambda,
    classify_impact,
    raw_to_gforce,
    raw_to_gforce_many,
    read_drop_csv,
    write_drop_csv,
)
from cargoshock.records import RawTriple, StoredRecord
from cargoshock.world import LegColor, LegDef, LegKind

LEGS = (
    LegDef("road", LegKind.LAND, 0, 100, LegColor.RED),
    LegDef("ship", LegKind.SEA, 100, 200, LegColor.BLUE),
    LegDef("last", LegKind.LAND, 200, 300, LegColor.GREEN),
)


def stored(ts, raw, device="d"):
    return StoredRecord(device, 0, ts, 50.0, *raw, 0.0, 0.0, None, None)


# -- conversion ---------------------------------------------------------------

def test_gforce_examples():
    assert raw_to_gforce((0, 0, 0), 1 / 32) == 0.0
    assert raw_to_gforce((0, -32, 0), 1 / 32) == 1.0
    assert raw_to_gforce((3, 4, 0), 2.0) == 10.0
    with pytest.raises(ValueError):
        raw_to_gforce((1, 0, 0), 0)


@given(st.tuples(*[st.integers(-512, 512)] * 3), st.floats(1e-4, 10))
def test_gforce_scalar_matches_vectorized(raw, lam):
    v = raw_to_gforce(raw, lam)
    assert raw_to_gforce_many([raw], lam)[0] == pytest.approx(v, rel=1e-15, abs=0)
    assert v >= 0


@given(st.tuples(*[st.integers(-512, 512)] * 3), st.floats(1e-3, 1), st.floats(1.0001, 5))
def test_gforce_monotone_in_lambda(raw, lam, k):
    assert raw_to_gforce(raw, lam * k) >= raw_to_gforce(raw, lam)


def test_classify_boundary():
    assert classify_impact(8.0, 8.0) is ImpactClass.HIGH
    assert classify_impact(7.999, 8.0) is ImpactClass.LOW
    with pytest.raises(ValueError):
        classify_impact(1, 0)


# -- calibration --------------------------------------------------------------

def test_calibrate_exact():
    trials = [DropTrial(g, RawTriple(0, 0, int(g * 40))) for g in (1, 2, 5, 10)]
    cal = calibrate_lambda(trials)
    assert cal.lam == pytest.approx(1 / 40, rel=1e-12)
    assert cal.residual_rms == pytest.approx(0, abs=1e-12)


def test_calibrate_errors():
    with pytest.raises(CalibrationError, match="at least one"):
        calibrate_lambda([])
    with pytest.raises(CalibrationError, match="trial 1"):
        calibrate_lambda([DropTrial(1, RawTriple(0, 0, 32)), DropTrial(2, RawTriple(0, 0, 0))])


def test_drop_csv_round_trip(tmp_path):
    trials = [DropTrial(1.25, RawTriple(1, -2, 40)), DropTrial(3.0, RawTriple(0, 0, 96))]
    p = tmp_path / "d.csv"
    write_drop_csv(trials, p)
    assert read_drop_csv(p) == trials


def test_drop_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("g,x,y,z\n")
    with pytest.raises(CalibrationError, match=":1:"):
        read_drop_csv(p)
    p.write_text("known_g,x,y,z\n1,2,3,4\n1,2,x,4\n")
    with pytest.raises(CalibrationError, match=":3:"):
        read_drop_csv(p)


def test_bundled_drop_csv():
    from importlib.resources import files

    trials = read_drop_csv(files("cargoshock.data") / "demo_drops.csv")
    assert len(trials) == 12
    assert calibrate_lambda(trials).lam == pytest.approx(1 / 32, rel=0.02)


def test_estimators_follow_sklearn_conventions():
    est = LambdaCalibrator()
    check_get_params_invariance("LambdaCalibrator", est)
    check_set_params("LambdaCalibrator", est)
    X = np.array([[0, 0, 32], [0, 64, 0], [96, 0, 0]])
    y = np.array([1.0, 2.0, 3.0])
    est.fit(X, y)
    assert est.lambda_ == pytest.approx(1 / 32)
    assert est.score(X, y) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        LambdaCalibrator().fit(X, y[:2])
    with pytest.raises(ValueError, match="3 columns"):
        LambdaCalibrator().fit(X[:, :2], y)
    pipe = make_pipeline(GForceTransformer(lam=0.5))
    assert pipe.fit_transform(X).tolist() == [[16.0], [32.0], [48.0]]


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        LambdaCalibrator().predict([[1, 2, 3]])


# -- legs ---------------------------------------------------------------------

def test_assign_leg_boundaries():
    assert assign_leg(0, LEGS) == "road"
    assert assign_leg(99, LEGS) == "road"
    assert assign_leg(100, LEGS) == "ship"
    assert assign_leg(300, LEGS) == "last"
    assert assign_leg(301, LEGS) == UNKNOWN
    assert assign_leg(-1, LEGS) == UNKNOWN
    assert assign_leg(5, ()) == UNKNOWN


def test_overlapping_legs_rejected():
    legs = LEGS + (LegDef("x", LegKind.SEA, 250, 260),)
    with pytest.raises(LegOverlapError, match="'last' and 'x'"):
        aggregate([], legs, 1 / 32)


def test_aggregate_stats():
    recs = [
        stored(10, (0, 0, 320)),   # 10 g
        stored(50, (0, 0, 96)),    # 3 g
        stored(150, (0, 0, 128)),  # 4 g
        stored(400, (0, 0, 256)),  # 8 g, outside all legs
    ]
    aggs = aggregate(recs, LEGS, 1 / 32, 8.0)
    stats = {a.stats.leg_label: a.stats for a in aggs}
    assert [a.stats.leg_label for a in aggs] == ["road", "ship", "last", UNKNOWN]
    assert (stats["road"].n_total, stats["road"].n_high, stats["road"].n_low) == (2, 1, 1)
    assert stats["road"].max_g == 10 and stats["road"].mean_g == 6.5
    assert stats["ship"].kind == "SEA" and stats["ship"].n_high == 0
    assert stats["last"].n_total == 0 and stats["last"].max_g == 0
    assert stats[UNKNOWN].n_high == 1 and stats[UNKNOWN].kind == UNKNOWN


@given(st.lists(st.tuples(st.integers(-50, 350), st.integers(-512, 512)), max_size=40, unique_by=lambda t: t[0]))
def test_aggregate_partitions_records(items):
    recs = [stored(ts, (0, 0, z)) for ts, z in items]
    aggs = aggregate(recs, LEGS, 1 / 32, 8.0)
    assert sum(a.stats.n_total for a in aggs) == len(recs)
    for a in aggs:
        assert a.stats.n_high + a.stats.n_low == a.stats.n_total
        if a.impacts:
            assert a.stats.max_g == max(i.v_g for i in a.impacts)
            assert a.stats.mean_g == pytest.approx(math.fsum(i.v_g for i in a.impacts) / len(a.impacts))


def test_single_sea_high_impact():
    aggs = aggregate([stored(150, (0, 0, 320))], LEGS, 1 / 32, 8.0)
    stats = {a.stats.leg_label: a.stats for a in aggs}
    assert stats["ship"].n_high == 1
    assert sum(s.n_total for k, s in stats.items() if k != "ship") == 0


def test_empty_records_give_zero_stats():
    aggs = aggregate([], LEGS, 1 / 32)
    assert all(a.stats.n_total == 0 and a.stats.max_g == 0 for a in aggs)
    assert len(aggs) == len(LEGS) + 1
