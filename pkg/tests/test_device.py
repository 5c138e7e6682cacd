from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cargoshock.device import (
    BatteryParams,
    ConfigError,
    Device,
    DeviceConfig,
    EventBuffer,
    MonotonicityError,
    NetworkKind,
    battery_step,
    buffer_push,
    detect_trigger,
    flush,
    quantize_acceleration,
    quantize_many,
    select_network,
    trigger_mask,
    uplink_due,
)
from cargoshock.records import RawTriple, SensorRecord

G, TWO = NetworkKind.THREE_G, NetworkKind.TWO_G


def rec(ts, x=0, y=-32, z=0, battery=100.0):
    return SensorRecord(ts=ts, battery_pct=battery, accel=RawTriple(x, y, z), lat=0.0, lon=0.0)


# -- quantize -----------------------------------------------------------------

@pytest.mark.parametrize(
    "accel, cpg, expected",
    [
        ((0, 0, 0), 32, (0, 0, 0)),
        ((0, 0, 0), 7.5, (0, 0, 0)),
        ((0, -1, 0), 32, (0, -32, 0)),
        ((0, -100, 0), 32, (0, -512, 0)),
        ((100, 0, -1e300), 32, (512, 0, -512)),
        # ties go away from zero
        ((0.5 / 32, -0.5 / 32, 1.5 / 32), 32, (1, -1, 2)),
        ((2.5 / 32, -2.5 / 32, 0.49 / 32), 32, (3, -3, 0)),
    ],
)
def test_quantize_examples(accel, cpg, expected):
    assert quantize_acceleration(accel, cpg) == RawTriple(*expected)
    assert tuple(quantize_many(np.array([accel], dtype=float), cpg)[0]) == expected


def test_quantize_rejects_nonpositive_scale():
    with pytest.raises(ValueError):
        quantize_acceleration((0, 0, 0), 0)


def test_at_rest_reads_one_g_on_gravity_axis():
    raw = quantize_acceleration((0.0, -1.0, 0.0), 32)
    assert raw == (0, -32, 0)
    assert math.sqrt(raw.magnitude_sq()) == pytest.approx(32)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3), st.floats(0.01, 1000))
def test_quantize_saturates_and_matches_vectorized(accel, cpg):
    raw = quantize_acceleration(accel, cpg)
    assert all(-512 <= c <= 512 for c in raw)
    assert tuple(quantize_many(np.array([accel]), cpg)[0]) == tuple(raw)


# -- trigger ------------------------------------------------------------------

def test_trigger_examples():
    assert detect_trigger((0, 0, 0), 0) is False
    assert detect_trigger((3, 4, 0), 4) is True
    assert detect_trigger((3, 4, 0), 5) is False  # strict


def test_trigger_matches_float_filter():
    rng = np.random.default_rng(7)
    raw = rng.integers(-120, 121, size=(100_000, 3))
    mask = trigger_mask(raw, 64)
    brute = np.sqrt((raw.astype(float) ** 2).sum(axis=1)) > 64
    assert np.array_equal(mask, brute)
    sample = raw[:2000]
    assert [detect_trigger(r, 64) for r in sample] == list(mask[:2000])


@given(st.tuples(*[st.integers(-512, 512)] * 3), st.integers(0, 887))
def test_trigger_scalar_vs_sqrt(sample, threshold):
    assert detect_trigger(sample, threshold) == (math.sqrt(sum(c * c for c in sample)) > threshold)


# -- buffer -------------------------------------------------------------------

def test_buffer_push_empty():
    buf = buffer_push(EventBuffer(3), rec(1))
    assert len(buf) == 1 and buf.dropped_count == 0


def test_buffer_push_full_evicts_oldest():
    buf = EventBuffer(2, [rec(1), rec(2)])
    buffer_push(buf, rec(3))
    assert [r.ts for r in buf.records] == [2, 3]
    assert buf.dropped_count == 1


def test_buffer_replay_keeps_last_k():
    k = 5
    buf = EventBuffer(k)
    pushed = [rec(t) for t in range(10, 10 + k + 3)]
    for r in pushed:
        buf.push(r)
    # replay oracle: the last k pushes survive
    assert list(buf.records) == pushed[-k:]
    assert buf.dropped_count == 3


def test_buffer_rejects_non_monotonic():
    buf = EventBuffer(4, [rec(5)])
    with pytest.raises(MonotonicityError):
        buf.push(rec(5))
    with pytest.raises(MonotonicityError):
        buf.push(rec(4))
    assert len(buf) == 1


@given(st.integers(1, 8), st.lists(st.sampled_from(["push", "flush"]), max_size=60))
def test_buffer_accounting(capacity, ops):
    buf = EventBuffer(capacity)
    ts = 0
    for op in ops:
        if op == "push":
            ts += 1
            buf.push(rec(ts))
        else:
            buf.clear_flushed()
        assert len(buf) <= capacity
        held = [r.ts for r in buf.records]
        assert held == sorted(set(held))
        assert buf.dropped_count == buf.pushed_count - len(buf) - buf.flushed_count


# -- battery ------------------------------------------------------------------

def test_battery_identity():
    assert battery_step(73.5, BatteryParams(), 0, 0, 0) == 73.5


def test_battery_flush_costs_more():
    p = BatteryParams()
    assert battery_step(80, p, 3600, 360_000, 1) < battery_step(80, p, 3600, 360_000, 0)


def test_battery_hand_computed():
    p = BatteryParams(capacity_mah=1000, idle_ma=0.5, sample_ua_per_hz=0.036, uplink_mah_per_flush=2.0)
    # idle 0.5 mAh + samples 0.036e-3 * 100000 / 3600 = 0.001 mAh + 2 mAh -> 2.501 mAh = 0.2501 %
    assert battery_step(50.0, p, 3600, 100_000, 1) == pytest.approx(50.0 - 0.2501, abs=1e-12)


def test_battery_clamps_at_zero():
    assert battery_step(0.01, BatteryParams(), 10 * 86400, 0, 5) == 0.0


def test_battery_rejects_negative_elapsed():
    with pytest.raises(ValueError):
        battery_step(50, BatteryParams(), -1, 0, 0)


def test_battery_params_validation():
    with pytest.raises(ConfigError):
        BatteryParams(capacity_mah=0)
    with pytest.raises(ConfigError):
        BatteryParams(uplink_mah_per_flush=-1)
    BatteryParams(sample_ua_per_hz=0, uplink_mah_per_flush=0)


# -- schedule and network -----------------------------------------------------

def test_uplink_due_boundaries():
    assert uplink_due(1000, 1000, 60) is False
    assert uplink_due(1000 + 60_000, 1000, 60) is True
    assert uplink_due(1000 + 59_999, 1000, 60) is False


def test_uplink_schedule_replay_30_days():
    start = 0
    last = start
    attempts = 0
    # replay at one-second resolution; the schedule only fires on whole seconds here
    for now in range(start, start + 30 * 86_400_000 + 1, 1000):
        if uplink_due(now, last, 86400):
            attempts += 1
            last = now
    assert attempts == 30


def test_select_network():
    assert select_network({G, TWO}) is G
    assert select_network({TWO}) is TWO
    assert select_network(set()) is NetworkKind.NONE
    assert select_network({G, TWO}, (TWO, G)) is TWO
    assert select_network({G}, (TWO,)) is NetworkKind.NONE


# -- flush --------------------------------------------------------------------

def _flush(buf, net, seq, ack):
    return flush(buf, net, seq, ack, device_id="d", flush_ts=99, battery_pct=50.0)


def test_flush_without_network_keeps_buffer():
    buf = EventBuffer(4, [rec(1), rec(2)])
    batch, buf = _flush(buf, NetworkKind.NONE, 0, True)
    assert batch is None and len(buf) == 2


def test_flush_acked_empties_buffer():
    buf = EventBuffer(4, [rec(1), rec(2)])
    batch, buf = _flush(buf, TWO, 7, True)
    assert batch.seq == 7 and [r.ts for r in batch.records] == [1, 2]
    assert len(buf) == 0 and buf.flushed_count == 2


def test_flush_retry_same_seq():
    buf = EventBuffer(4, [rec(1), rec(2)])
    first, buf = _flush(buf, TWO, 3, False)
    assert len(buf) == 2
    second, buf = _flush(buf, G, 3, True)
    assert first.seq == second.seq == 3
    assert first.records == second.records
    assert len(buf) == 0


def test_flush_empty_buffer_emits_nothing():
    batch, _ = _flush(EventBuffer(4), G, 0, True)
    assert batch is None


# -- config -------------------------------------------------------------------

def test_default_config():
    c = DeviceConfig()
    assert (c.capture_threshold_counts, c.sample_rate_hz, c.buffer_capacity, c.flush_interval_s) == (64, 100, 4096, 86400)
    assert c.network_preference == (G, TWO)
    assert c.counts_per_g == 32


@pytest.mark.parametrize(
    "kwargs",
    [
        {"capture_threshold_counts": 888},
        {"capture_threshold_counts": -1},
        {"network_preference": (NetworkKind.NONE,)},
        {"network_preference": (G, G)},
        {"sample_rate_hz": 0},
        {"buffer_capacity": 0},
        {"flush_interval_s": 0},
    ],
)
def test_config_invariants(kwargs):
    with pytest.raises(ConfigError):
        DeviceConfig(**kwargs)


def test_config_round_trip():
    c = DeviceConfig(capture_threshold_counts=100, network_preference=(TWO,), device_id="x")
    assert DeviceConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ConfigError):
        DeviceConfig.from_dict({"bogus": 1})


# -- stateful device ----------------------------------------------------------

def test_device_capture_and_flush():
    dev = Device(DeviceConfig(flush_interval_s=1, device_id="dev"), start_ts=0)
    ts = np.array([0, 10, 20, 30])
    raw = np.array([[0, -32, 0], [0, -200, 0], [0, -32, 0], [300, 0, 0]])
    got = dev.capture(ts, raw)
    assert [r.ts for r in got] == [10, 30]
    assert dev.samples_taken == 4
    assert dev.try_flush(999, {G}) == (None, None)  # not yet due
    event, batch = dev.try_flush(1000, set())
    assert event is None  # due but no network
    event, batch = dev.try_flush(1000, {TWO, G})
    assert event.network is G and event.acked and batch.seq == 0
    assert len(dev.buffer) == 0 and dev.seq == 1


def test_device_unacked_flush_retries_same_seq():
    dev = Device(DeviceConfig(flush_interval_s=1), start_ts=0)
    dev.capture(np.array([5]), np.array([[0, -300, 0]]))
    _, b1 = dev.try_flush(1000, {G}, deliver=lambda b: False)
    _, b2 = dev.try_flush(2000, {G}, deliver=lambda b: True)
    assert b1.seq == b2.seq == 0 and b1.records == b2.records
    assert dev.seq == 1 and len(dev.buffer) == 0
