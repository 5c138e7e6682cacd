"""Discrete-time model of the impact-tracking device.

The device samples its own proper acceleration, quantizes it to raw counts,
keeps the samples whose magnitude crosses a threshold in a bounded buffer,
and uploads the buffer on a schedule over whichever cellular network its
preference list finds first.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from .records import RAW_MAX, RAW_MIN, RawTriple, SensorRecord, UplinkBatch

# ceil(sqrt(3) * 512): no raw triple can exceed this magnitude.
MAX_RAW_MAGNITUDE = 887

DEFAULT_COUNTS_PER_G = 32.0


class NetworkKind(str, Enum):
    THREE_G = "THREE_G"
    TWO_G = "TWO_G"
    NONE = "NONE"


class MonotonicityError(ValueError):
    """A record was pushed with a timestamp not after the newest buffered one."""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BatteryParams:
    capacity_mah: float = 1000.0
    idle_ma: float = 0.19
    sample_ua_per_hz: float = 0.02
    uplink_mah_per_flush: float = 1.2

    def __post_init__(self) -> None:
        if not self.capacity_mah > 0:
            raise ConfigError("battery.capacity_mah must be > 0")
        if not self.idle_ma > 0:
            raise ConfigError("battery.idle_ma must be > 0")
        if self.sample_ua_per_hz < 0:
            raise ConfigError("battery.sample_ua_per_hz must be >= 0")
        if self.uplink_mah_per_flush < 0:
            raise ConfigError("battery.uplink_mah_per_flush must be >= 0")


@dataclass(frozen=True)
class DeviceConfig:
    capture_threshold_counts: int = 64
    sample_rate_hz: int = 100
    buffer_capacity: int = 4096
    flush_interval_s: int = 86400
    battery: BatteryParams = field(default_factory=BatteryParams)
    network_preference: tuple[NetworkKind, ...] = (NetworkKind.THREE_G, NetworkKind.TWO_G)
    counts_per_g: float = DEFAULT_COUNTS_PER_G
    device_id: str = "tracker-01"

    def __post_init__(self) -> None:
        t = self.capture_threshold_counts
        if not isinstance(t, int) or isinstance(t, bool) or not 0 <= t <= MAX_RAW_MAGNITUDE:
            raise ConfigError(f"capture_threshold_counts must be an integer in [0, {MAX_RAW_MAGNITUDE}]")
        # sample timestamps are integer ms and must stay strictly increasing
        if not isinstance(self.sample_rate_hz, int) or not 1 <= self.sample_rate_hz <= 1000:
            raise ConfigError("sample_rate_hz must be an integer in [1, 1000]")
        if not isinstance(self.buffer_capacity, int) or self.buffer_capacity < 1:
            raise ConfigError("buffer_capacity must be a positive integer")
        if not isinstance(self.flush_interval_s, int) or self.flush_interval_s < 1:
            raise ConfigError("flush_interval_s must be a positive integer")
        prefs = tuple(NetworkKind(p) for p in self.network_preference)
        if NetworkKind.NONE in prefs:
            raise ConfigError("network_preference may not contain NONE")
        if len(set(prefs)) != len(prefs):
            raise ConfigError("network_preference may not repeat a network")
        object.__setattr__(self, "network_preference", prefs)
        if not self.counts_per_g > 0:
            raise ConfigError("counts_per_g must be > 0")
        if not self.device_id:
            raise ConfigError("device_id must be non-empty")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DeviceConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown device config field(s): {', '.join(sorted(unknown))}")
        if "battery" in d:
            battery = d["battery"]
            if not isinstance(battery, dict):
                raise ConfigError("battery must be an object")
            bad = set(battery) - set(BatteryParams.__dataclass_fields__)
            if bad:
                raise ConfigError(f"unknown battery field(s): {', '.join(sorted(bad))}")
            d["battery"] = BatteryParams(**battery)
        if "network_preference" in d:
            try:
                d["network_preference"] = tuple(NetworkKind(p) for p in d["network_preference"])
            except ValueError as exc:
                raise ConfigError(f"network_preference: {exc}") from None
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "capture_threshold_counts": self.capture_threshold_counts,
            "sample_rate_hz": self.sample_rate_hz,
            "buffer_capacity": self.buffer_capacity,
            "flush_interval_s": self.flush_interval_s,
            "battery": {
                "capacity_mah": self.battery.capacity_mah,
                "idle_ma": self.battery.idle_ma,
                "sample_ua_per_hz": self.battery.sample_ua_per_hz,
                "uplink_mah_per_flush": self.battery.uplink_mah_per_flush,
            },
            "network_preference": [p.value for p in self.network_preference],
            "counts_per_g": self.counts_per_g,
            "device_id": self.device_id,
        }


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def quantize_acceleration(true_accel: Sequence[float], counts_per_g: float) -> RawTriple:
    """Convert an acceleration in g to saturating raw counts.

    Rounds half away from zero so that every implementation agrees on ties.
    """
    if not counts_per_g > 0:
        raise ValueError("counts_per_g must be > 0")
    out = []
    for a in true_accel:
        c = a * counts_per_g
        # clip in float space first: huge inputs would overflow int conversion
        c = min(max(c, RAW_MIN - 1.0), RAW_MAX + 1.0)
        r = math.copysign(math.floor(abs(c) + 0.5), c)
        out.append(int(min(max(r, RAW_MIN), RAW_MAX)))
    return RawTriple(*out)


def quantize_many(true_accel: np.ndarray, counts_per_g: float) -> np.ndarray:
    """Vectorized :func:`quantize_acceleration` over an ``(n, 3)`` array."""
    v = np.multiply(true_accel, counts_per_g, dtype=np.float64)
    np.clip(v, RAW_MIN - 1.0, RAW_MAX + 1.0, out=v)
    sign = np.sign(v)
    np.abs(v, out=v)
    v += 0.5
    np.floor(v, out=v)
    v *= sign
    np.clip(v, RAW_MIN, RAW_MAX, out=v)
    return v.astype(np.int64)


def detect_trigger(sample: Sequence[int], threshold_counts: int) -> bool:
    # exact integer comparison; no sqrt
    x, y, z = sample
    x, y, z = int(x), int(y), int(z)
    return x * x + y * y + z * z > threshold_counts * threshold_counts


def trigger_mask(raw: np.ndarray, threshold_counts: int) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.int64)
    return np.einsum("ij,ij->i", raw, raw) > threshold_counts * threshold_counts


# ---------------------------------------------------------------------------
# Buffer
# ---------------------------------------------------------------------------

class EventBuffer:
    """Bounded FIFO of captured records that evicts the oldest on overflow."""

    def __init__(self, capacity: int, records: Iterable[SensorRecord] = ()):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._records: deque[SensorRecord] = deque()
        self.dropped_count = 0
        self.pushed_count = 0
        self.flushed_count = 0
        for r in records:
            self.push(r)

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[SensorRecord, ...]:
        return tuple(self._records)

    @property
    def last_ts(self) -> Optional[int]:
        return self._records[-1].ts if self._records else None

    def push(self, record: SensorRecord) -> "EventBuffer":
        last = self.last_ts
        if last is not None and record.ts <= last:
            raise MonotonicityError(f"record ts {record.ts} is not after buffered ts {last}")
        self._records.append(record)
        self.pushed_count += 1
        if len(self._records) > self.capacity:
            self._records.popleft()
            self.dropped_count += 1
        return self

    def clear_flushed(self) -> None:
        self.flushed_count += len(self._records)
        self._records.clear()


def buffer_push(buffer: EventBuffer, record: SensorRecord) -> EventBuffer:
    return buffer.push(record)


# ---------------------------------------------------------------------------
# Battery, schedule, network
# ---------------------------------------------------------------------------

def battery_step(
    state: float,
    params: BatteryParams,
    elapsed_s: float,
    samples_taken: int,
    flushes: int,
) -> float:
    """Drain the battery for one interval; returns the new percentage."""
    if elapsed_s < 0:
        raise ValueError("elapsed_s must be >= 0")
    used_mah = (
        params.idle_ma * (elapsed_s / 3600.0)
        + params.sample_ua_per_hz * 1e-3 * samples_taken / 3600.0
        + params.uplink_mah_per_flush * flushes
    )
    return max(0.0, state - 100.0 * used_mah / params.capacity_mah)


def uplink_due(now_ts: int, last_flush_ts: int, flush_interval_s: int) -> bool:
    return now_ts - last_flush_ts >= flush_interval_s * 1000


def select_network(
    available: Iterable[NetworkKind],
    preference: Sequence[NetworkKind] = (NetworkKind.THREE_G, NetworkKind.TWO_G),
) -> NetworkKind:
    avail = set(available)
    for kind in preference:
        if kind in avail:
            return kind
    return NetworkKind.NONE


def flush(
    buffer: EventBuffer,
    network: NetworkKind,
    seq: int,
    ack: bool,
    *,
    device_id: str,
    flush_ts: int,
    battery_pct: float,
) -> tuple[Optional[UplinkBatch], EventBuffer]:
    """Emit the whole buffer as one batch; clear it only once acknowledged.

    An empty buffer or no network produces no batch.
    """
    if network is NetworkKind.NONE or len(buffer) == 0:
        return None, buffer
    batch = UplinkBatch(
        device_id=device_id,
        seq=seq,
        flush_ts=flush_ts,
        battery_pct=battery_pct,
        records=buffer.records,
    )
    if ack:
        buffer.clear_flushed()
    return batch, buffer


# ---------------------------------------------------------------------------
# Stateful device
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlushEvent:
    """One schedule firing that found a network (a connection was made)."""

    ts: int
    network: NetworkKind
    battery_pct: float
    records_sent: int
    seq: Optional[int]
    acked: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "ts": self.ts,
            "network": self.network.value,
            "battery_pct": self.battery_pct,
            "records_sent": self.records_sent,
            "seq": self.seq,
            "acked": self.acked,
        }


Deliver = Callable[[UplinkBatch], bool]


def _always_ack(batch: UplinkBatch) -> bool:
    return True


class Device:
    """The device's mutable state, driven by an external clock."""

    def __init__(self, config: DeviceConfig, start_ts: int, battery_pct: float = 100.0):
        self.config = config
        self.buffer = EventBuffer(config.buffer_capacity)
        self.battery_pct = battery_pct
        self.seq = 0
        self.last_flush_ts = start_ts
        self.samples_taken = 0
        self.flush_count = 0

    def capture(
        self,
        ts: np.ndarray,
        raw: np.ndarray,
        locate: Optional[Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]] = None,
        temp_c: Optional[float] = None,
        hum_pct: Optional[float] = None,
    ) -> list[SensorRecord]:
        """Sample a block of quantized readings; buffer and return the triggered ones.

        ``locate`` maps timestamps to ``(lat, lon)`` arrays and is only called
        for the triggered samples.
        """
        idx = np.flatnonzero(trigger_mask(raw, self.config.capture_threshold_counts))
        self.samples_taken += len(ts)
        if len(idx) == 0:
            return []
        hit_ts = np.asarray(ts)[idx]
        if locate is None:
            lat = lon = np.zeros(len(idx))
        else:
            lat, lon = locate(hit_ts)
        captured = []
        for j, i in enumerate(idx):
            rec = SensorRecord(
                ts=int(hit_ts[j]),
                battery_pct=self.battery_pct,
                accel=RawTriple(int(raw[i, 0]), int(raw[i, 1]), int(raw[i, 2])),
                lat=float(lat[j]),
                lon=float(lon[j]),
                temp_c=temp_c,
                hum_pct=hum_pct,
            )
            self.buffer.push(rec)
            captured.append(rec)
        return captured

    def drain(self, elapsed_s: float, samples: int, flushes: int = 0) -> None:
        self.battery_pct = battery_step(self.battery_pct, self.config.battery, elapsed_s, samples, flushes)

    def try_flush(
        self,
        now_ts: int,
        available: Iterable[NetworkKind],
        deliver: Deliver = _always_ack,
    ) -> tuple[Optional[FlushEvent], Optional[UplinkBatch]]:
        """Connect if the schedule is due and a preferred network is present."""
        if not uplink_due(now_ts, self.last_flush_ts, self.config.flush_interval_s):
            return None, None
        network = select_network(available, self.config.network_preference)
        if network is NetworkKind.NONE:
            return None, None
        # connecting costs energy whether or not there is anything to send
        self.drain(0.0, 0, flushes=1)
        self.flush_count += 1
        self.last_flush_ts = now_ts
        pending = flush(
            self.buffer,
            network,
            self.seq,
            ack=False,
            device_id=self.config.device_id,
            flush_ts=now_ts,
            battery_pct=self.battery_pct,
        )[0]
        acked = False
        if pending is not None:
            acked = bool(deliver(pending))
            if acked:
                self.buffer.clear_flushed()
                self.seq += 1
        event = FlushEvent(
            ts=now_ts,
            network=network,
            battery_pct=self.battery_pct,
            records_sent=0 if pending is None else len(pending.records),
            seq=None if pending is None else pending.seq,
            acked=acked,
        )
        return event, pending
