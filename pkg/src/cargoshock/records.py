"""Record types shared by the device, the ingestion service and analytics.

Every record crosses a JSON boundary at some point (uplink wire format,
append-only store, journey log), so each type knows how to flatten itself to
a plain dict and back.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional

RAW_MIN = -512
RAW_MAX = 512

_RECORD_FIELDS = ("ts", "battery_pct", "x", "y", "z", "lat", "lon", "temp_c", "hum_pct")


class RawTriple(NamedTuple):
    """Raw accelerometer counts, one per axis, each in [-512, 512]."""

    x: int
    y: int
    z: int

    def magnitude_sq(self) -> int:
        return self.x * self.x + self.y * self.y + self.z * self.z


@dataclass(frozen=True)
class SensorRecord:
    ts: int
    battery_pct: float
    accel: RawTriple
    lat: float
    lon: float
    temp_c: Optional[float] = None
    hum_pct: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "ts": self.ts,
            "battery_pct": self.battery_pct,
            "x": self.accel.x,
            "y": self.accel.y,
            "z": self.accel.z,
            "lat": self.lat,
            "lon": self.lon,
            "temp_c": self.temp_c,
            "hum_pct": self.hum_pct,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SensorRecord":
        return cls(
            ts=d["ts"],
            battery_pct=d["battery_pct"],
            accel=RawTriple(d["x"], d["y"], d["z"]),
            lat=d["lat"],
            lon=d["lon"],
            temp_c=d.get("temp_c"),
            hum_pct=d.get("hum_pct"),
        )


@dataclass(frozen=True)
class UplinkBatch:
    """One flush worth of records; ``(device_id, seq)`` is the idempotency key."""

    device_id: str
    seq: int
    flush_ts: int
    battery_pct: float
    records: tuple[SensorRecord, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict[str, Any]:
        return {
            "device_id": self.device_id,
            "seq": self.seq,
            "flush_ts": self.flush_ts,
            "battery_pct": self.battery_pct,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UplinkBatch":
        return cls(
            device_id=d["device_id"],
            seq=d["seq"],
            flush_ts=d["flush_ts"],
            battery_pct=d["battery_pct"],
            records=tuple(SensorRecord.from_dict(r) for r in d["records"]),
        )


@dataclass(frozen=True)
class StoredRecord:
    """A persisted record: the sensor fields flattened, plus provenance."""

    device_id: str
    seq: int
    ts: int
    battery_pct: float
    x: int
    y: int
    z: int
    lat: float
    lon: float
    temp_c: Optional[float] = None
    hum_pct: Optional[float] = None

    @property
    def accel(self) -> RawTriple:
        return RawTriple(self.x, self.y, self.z)

    @classmethod
    def from_sensor(cls, device_id: str, seq: int, rec: SensorRecord) -> "StoredRecord":
        return cls(device_id=device_id, seq=seq, **rec.to_dict())

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"device_id": self.device_id, "seq": self.seq}
        for name in _RECORD_FIELDS:
            d[name] = getattr(self, name)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StoredRecord":
        return cls(device_id=d["device_id"], seq=d["seq"], **{k: d.get(k) for k in _RECORD_FIELDS})
