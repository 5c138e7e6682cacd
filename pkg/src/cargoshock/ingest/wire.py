"""Validation of the uplink wire format (one JSON object per batch)."""

from __future__ import annotations

import json
import logging
from typing import Any, Union

from ..records import RAW_MAX, RAW_MIN, RawTriple, SensorRecord, UplinkBatch

log = logging.getLogger(__name__)

SOFT_SIZE_LIMIT = 256 * 1024


class Rejected(Exception):
    reason = "rejected"


class Unauthorized(Rejected):
    reason = "unauthorized"


class MalformedBatch(Rejected, ValueError):
    reason = "malformed"


def _int(v: Any, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise MalformedBatch(f"{where}: expected an integer")
    return v


def _real(v: Any, where: str, optional: bool = False) -> Any:
    if v is None and optional:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise MalformedBatch(f"{where}: expected a number")
    return float(v)


def _pct(v: Any, where: str) -> float:
    f = _real(v, where)
    if not 0.0 <= f <= 100.0:
        raise MalformedBatch(f"{where}: must be within [0, 100]")
    return f


def _record(d: Any, where: str) -> SensorRecord:
    if not isinstance(d, dict):
        raise MalformedBatch(f"{where}: expected an object")
    for key in ("ts", "battery_pct", "x", "y", "z", "lat", "lon"):
        if key not in d:
            raise MalformedBatch(f"{where}.{key}: missing")
    counts = []
    for axis in "xyz":
        c = _int(d[axis], f"{where}.{axis}")
        if not RAW_MIN <= c <= RAW_MAX:
            raise MalformedBatch(f"{where}.{axis}: outside [{RAW_MIN}, {RAW_MAX}]")
        counts.append(c)
    return SensorRecord(
        ts=_int(d["ts"], f"{where}.ts"),
        battery_pct=_pct(d["battery_pct"], f"{where}.battery_pct"),
        accel=RawTriple(*counts),
        lat=_real(d["lat"], f"{where}.lat"),
        lon=_real(d["lon"], f"{where}.lon"),
        temp_c=_real(d.get("temp_c"), f"{where}.temp_c", optional=True),
        hum_pct=_real(d.get("hum_pct"), f"{where}.hum_pct", optional=True),
    )


def parse_batch(payload: Union[UplinkBatch, dict, str, bytes]) -> UplinkBatch:
    """Validate a batch from its object, dict or JSON form."""
    if isinstance(payload, UplinkBatch):
        payload = payload.to_dict()
    elif isinstance(payload, (str, bytes)):
        if len(payload) > SOFT_SIZE_LIMIT:
            log.warning("uplink batch is %d bytes, above the %d byte soft limit", len(payload), SOFT_SIZE_LIMIT)
        try:
            payload = json.loads(payload)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedBatch(f"invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise MalformedBatch("batch: expected an object")
    for key in ("device_id", "seq", "flush_ts", "battery_pct", "records"):
        if key not in payload:
            raise MalformedBatch(f"batch.{key}: missing")
    device_id = payload["device_id"]
    if not isinstance(device_id, str) or not device_id:
        raise MalformedBatch("batch.device_id: expected a non-empty string")
    seq = _int(payload["seq"], "batch.seq")
    if seq < 0:
        raise MalformedBatch("batch.seq: must be >= 0")
    items = payload["records"]
    if not isinstance(items, list) or not items:
        raise MalformedBatch("batch.records: expected a non-empty list")
    records = tuple(_record(r, f"batch.records[{i}]") for i, r in enumerate(items))
    for i in range(1, len(records)):
        if records[i].ts <= records[i - 1].ts:
            raise MalformedBatch(f"batch.records[{i}].ts: records must be in strictly increasing ts order")
    return UplinkBatch(
        device_id=device_id,
        seq=seq,
        flush_ts=_int(payload["flush_ts"], "batch.flush_ts"),
        battery_pct=_pct(payload["battery_pct"], "batch.battery_pct"),
        records=records,
    )
