"""Shipment journey scenarios and the end-to-end device simulation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import numpy as np

from .device import (
    ConfigError,
    Deliver,
    Device,
    DeviceConfig,
    FlushEvent,
    NetworkKind,
    quantize_many,
    select_network,
)
from .records import SensorRecord, UplinkBatch
from .timeutil import parse_ts

GRAVITY_G = (0.0, -1.0, 0.0)

# Samples per noise block. The random stream of a block depends only on
# (seed, block index), so how the loop slices time never changes the output.
BLOCK_SAMPLES = 1 << 17

BUNDLED = ("demo_voyage", "long_haul_120d")


class ScenarioError(ValueError):
    pass


class LegKind(str, Enum):
    LAND = "LAND"
    SEA = "SEA"


class LegColor(str, Enum):
    RED = "RED"
    BLUE = "BLUE"
    GREEN = "GREEN"
    OTHER = "OTHER"


@dataclass(frozen=True)
class LegDef:
    label: str
    kind: LegKind
    from_ts: int
    to_ts: int
    display_color: LegColor = LegColor.OTHER

    def __post_init__(self) -> None:
        if not self.from_ts < self.to_ts:
            raise ScenarioError(f"leg {self.label!r}: from_ts must be < to_ts")

    def to_dict(self) -> dict[str, Any]:
        return {
            "label": self.label,
            "kind": self.kind.value,
            "from_ts": self.from_ts,
            "to_ts": self.to_ts,
            "display_color": self.display_color.value,
        }


@dataclass(frozen=True)
class CoverageRegion:
    from_ts: int
    to_ts: int
    available: frozenset[NetworkKind]

    def contains(self, ts: int) -> bool:
        return self.from_ts <= ts < self.to_ts


@dataclass(frozen=True)
class ShockEvent:
    ts: int
    peak_g: float
    axis: tuple[float, float, float]
    duration_ms: float

    @property
    def start_ms(self) -> float:
        return self.ts - self.duration_ms / 2.0

    @property
    def end_ms(self) -> float:
        return self.ts + self.duration_ms / 2.0


@dataclass(frozen=True)
class Waypoint:
    ts: int
    lat: float
    lon: float


@dataclass(frozen=True)
class Scenario:
    name: str
    waypoints: tuple[Waypoint, ...]
    legs: tuple[LegDef, ...]
    coverage: tuple[CoverageRegion, ...] = ()
    shocks: tuple[ShockEvent, ...] = ()
    ambient_g_rms: float = 0.0
    device: Optional[DeviceConfig] = None
    temp_c: Optional[float] = None
    hum_pct: Optional[float] = None

    @property
    def start_ts(self) -> int:
        return self.waypoints[0].ts

    @property
    def end_ts(self) -> int:
        return self.waypoints[-1].ts

    def __post_init__(self) -> None:
        validate_scenario(self)

    def position_at(self, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        wts = np.array([w.ts for w in self.waypoints], dtype=np.float64)
        lat = np.interp(ts, wts, [w.lat for w in self.waypoints])
        lon = np.interp(ts, wts, [w.lon for w in self.waypoints])
        return lat, lon


def validate_scenario(s: Scenario) -> None:
    if not s.waypoints:
        raise ScenarioError("waypoints: at least one waypoint is required")
    for i in range(1, len(s.waypoints)):
        if not s.waypoints[i].ts > s.waypoints[i - 1].ts:
            raise ScenarioError(f"waypoints[{i}].ts: waypoint timestamps must be strictly increasing")
    if len(s.waypoints) < 2:
        raise ScenarioError("waypoints: a journey needs at least two waypoints")
    if not s.legs:
        raise ScenarioError("legs: at least one leg is required")
    legs = sorted(s.legs, key=lambda leg: leg.from_ts)
    for a, b in zip(legs, legs[1:]):
        if b.from_ts < a.to_ts:
            raise ScenarioError(f"legs: {a.label!r} and {b.label!r} overlap")
        if b.from_ts > a.to_ts:
            raise ScenarioError(f"legs: gap between {a.label!r} and {b.label!r}")
    if legs[0].from_ts != s.start_ts or legs[-1].to_ts != s.end_ts:
        raise ScenarioError("legs: legs must span exactly from the first to the last waypoint")
    if len({leg.label for leg in legs}) != len(legs):
        raise ScenarioError("legs: labels must be unique")
    for i, c in enumerate(s.coverage):
        if not c.from_ts < c.to_ts:
            raise ScenarioError(f"coverage[{i}]: from_ts must be < to_ts")
        if NetworkKind.NONE in c.available:
            raise ScenarioError(f"coverage[{i}].available: NONE is not a network")
    for i, sh in enumerate(s.shocks):
        if not sh.peak_g > 0:
            raise ScenarioError(f"shocks[{i}].peak_g must be > 0")
        if not sh.duration_ms > 0:
            raise ScenarioError(f"shocks[{i}].duration_ms must be > 0")
        if abs(math.sqrt(sum(a * a for a in sh.axis)) - 1.0) > 1e-9:
            raise ScenarioError(f"shocks[{i}].axis must be a unit vector")
        if not s.start_ts <= sh.ts <= s.end_ts:
            raise ScenarioError(f"shocks[{i}].ts lies outside the journey")
    if s.ambient_g_rms < 0:
        raise ScenarioError("ambient_g_rms must be >= 0")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _field(d: dict[str, Any], key: str, where: str) -> Any:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object")
    if key not in d:
        raise ScenarioError(f"{where}.{key}: missing required field")
    return d[key]


def _ts(v: Any, where: str) -> int:
    try:
        return parse_ts(v)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _num(v: Any, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {v!r}")
    return float(v)


def _enum(cls: type[Enum], v: Any, where: str) -> Any:
    try:
        return cls(v)
    except ValueError:
        allowed = ", ".join(m.value for m in cls)  # type: ignore[attr-defined]
        raise ScenarioError(f"{where}: {v!r} is not one of {allowed}") from None


def legs_from_list(items: Any, where: str = "legs") -> tuple[LegDef, ...]:
    if not isinstance(items, list):
        raise ScenarioError(f"{where}: expected a list")
    legs = []
    for i, d in enumerate(items):
        w = f"{where}[{i}]"
        legs.append(
            LegDef(
                label=str(_field(d, "label", w)),
                kind=_enum(LegKind, _field(d, "kind", w), f"{w}.kind"),
                from_ts=_ts(_field(d, "from_ts", w), f"{w}.from_ts"),
                to_ts=_ts(_field(d, "to_ts", w), f"{w}.to_ts"),
                display_color=_enum(LegColor, d.get("display_color", "OTHER"), f"{w}.display_color"),
            )
        )
    return tuple(legs)


def scenario_from_dict(d: dict[str, Any]) -> Scenario:
    if not isinstance(d, dict):
        raise ScenarioError("scenario: expected a JSON object")
    waypoints_raw = _field(d, "waypoints", "scenario")
    if not isinstance(waypoints_raw, list) or not waypoints_raw:
        raise ScenarioError("waypoints: at least one waypoint is required")
    waypoints = tuple(
        Waypoint(
            ts=_ts(_field(w, "ts", f"waypoints[{i}]"), f"waypoints[{i}].ts"),
            lat=_num(_field(w, "lat", f"waypoints[{i}]"), f"waypoints[{i}].lat"),
            lon=_num(_field(w, "lon", f"waypoints[{i}]"), f"waypoints[{i}].lon"),
        )
        for i, w in enumerate(waypoints_raw)
    )
    if "start_ts" in d and _ts(d["start_ts"], "start_ts") != waypoints[0].ts:
        raise ScenarioError("start_ts: must equal the first waypoint's ts")
    coverage = []
    for i, c in enumerate(d.get("coverage", [])):
        w = f"coverage[{i}]"
        avail = _field(c, "available", w)
        if not isinstance(avail, list):
            raise ScenarioError(f"{w}.available: expected a list")
        coverage.append(
            CoverageRegion(
                from_ts=_ts(_field(c, "from_ts", w), f"{w}.from_ts"),
                to_ts=_ts(_field(c, "to_ts", w), f"{w}.to_ts"),
                available=frozenset(_enum(NetworkKind, a, f"{w}.available") for a in avail),
            )
        )
    shocks = []
    for i, sh in enumerate(d.get("shocks", [])):
        w = f"shocks[{i}]"
        axis = _field(sh, "axis", w)
        if not isinstance(axis, list) or len(axis) != 3:
            raise ScenarioError(f"{w}.axis: expected three numbers")
        shocks.append(
            ShockEvent(
                ts=_ts(_field(sh, "ts", w), f"{w}.ts"),
                peak_g=_num(_field(sh, "peak_g", w), f"{w}.peak_g"),
                axis=tuple(_num(a, f"{w}.axis") for a in axis),  # type: ignore[arg-type]
                duration_ms=_num(_field(sh, "duration_ms", w), f"{w}.duration_ms"),
            )
        )
    device = None
    if "device" in d:
        try:
            device = DeviceConfig.from_dict(d["device"])
        except (ConfigError, TypeError) as exc:
            raise ScenarioError(f"device: {exc}") from None
    env = d.get("environment", {}) or {}
    return Scenario(
        name=str(d.get("name", "scenario")),
        waypoints=waypoints,
        legs=legs_from_list(_field(d, "legs", "scenario")),
        coverage=tuple(coverage),
        shocks=tuple(sorted(shocks, key=lambda s: s.ts)),
        ambient_g_rms=_num(d.get("ambient_g_rms", 0.0), "ambient_g_rms"),
        device=device,
        temp_c=None if env.get("temp_c") is None else _num(env["temp_c"], "environment.temp_c"),
        hum_pct=None if env.get("hum_pct") is None else _num(env["hum_pct"], "environment.hum_pct"),
    )


def _read_json(text: str, source: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Load and validate a scenario file. Bundled scenarios can be named directly."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        text = resources.files("cargoshock.data").joinpath(f"{path}.json").read_text(encoding="utf-8")
        return scenario_from_dict(_read_json(text, str(path)))
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"{p}: {exc.strerror}") from None
    return scenario_from_dict(_read_json(text, str(p)))


def load_legs(path: Union[str, Path]) -> tuple[LegDef, ...]:
    """Legs from a scenario file or a bare ``{"legs": [...]}`` / ``[...]`` document."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        return load_scenario(path).legs
    data = _read_json(p.read_text(encoding="utf-8"), str(p))
    items = data.get("legs") if isinstance(data, dict) else data
    return legs_from_list(items)


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------

def _check_span(scenario: Scenario, ts: float) -> None:
    if not scenario.start_ts <= ts <= scenario.end_ts:
        raise ValueError(f"ts {ts} outside journey [{scenario.start_ts}, {scenario.end_ts}]")


def _add_shocks(accel: np.ndarray, ts: np.ndarray, shocks: Iterable[ShockEvent]) -> None:
    for sh in shocks:
        lo = np.searchsorted(ts, sh.start_ms, side="left")
        hi = np.searchsorted(ts, sh.end_ms, side="right")
        if lo >= hi:
            continue
        phase = (ts[lo:hi] - sh.start_ms) / sh.duration_ms
        pulse = sh.peak_g * np.sin(np.pi * phase)
        accel[lo:hi] += pulse[:, None] * np.asarray(sh.axis)[None, :]


def true_acceleration_at(scenario: Scenario, ts: int, rng: np.random.Generator) -> np.ndarray:
    """Proper acceleration in g felt by the device at ``ts``."""
    _check_span(scenario, ts)
    accel = np.array([GRAVITY_G], dtype=np.float64)
    if scenario.ambient_g_rms > 0:
        accel += rng.standard_normal((1, 3)) * (scenario.ambient_g_rms / math.sqrt(3.0))
    _add_shocks(accel, np.array([ts], dtype=np.float64), scenario.shocks)
    return accel[0]


def true_acceleration(scenario: Scenario, ts: np.ndarray, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Vectorized ground truth over sorted timestamps, shape ``(n, 3)``."""
    ts = np.asarray(ts, dtype=np.float64)
    if scenario.ambient_g_rms > 0:
        if rng is None:
            raise ValueError("rng required when ambient noise is enabled")
        accel = rng.standard_normal((len(ts), 3))
        accel *= scenario.ambient_g_rms / math.sqrt(3.0)
        accel += GRAVITY_G
    else:
        accel = np.empty((len(ts), 3))
        accel[:] = GRAVITY_G
    _add_shocks(accel, ts, scenario.shocks)
    return accel


def coverage_at(scenario: Scenario, ts: int) -> frozenset[NetworkKind]:
    out: set[NetworkKind] = set()
    for region in scenario.coverage:
        if region.contains(ts):
            out |= region.available
    return frozenset(out)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass
class JourneyLog:
    scenario_name: str
    seed: int
    config: DeviceConfig
    start_ts: int
    end_ts: int
    captures: list[SensorRecord] = field(default_factory=list)
    batches: list[tuple[UplinkBatch, bool]] = field(default_factory=list)
    flushes: list[FlushEvent] = field(default_factory=list)
    buffered: tuple[SensorRecord, ...] = ()
    dropped_count: int = 0
    final_battery_pct: float = 100.0
    samples_taken: int = 0
    next_seq: int = 0

    @property
    def acked_records(self) -> int:
        return sum(len(b.records) for b, acked in self.batches if acked)

    def summary(self) -> dict[str, Any]:
        return {
            "captured": len(self.captures),
            "acked": self.acked_records,
            "buffered": len(self.buffered),
            "dropped": self.dropped_count,
            "flushes": len(self.flushes),
            "batches": len(self.batches),
            "final_battery_pct": self.final_battery_pct,
            "days_elapsed": (self.end_ts - self.start_ts) / 86_400_000,
        }

    def iter_json_lines(self) -> Iterable[str]:
        def dump(obj: dict[str, Any]) -> str:
            return json.dumps(obj, separators=(",", ":"), sort_keys=True)

        yield dump({
            "type": "header",
            "scenario": self.scenario_name,
            "seed": self.seed,
            "config": self.config.to_dict(),
            "start_ts": self.start_ts,
            "end_ts": self.end_ts,
        })
        for r in self.captures:
            yield dump({"type": "capture", **r.to_dict()})
        for f in self.flushes:
            yield dump({"type": "flush", **f.to_dict()})
        for b, acked in self.batches:
            yield dump({"type": "batch", "acked": acked, "batch": b.to_dict()})
        yield dump({
            "type": "final",
            "battery_pct": self.final_battery_pct,
            "buffered": [r.to_dict() for r in self.buffered],
            "dropped_count": self.dropped_count,
            "samples_taken": self.samples_taken,
            "next_seq": self.next_seq,
        })

    def to_jsonl(self) -> str:
        return "".join(line + "\n" for line in self.iter_json_lines())

    def write_jsonl(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


class _Clock:
    """Maps sample indices to integer-ms timestamps and back."""

    def __init__(self, start_ts: int, end_ts: int, rate_hz: int):
        self.start = start_ts
        self.rate = rate_hz
        self.n = ((end_ts - start_ts + 1) * rate_hz - 1) // 1000 + 1

    def ts(self, k: Union[int, np.ndarray]) -> Any:
        return self.start + (k * 1000) // self.rate

    def index_at_or_after(self, t: int) -> int:
        d = t - self.start
        if d <= 0:
            return 0
        return -((-d * self.rate) // 1000)


def _next_flush_index(scenario: Scenario, config: DeviceConfig, clock: _Clock, due_ts: int) -> Optional[int]:
    """First sample at or after ``due_ts`` where a preferred network is in coverage.

    Coverage only grows at region starts, so those are the only candidates
    besides ``due_ts`` itself.
    """
    starts = sorted({r.from_ts for r in scenario.coverage if r.from_ts > due_ts})
    for t in [due_ts, *starts]:
        k = clock.index_at_or_after(t)
        if k >= clock.n:
            return None
        net = select_network(coverage_at(scenario, clock.ts(k)), config.network_preference)
        if net is not NetworkKind.NONE:
            return k
    return None


def run_simulation(
    scenario: Scenario,
    config: Optional[DeviceConfig] = None,
    seed: int = 0,
    deliver: Optional[Deliver] = None,
) -> JourneyLog:
    """Step the device at its sample rate from the first to the last waypoint.

    ``deliver`` receives each emitted batch and returns whether it was
    acknowledged; by default every batch is acknowledged. Captures made
    after the last flush stay in the device buffer.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    config = config or scenario.device or DeviceConfig()
    clock = _Clock(scenario.start_ts, scenario.end_ts, config.sample_rate_hz)
    device = Device(config, scenario.start_ts)
    log = JourneyLog(
        scenario_name=scenario.name,
        seed=seed,
        config=config,
        start_ts=scenario.start_ts,
        end_ts=scenario.end_ts,
    )
    rest = quantize_many(np.array([GRAVITY_G]), config.counts_per_g)[0]
    gravity_triggers = int(rest @ rest) > config.capture_threshold_counts ** 2
    shock_lo = np.array([s.start_ms for s in scenario.shocks])
    shock_hi = np.array([s.end_ms for s in scenario.shocks])
    cache: dict[int, np.ndarray] = {}

    def block_raw(b: int) -> np.ndarray:
        if b not in cache:
            cache.clear()
            k0 = b * BLOCK_SAMPLES
            ks = np.arange(k0, min(k0 + BLOCK_SAMPLES, clock.n), dtype=np.int64)
            rng = np.random.default_rng([seed, b])
            accel = true_acceleration(scenario, clock.ts(ks), rng)
            cache[b] = quantize_many(accel, config.counts_per_g)
        return cache[b]

    def process(a: int, z: int) -> None:
        # samples a..z inclusive
        for b in range(a // BLOCK_SAMPLES, z // BLOCK_SAMPLES + 1):
            lo = max(a, b * BLOCK_SAMPLES)
            hi = min(z, (b + 1) * BLOCK_SAMPLES - 1)
            count = hi - lo + 1
            t_lo, t_hi = clock.ts(lo), clock.ts(hi)
            quiet = (
                scenario.ambient_g_rms == 0
                and not gravity_triggers
                and not np.any((shock_lo <= t_hi) & (shock_hi >= t_lo))
            )
            if quiet:
                device.samples_taken += count
            else:
                raw = block_raw(b)[lo - b * BLOCK_SAMPLES: hi - b * BLOCK_SAMPLES + 1]
                ts = clock.ts(np.arange(lo, hi + 1, dtype=np.int64))
                log.captures.extend(
                    device.capture(ts, raw, scenario.position_at, scenario.temp_c, scenario.hum_pct)
                )
            device.drain(count / config.sample_rate_hz, count)

    k = 0
    interval_ms = config.flush_interval_s * 1000
    while k < clock.n:
        kf = _next_flush_index(scenario, config, clock, device.last_flush_ts + interval_ms)
        process(k, clock.n - 1 if kf is None else kf)
        if kf is None:
            break
        now = int(clock.ts(kf))
        event, batch = device.try_flush(now, coverage_at(scenario, now), deliver or (lambda _b: True))
        assert event is not None
        log.flushes.append(event)
        if batch is not None:
            log.batches.append((batch, event.acked))
        k = kf + 1

    log.buffered = device.buffer.records
    log.dropped_count = device.buffer.dropped_count
    log.final_battery_pct = device.battery_pct
    log.samples_taken = device.samples_taken
    log.next_seq = device.seq
    return log
