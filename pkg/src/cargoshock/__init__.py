"""Low-cost cargo impact tracking, end to end at desk scale.

``device`` models the threshold-triggered sensor, ``world`` the journey it
rides on, ``ingest`` the keyed, idempotent cloud endpoint, ``analytics`` the
raw-count to g-force conversion and per-leg attribution, and ``report`` the
chart and CSV outputs.
"""

from .analytics import (
    CalibratedImpact,
    CalibrationConstant,
    DropTrial,
    GForceTransformer,
    ImpactClass,
    LambdaCalibrator,
    LegStats,
    aggregate,
    assign_leg,
    calibrate_lambda,
    classify_impact,
    raw_to_gforce,
)
from .device import (
    BatteryParams,
    DeviceConfig,
    EventBuffer,
    NetworkKind,
    battery_step,
    buffer_push,
    detect_trigger,
    flush,
    quantize_acceleration,
    select_network,
    uplink_due,
)
from .records import RawTriple, SensorRecord, StoredRecord, UplinkBatch
from .world import JourneyLog, LegDef, Scenario, coverage_at, load_scenario, run_simulation, true_acceleration_at

__version__ = "0.1.0"

__all__ = [
    "BatteryParams",
    "CalibratedImpact",
    "CalibrationConstant",
    "DeviceConfig",
    "DropTrial",
    "EventBuffer",
    "GForceTransformer",
    "ImpactClass",
    "JourneyLog",
    "LambdaCalibrator",
    "LegDef",
    "LegStats",
    "NetworkKind",
    "RawTriple",
    "Scenario",
    "SensorRecord",
    "StoredRecord",
    "UplinkBatch",
    "aggregate",
    "assign_leg",
    "battery_step",
    "buffer_push",
    "calibrate_lambda",
    "classify_impact",
    "coverage_at",
    "detect_trigger",
    "flush",
    "load_scenario",
    "quantize_acceleration",
    "raw_to_gforce",
    "run_simulation",
    "select_network",
    "true_acceleration_at",
    "uplink_due",
]
