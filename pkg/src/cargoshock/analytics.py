"""From raw counts to calibrated, classified, leg-attributed impacts.

The conversion is ``V = lambda * sqrt(x^2 + y^2 + z^2)``: a single scale
factor applied to the magnitude of the raw reading. ``lambda`` is fitted
from drop trials where the reference impact in g is known.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .records import RawTriple, StoredRecord
from .validation import check_positive, check_raw_triples
from .world import LegDef

UNKNOWN = "UNKNOWN"
DEFAULT_LAMBDA = 1.0 / 32.0
DEFAULT_HIGH_THRESHOLD_G = 8.0


class CalibrationError(ValueError):
    pass


class LegOverlapError(ValueError):
    pass


class ImpactClass(str, Enum):
    HIGH = "HIGH"
    LOW = "LOW"


@dataclass(frozen=True)
class DropTrial:
    known_g: float
    raw: RawTriple


@dataclass(frozen=True)
class CalibrationConstant:
    lam: float
    fitted_from: tuple[DropTrial, ...] = ()
    residual_rms: float = 0.0


@dataclass(frozen=True)
class CalibratedImpact:
    ts: int
    v_g: float
    klass: ImpactClass
    leg_label: str
    lat: float
    lon: float
    raw: RawTriple = RawTriple(0, 0, 0)


@dataclass(frozen=True)
class LegStats:
    leg_label: str
    kind: str
    n_total: int = 0
    n_high: int = 0
    n_low: int = 0
    max_g: float = 0.0
    mean_g: float = 0.0


class LegAggregate(NamedTuple):
    impacts: list[CalibratedImpact]
    stats: LegStats


# ---------------------------------------------------------------------------
# Conversion and calibration
# ---------------------------------------------------------------------------

def raw_to_gforce(raw: Sequence[int], lam: float) -> float:
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam!r}")
    x, y, z = (int(c) for c in raw)
    return lam * math.sqrt(x * x + y * y + z * z)


def _fit_through_origin(m: np.ndarray, g: np.ndarray) -> tuple[float, float]:
    """Least squares ``g ~ lam * m`` with no intercept; returns ``(lam, residual_rms)``."""
    lam = float(np.dot(g, m) / np.dot(m, m))
    resid = g - lam * m
    return lam, float(np.sqrt(np.mean(resid * resid)))


class LambdaCalibrator(RegressorMixin, BaseEstimator):
    """Fit the raw-to-g scale factor from drop trials.

    ``X`` holds raw ``(x, y, z)`` readings at impact and ``y`` the reference
    impact in g. After fitting, ``lambda_`` is the least-squares slope of
    ``y`` against the raw magnitude and ``predict`` converts readings to g.
    """

    def fit(self, X, y):
        raw = check_raw_triples(X, allow_zero=False)
        g = column_or_1d(np.asarray(y, dtype=np.float64))
        if len(g) != len(raw):
            raise ValueError(f"X has {len(raw)} rows but y has {len(g)} values")
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise ValueError("reference impacts must be positive and finite")
        m = np.sqrt(np.einsum("ij,ij->i", raw, raw).astype(np.float64))
        self.lambda_, self.residual_rms_ = _fit_through_origin(m, g)
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "lambda_")
        return raw_to_gforce_many(X, self.lambda_)


class GForceTransformer(TransformerMixin, BaseEstimator):
    """Stateless transformer: raw ``(n, 3)`` counts to an ``(n, 1)`` g-force column."""

    def __init__(self, lam: float = DEFAULT_LAMBDA):
        self.lam = lam

    def fit(self, X, y=None):
        check_raw_triples(X)
        check_positive(self.lam, "lam")
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        return raw_to_gforce_many(X, self.lam)[:, None]


def raw_to_gforce_many(X, lam: float) -> np.ndarray:
    lam = check_positive(lam, "lambda")
    raw = check_raw_triples(X)
    return lam * np.sqrt(np.einsum("ij,ij->i", raw, raw).astype(np.float64))


def calibrate_lambda(trials: Sequence[DropTrial]) -> CalibrationConstant:
    trials = tuple(trials)
    if not trials:
        raise CalibrationError("at least one drop trial is required")
    for i, t in enumerate(trials):
        if RawTriple(*t.raw).magnitude_sq() == 0:
            raise CalibrationError(f"drop trial {i} has a zero-magnitude reading")
        if not t.known_g > 0:
            raise CalibrationError(f"drop trial {i} has a non-positive reference impact")
    est = LambdaCalibrator().fit([t.raw for t in trials], [t.known_g for t in trials])
    return CalibrationConstant(lam=est.lambda_, fitted_from=trials, residual_rms=est.residual_rms_)


def read_drop_csv(path: Union[str, Path]) -> list[DropTrial]:
    """Read drop trials from a CSV with header ``known_g,x,y,z``."""
    trials = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["known_g", "x", "y", "z"]:
            raise CalibrationError(f"{path}:1: header must be known_g,x,y,z")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise CalibrationError(f"{path}:{line}: expected 4 columns, got {len(row)}")
            try:
                known = float(row[0])
                raw = RawTriple(*(int(c) for c in row[1:]))
            except ValueError as exc:
                raise CalibrationError(f"{path}:{line}: {exc}") from None
            trials.append(DropTrial(known_g=known, raw=raw))
    return trials


def write_drop_csv(trials: Iterable[DropTrial], path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["known_g", "x", "y", "z"])
        for t in trials:
            w.writerow([repr(float(t.known_g)), *t.raw])


# ---------------------------------------------------------------------------
# Classification and attribution
# ---------------------------------------------------------------------------

def classify_impact(v_g: float, high_threshold_g: float) -> ImpactClass:
    if not high_threshold_g > 0:
        raise ValueError("high_threshold_g must be > 0")
    return ImpactClass.HIGH if v_g >= high_threshold_g else ImpactClass.LOW


def check_legs(legs: Iterable[LegDef]) -> tuple[LegDef, ...]:
    """Legs in journey order; raises :class:`LegOverlapError` on overlap."""
    ordered = tuple(sorted(legs, key=lambda leg: (leg.from_ts, leg.to_ts)))
    for a, b in zip(ordered, ordered[1:]):
        if b.from_ts < a.to_ts:
            raise LegOverlapError(f"legs {a.label!r} and {b.label!r} overlap")
    return ordered


def assign_leg(ts: int, legs: Sequence[LegDef]) -> str:
    """Label of the leg whose ``[from_ts, to_ts)`` holds ``ts``; the last leg also owns its ``to_ts``."""
    ordered = check_legs(legs)
    return _assign_sorted(ts, ordered)


def _assign_sorted(ts: int, ordered: Sequence[LegDef]) -> str:
    for leg in ordered:
        if leg.from_ts <= ts < leg.to_ts:
            return leg.label
    if ordered and ts == ordered[-1].to_ts:
        return ordered[-1].label
    return UNKNOWN


def _stats(label: str, kind: str, impacts: list[CalibratedImpact]) -> LegStats:
    if not impacts:
        return LegStats(leg_label=label, kind=kind)
    values = [i.v_g for i in impacts]
    n_high = sum(1 for i in impacts if i.klass is ImpactClass.HIGH)
    return LegStats(
        leg_label=label,
        kind=kind,
        n_total=len(impacts),
        n_high=n_high,
        n_low=len(impacts) - n_high,
        max_g=max(values),
        mean_g=math.fsum(values) / len(values),
    )


def calibrate_records(
    records: Iterable[StoredRecord],
    legs: Sequence[LegDef],
    lam: float,
    high_threshold_g: float = DEFAULT_HIGH_THRESHOLD_G,
) -> list[CalibratedImpact]:
    check_positive(lam, "lambda")
    check_positive(high_threshold_g, "high_threshold_g")
    ordered = check_legs(legs)
    out = []
    for r in records:
        v = raw_to_gforce(r.accel, lam)
        out.append(
            CalibratedImpact(
                ts=r.ts,
                v_g=v,
                klass=classify_impact(v, high_threshold_g),
                leg_label=_assign_sorted(r.ts, ordered),
                lat=r.lat,
                lon=r.lon,
                raw=r.accel,
            )
        )
    return out


def aggregate(
    records: Iterable[StoredRecord],
    legs: Sequence[LegDef],
    lam: float,
    high_threshold_g: float = DEFAULT_HIGH_THRESHOLD_G,
) -> list[LegAggregate]:
    """Per-leg impacts and statistics in journey order, with an UNKNOWN bucket last."""
    ordered = check_legs(legs)
    impacts = calibrate_records(records, ordered, lam, high_threshold_g)
    buckets: dict[str, list[CalibratedImpact]] = {leg.label: [] for leg in ordered}
    buckets[UNKNOWN] = []
    for imp in impacts:
        buckets[imp.leg_label].append(imp)
    result = [LegAggregate(buckets[leg.label], _stats(leg.label, leg.kind.value, buckets[leg.label])) for leg in ordered]
    result.append(LegAggregate(buckets[UNKNOWN], _stats(UNKNOWN, UNKNOWN, buckets[UNKNOWN])))
    return result
