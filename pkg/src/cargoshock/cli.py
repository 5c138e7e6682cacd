"""``cargoshock`` command line: simulate, calibrate, serve, report.

Exit codes: 0 success, 2 usage or validation error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import signal
import sys
import threading
from pathlib import Path
from typing import Optional, Sequence

from .analytics import DEFAULT_HIGH_THRESHOLD_G, DEFAULT_LAMBDA, CalibrationError, calibrate_lambda, read_drop_csv
from .device import ConfigError, DeviceConfig
from .ingest import (
    API_KEYS_ENV,
    IngestClient,
    IngestHTTPServer,
    IngestService,
    MalformedBatch,
    RecordStore,
    SourceError,
    keys_from_env,
    parse_batch,
)
from .records import StoredRecord
from .report import ReportSpec, battery_report, build_report
from .timeutil import parse_ts
from .world import ScenarioError, load_legs, load_scenario, run_simulation

log = logging.getLogger("cargoshock")

API_KEY_ENV = "CARGOSHOCK_API_KEY"
DEFAULT_PORT = 8750
TS_MIN, TS_MAX = -(2**53), 2**53


class UsageError(Exception):
    """Reported to the user with exit code 2."""


def _api_key(args: argparse.Namespace) -> Optional[str]:
    return args.api_key or os.environ.get(API_KEY_ENV)


def _is_url(source: str) -> bool:
    return source.startswith(("http://", "https://"))


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    config = None
    if args.config:
        try:
            config = DeviceConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise UsageError(f"{args.config}: {exc}") from None
    client = None
    if args.ingest_url:
        client = IngestClient(args.ingest_url, _api_key(args))
        if not client.health():
            raise SourceError(f"{args.ingest_url}: health probe failed")
        client.devices()  # fail fast on a rejected key

    journey = run_simulation(scenario, config, seed=args.seed, deliver=client.post_batch if client else None)
    summary = journey.summary()
    device_id = journey.config.device_id

    if client is not None:
        persisted = len(client.query(device_id, journey.start_ts, journey.end_ts))
    else:
        persisted = journey.acked_records
    if args.out:
        out = Path(args.out)
        (out / "batches").mkdir(parents=True, exist_ok=True)
        for i, (batch, _acked) in enumerate(journey.batches):
            (out / "batches" / f"batch-{i:05d}.json").write_text(batch.to_json() + "\n", encoding="utf-8")
        journey.write_jsonl(out / "journey.jsonl")
        (out / "battery.csv").write_text(battery_report(journey), encoding="utf-8")
    if args.battery_csv:
        Path(args.battery_csv).write_text(battery_report(journey), encoding="utf-8")
    if args.journey_log:
        journey.write_jsonl(args.journey_log)

    print(f"scenario {scenario.name} device {device_id} seed {args.seed}")
    print(
        f"captured={summary['captured']} persisted={persisted} "
        f"buffered={summary['buffered']} dropped={summary['dropped']}"
    )
    print(
        f"flushes={summary['flushes']} batches={summary['batches']} "
        f"final_battery_pct={summary['final_battery_pct']:.2f} days={summary['days_elapsed']:.2f}"
    )
    if persisted + summary["buffered"] + summary["dropped"] != summary["captured"]:
        log.error("conservation check failed")
        return 1
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def cmd_calibrate(args: argparse.Namespace) -> int:
    try:
        cal = calibrate_lambda(read_drop_csv(args.drops))
    except OSError as exc:
        raise UsageError(f"{args.drops}: {exc.strerror}") from None
    print(f"lambda={cal.lam:.6g} residual_rms={cal.residual_rms:.6g} trials={len(cal.fitted_from)}")
    return 0


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

def cmd_serve(args: argparse.Namespace) -> int:
    keys = keys_from_env()
    if not keys:
        raise UsageError(f"no API keys configured; set {API_KEYS_ENV}")
    store = RecordStore(args.data)
    try:
        server = IngestHTTPServer((args.host, args.port), IngestService(store, keys))
    except OSError as exc:
        store.close()
        raise UsageError(f"cannot bind {args.host}:{args.port}: {exc.strerror}") from None

    stop = threading.Event()

    def _shutdown(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, _shutdown)
    signal.signal(signal.SIGINT, _shutdown)
    server.start_background()
    print(f"listening on {server.url} data={args.data} records={len(store)}", flush=True)
    try:
        stop.wait()
    finally:
        server.shutdown()
        server.server_close()
        store.close()
        print("stopped", flush=True)
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _load_dir_records(path: Path) -> RecordStore:
    if (path / "records.jsonl").exists():
        return RecordStore(path, readonly=True)
    files = sorted((path / "batches").glob("*.json")) if (path / "batches").is_dir() else sorted(path.glob("*.json"))
    store = RecordStore()
    for f in files:
        try:
            store.ingest(parse_batch(f.read_bytes()))
        except MalformedBatch as exc:
            raise UsageError(f"{f}: {exc}") from None
    return store


def fetch_records(source: str, device_id: str, from_ts: int, to_ts: int, api_key: Optional[str]) -> list[StoredRecord]:
    if _is_url(source):
        client = IngestClient(source, api_key)
        if device_id not in client.devices():
            raise UsageError(f"unknown device {device_id!r} at {source}")
        return client.query(device_id, from_ts, to_ts)
    path = Path(source)
    if not path.is_dir():
        raise UsageError(f"source {source!r} is neither a URL nor a directory")
    store = _load_dir_records(path)
    if device_id not in store.devices():
        raise UsageError(f"unknown device {device_id!r} in {source}")
    return store.query(device_id, from_ts, to_ts)


def cmd_report(args: argparse.Namespace) -> int:
    try:
        from_ts = parse_ts(args.from_ts) if args.from_ts is not None else TS_MIN
        to_ts = parse_ts(args.to_ts) if args.to_ts is not None else TS_MAX
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if from_ts > to_ts:
        raise UsageError("--from is after --to")
    legs = load_legs(args.legs) if args.legs else ()
    if args.lam is not None:
        lam = args.lam
    elif args.drops:
        lam = calibrate_lambda(read_drop_csv(args.drops)).lam
        print(f"calibrated lambda={lam:.6g}")
    else:
        lam = DEFAULT_LAMBDA
    if not lam > 0:
        raise UsageError("--lambda must be > 0")
    if not args.threshold > 0:
        raise UsageError("--threshold must be > 0")

    records = fetch_records(args.source, args.device, from_ts, to_ts, _api_key(args))

    # plot window: explicit bounds, else whatever the legs and records cover
    span = [leg.from_ts for leg in legs] + [leg.to_ts for leg in legs] + [r.ts for r in records]
    lo = from_ts if args.from_ts is not None else min(span, default=0)
    hi = to_ts if args.to_ts is not None else max(span, default=lo)
    spec = ReportSpec(
        title=args.title or f"Impacts for {args.device}",
        device_id=args.device,
        from_ts=lo,
        to_ts=max(hi, lo),
        high_threshold_g=args.threshold,
    )
    report = build_report(records, legs, lam, spec)
    paths = report.write(args.out)

    print(f"{'leg':<24} {'kind':<8} {'total':>6} {'high':>6} {'low':>6} {'max_g':>9} {'mean_g':>9}")
    for agg in report.aggregates:
        s = agg.stats
        print(f"{s.leg_label:<24} {s.kind:<8} {s.n_total:>6} {s.n_high:>6} {s.n_low:>6} {s.max_g:>9.3f} {s.mean_g:>9.3f}")
    for name, p in paths.items():
        print(f"wrote {name}: {p}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="cargoshock", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", parents=[common], help="run a journey simulation")
    p.add_argument("--scenario", required=True, help="scenario JSON file or bundled name (demo_voyage, long_haul_120d)")
    p.add_argument("--config", help="DeviceConfig JSON overriding the scenario's device section")
    dest = p.add_mutually_exclusive_group()
    dest.add_argument("--ingest-url", help="post batches to this ingestion service")
    dest.add_argument("--out", help="write batches, journey log and battery report to this directory")
    p.add_argument("--api-key", help=f"API key (default: ${API_KEY_ENV})")
    p.add_argument("--battery-csv", help="also write the battery report here")
    p.add_argument("--journey-log", help="also write the journey log (JSON lines) here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common], help="fit lambda from drop trials")
    p.add_argument("--drops", required=True, help="CSV with header known_g,x,y,z")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("serve", parents=[common], help=f"run the ingestion service (keys from ${API_KEYS_ENV})")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data", required=True, help="data directory for the append-only log")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", parents=[common], help="per-leg impact chart and CSVs")
    p.add_argument("--source", required=True, help="ingestion service URL or a directory of batches / records")
    p.add_argument("--device", required=True)
    p.add_argument("--from", dest="from_ts", help="epoch ms or RFC 3339 (default: unbounded)")
    p.add_argument("--to", dest="to_ts", help="epoch ms or RFC 3339 (default: unbounded)")
    p.add_argument("--legs", help="scenario or legs JSON file")
    p.add_argument("--lambda", dest="lam", type=float, help=f"g per raw count (default {DEFAULT_LAMBDA})")
    p.add_argument("--drops", help="calibrate lambda from this drop-trial CSV when --lambda is omitted")
    p.add_argument("--threshold", type=float, default=DEFAULT_HIGH_THRESHOLD_G, help="HIGH/LOW boundary in g")
    p.add_argument("--title")
    p.add_argument("--api-key", help=f"API key (default: ${API_KEY_ENV})")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ConfigError, CalibrationError, SourceError, MalformedBatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
