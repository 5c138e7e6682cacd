from __future__ import annotations

import random

from cargoshock.records import RawTriple, SensorRecord, UplinkBatch


def make_batch(device_id="d1", seq=0, ts=(1, 2, 3), accel=(0, -100, 0)):
    records = tuple(
        SensorRecord(ts=t, battery_pct=90.0, accel=RawTriple(*accel), lat=1.5, lon=2.5, temp_c=20.0, hum_pct=None)
        for t in ts
    )
    return UplinkBatch(device_id=device_id, seq=seq, flush_ts=max(ts) + 1, battery_pct=90.0, records=records)


def random_batches(seed, devices=3, batches=20, per_batch=8):
    rng = random.Random(seed)
    out = []
    for d in range(devices):
        t = rng.randint(0, 1000)
        for seq in range(batches):
            ts = []
            for _ in range(rng.randint(1, per_batch)):
                t += rng.randint(1, 500)
                ts.append(t)
            accel = (rng.randint(-512, 512), rng.randint(-512, 512), rng.randint(-512, 512))
            out.append(make_batch(f"dev-{d}", seq, ts, accel))
    return out
