"""Append-only record store with an in-memory index.

On disk a store directory holds two line-delimited JSON files:

``records.jsonl``
    one :class:`StoredRecord` per line, UTF-8, ``\\n`` terminated.
``commits.jsonl``
    one line per accepted batch: ``{"device_id", "seq", "count", "end"}``
    where ``end`` is the byte length of ``records.jsonl`` once the batch's
    lines were synced.

A batch becomes visible only when its commit line is written. On open, any
bytes of ``records.jsonl`` past the last commit belong to a batch that never
committed and are truncated, so a crash can never expose part of a batch.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Union

from ..records import StoredRecord, UplinkBatch

log = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
COMMITS_FILE = "commits.jsonl"


@dataclass(frozen=True)
class Ack:
    stored: int
    duplicate: bool


class _DeviceIndex:
    __slots__ = ("ts", "rows")

    def __init__(self) -> None:
        self.ts: list[int] = []
        self.rows: list[StoredRecord] = []

    def __contains__(self, ts: int) -> bool:
        i = bisect_left(self.ts, ts)
        return i < len(self.ts) and self.ts[i] == ts

    def insert(self, rec: StoredRecord) -> None:
        if not self.ts or rec.ts > self.ts[-1]:
            self.ts.append(rec.ts)
            self.rows.append(rec)
            return
        i = bisect_left(self.ts, rec.ts)
        self.ts.insert(i, rec.ts)
        self.rows.insert(i, rec)

    def range(self, from_ts: int, to_ts: int) -> list[StoredRecord]:
        return self.rows[bisect_left(self.ts, from_ts): bisect_right(self.ts, to_ts)]


class RecordStore:
    """Thread-safe store; pass ``data_dir=None`` for a purely in-memory one."""

    def __init__(
        self,
        data_dir: Optional[Union[str, Path]] = None,
        fsync: bool = True,
        readonly: bool = False,
    ):
        self._lock = threading.RLock()
        self._index: dict[str, _DeviceIndex] = {}
        self._accepted: set[tuple[str, int]] = set()
        self._fsync = fsync
        self._readonly = readonly
        self._records_fh = None
        self._commits_fh = None
        self.data_dir = Path(data_dir) if data_dir is not None else None
        if self.data_dir is not None:
            self._open()

    # -- persistence -------------------------------------------------------

    def _open(self) -> None:
        assert self.data_dir is not None
        if not self._readonly:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        rpath = self.data_dir / RECORDS_FILE
        cpath = self.data_dir / COMMITS_FILE
        commits = []
        if cpath.exists():
            raw = cpath.read_bytes()
            pos = 0
            for line in raw.splitlines(keepends=True):
                if not line.endswith(b"\n"):
                    break
                try:
                    commits.append(json.loads(line))
                except json.JSONDecodeError:
                    break
                pos += len(line)
            if pos < len(raw) and not self._readonly:
                log.warning("discarding %d bytes of torn commit log", len(raw) - pos)
                with cpath.open("r+b") as fh:
                    fh.truncate(pos)
        end = commits[-1]["end"] if commits else 0
        data = rpath.read_bytes() if rpath.exists() else b""
        if len(data) < end:
            raise RuntimeError(f"{rpath} is shorter than its commit log claims")
        if len(data) > end and not self._readonly:
            log.warning("discarding %d bytes of uncommitted records", len(data) - end)
            with rpath.open("r+b") as fh:
                fh.truncate(end)
        data = data[:end]
        for line in data.splitlines():
            if line:
                self._index_record(StoredRecord.from_dict(json.loads(line)))
        for c in commits:
            self._accepted.add((c["device_id"], c["seq"]))
        if not self._readonly:
            self._records_fh = rpath.open("ab")
            self._commits_fh = cpath.open("ab")

    def _sync(self, fh) -> None:
        fh.flush()
        if self._fsync:
            os.fsync(fh.fileno())

    def close(self) -> None:
        with self._lock:
            for fh in (self._records_fh, self._commits_fh):
                if fh is not None:
                    self._sync(fh)
                    fh.close()
            self._records_fh = self._commits_fh = None

    def __enter__(self) -> "RecordStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- index -------------------------------------------------------------

    def _index_record(self, rec: StoredRecord) -> None:
        idx = self._index.get(rec.device_id)
        if idx is None:
            idx = self._index[rec.device_id] = _DeviceIndex()
        idx.insert(rec)

    def _has(self, device_id: str, ts: int) -> bool:
        idx = self._index.get(device_id)
        return idx is not None and ts in idx

    # -- operations ----------------------------------------------------------

    def ingest(self, batch: UplinkBatch) -> Ack:
        """Persist a validated batch exactly once.

        A repeated ``(device_id, seq)`` stores nothing new unless the retry
        carries records that are not yet stored; records are also
        deduplicated on ``(device_id, ts)`` across batches.
        """
        if self._readonly:
            raise PermissionError("store was opened read-only")
        with self._lock:
            key = (batch.device_id, batch.seq)
            duplicate = key in self._accepted
            fresh: list[StoredRecord] = []
            seen: set[int] = set()
            for r in batch.records:
                if r.ts in seen or self._has(batch.device_id, r.ts):
                    continue
                seen.add(r.ts)
                fresh.append(StoredRecord.from_sensor(batch.device_id, batch.seq, r))
            if duplicate and not fresh:
                return Ack(stored=0, duplicate=True)
            if self._records_fh is not None:
                self._append(batch, fresh)
            for rec in fresh:
                self._index_record(rec)
            self._accepted.add(key)
            return Ack(stored=len(fresh), duplicate=duplicate)

    def _append(self, batch: UplinkBatch, fresh: list[StoredRecord]) -> None:
        rfh, cfh = self._records_fh, self._commits_fh
        assert rfh is not None and cfh is not None
        start, cstart = rfh.tell(), cfh.tell()
        try:
            rfh.write("".join(r.to_json() + "\n" for r in fresh).encode("utf-8"))
            self._sync(rfh)
            commit = {"device_id": batch.device_id, "seq": batch.seq, "count": len(fresh), "end": rfh.tell()}
            cfh.write((json.dumps(commit, separators=(",", ":")) + "\n").encode("utf-8"))
            self._sync(cfh)
        except BaseException:
            # roll back so later commits never cover this batch's bytes
            for fh, pos in ((rfh, start), (cfh, cstart)):
                fh.truncate(pos)
                fh.seek(pos)
            raise

    def query(self, device_id: str, from_ts: int, to_ts: int) -> list[StoredRecord]:
        if from_ts > to_ts:
            raise ValueError(f"from_ts {from_ts} is after to_ts {to_ts}")
        with self._lock:
            idx = self._index.get(device_id)
            return [] if idx is None else idx.range(from_ts, to_ts)

    def devices(self) -> list[str]:
        with self._lock:
            return sorted(self._index)

    def __len__(self) -> int:
        with self._lock:
            return sum(len(i.ts) for i in self._index.values())

    def iter_records(self) -> Iterator[StoredRecord]:
        """All records ordered by ``(device_id, ts)``."""
        with self._lock:
            snapshot = [list(self._index[d].rows) for d in sorted(self._index)]
        for rows in snapshot:
            yield from rows

    def canonical_dump(self) -> bytes:
        return "".join(r.to_json() + "\n" for r in self.iter_records()).encode("utf-8")
