from __future__ import annotations

import hmac
import os
from typing import Any, Iterable, Optional, Union

from ..records import StoredRecord, UplinkBatch
from .store import Ack, RecordStore
from .wire import Unauthorized, parse_batch

API_KEYS_ENV = "CARGOSHOCK_API_KEYS"


class QueryRangeError(ValueError):
    pass


def keys_from_env(environ: Optional[dict[str, str]] = None) -> frozenset[str]:
    """Comma-separated API keys from ``CARGOSHOCK_API_KEYS``."""
    raw = (environ if environ is not None else os.environ).get(API_KEYS_ENV, "")
    return frozenset(k.strip() for k in raw.split(",") if k.strip())


class IngestService:
    """Keyed batch ingestion and range queries over a :class:`RecordStore`."""

    def __init__(self, store: RecordStore, api_keys: Iterable[str]):
        self.store = store
        self._keys = tuple(api_keys)

    def _authorize(self, api_key: Optional[str]) -> None:
        if not api_key:
            raise Unauthorized("missing API key")
        # constant-time compare against every key
        ok = False
        for k in self._keys:
            ok |= hmac.compare_digest(k.encode(), api_key.encode())
        if not ok:
            raise Unauthorized("invalid API key")

    def ingest_batch(self, batch: Union[UplinkBatch, dict[str, Any], str, bytes], api_key: Optional[str]) -> Ack:
        """Raises :class:`Unauthorized` or :class:`MalformedBatch`; nothing is stored then."""
        self._authorize(api_key)
        return self.store.ingest(parse_batch(batch))

    def query_records(self, device_id: str, from_ts: int, to_ts: int, api_key: Optional[str]) -> list[StoredRecord]:
        self._authorize(api_key)
        if from_ts > to_ts:
            raise QueryRangeError(f"from ({from_ts}) is after to ({to_ts})")
        return self.store.query(device_id, from_ts, to_ts)

    def devices(self, api_key: Optional[str]) -> list[str]:
        self._authorize(api_key)
        return self.store.devices()
