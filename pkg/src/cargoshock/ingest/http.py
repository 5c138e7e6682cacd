"""HTTP front end for the ingestion service, and a small client for it.

Endpoints::

    POST /v1/batches                          body: one UplinkBatch JSON object
    GET  /v1/records?device_id=&from=&to=     inclusive range, sorted by ts
    GET  /v1/devices
    GET  /v1/health

The API key travels in the ``X-Api-Key`` header.
"""

from __future__ import annotations

import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional

from ..records import StoredRecord, UplinkBatch
from ..timeutil import parse_ts
from .service import IngestService, QueryRangeError
from .wire import MalformedBatch, Unauthorized

log = logging.getLogger(__name__)

MAX_BODY = 16 * 1024 * 1024


class _Handler(BaseHTTPRequestHandler):
    server: "IngestHTTPServer"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args: Any) -> None:
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status: int, body: dict[str, Any]) -> None:
        payload = json.dumps(body, separators=(",", ":")).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_POST(self) -> None:
        url = urllib.parse.urlsplit(self.path)
        length = int(self.headers.get("Content-Length") or 0)
        if length > MAX_BODY:
            self._send(413, {"status": "reject", "reason": "too_large"})
            return
        body = self.rfile.read(length)
        if url.path != "/v1/batches":
            self._send(404, {"error": "not found"})
            return
        try:
            ack = self.server.service.ingest_batch(body, self.headers.get("X-Api-Key"))
        except Unauthorized as exc:
            self._send(401, {"status": "reject", "reason": exc.reason, "detail": str(exc)})
        except MalformedBatch as exc:
            self._send(400, {"status": "reject", "reason": exc.reason, "detail": str(exc)})
        else:
            self._send(200, {"status": "ack", "stored": ack.stored, "duplicate": ack.duplicate})

    def do_GET(self) -> None:
        url = urllib.parse.urlsplit(self.path)
        service = self.server.service
        key = self.headers.get("X-Api-Key")
        try:
            if url.path == "/v1/health":
                self._send(200, {"status": "ok"})
            elif url.path == "/v1/devices":
                self._send(200, {"devices": service.devices(key)})
            elif url.path == "/v1/records":
                q = urllib.parse.parse_qs(url.query)
                try:
                    device_id = q["device_id"][0]
                    from_ts = parse_ts(q["from"][0])
                    to_ts = parse_ts(q["to"][0])
                except (KeyError, IndexError, ValueError) as exc:
                    self._send(400, {"error": f"bad query: {exc}"})
                    return
                rows = service.query_records(device_id, from_ts, to_ts, key)
                self._send(200, {"records": [r.to_dict() for r in rows]})
            else:
                self._send(404, {"error": "not found"})
        except Unauthorized as exc:
            self._send(401, {"error": str(exc)})
        except QueryRangeError as exc:
            self._send(400, {"error": str(exc)})


class IngestHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: IngestService):
        self.service = service
        super().__init__(address, _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="ingest-http", daemon=True)
        t.start()
        return t


class SourceError(RuntimeError):
    """The ingestion service could not be reached or refused a request."""


class IngestClient:
    def __init__(self, base_url: str, api_key: Optional[str], timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout

    def _request(self, method: str, path: str, body: Optional[bytes] = None) -> tuple[int, dict[str, Any]]:
        req = urllib.request.Request(self.base_url + path, data=body, method=method)
        if self.api_key:
            req.add_header("X-Api-Key", self.api_key)
        if body is not None:
            req.add_header("Content-Type", "application/json")
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.status, json.loads(resp.read() or b"{}")
        except urllib.error.HTTPError as exc:
            try:
                payload = json.loads(exc.read() or b"{}")
            except json.JSONDecodeError:
                payload = {}
            return exc.code, payload
        except (urllib.error.URLError, OSError) as exc:
            raise SourceError(f"{self.base_url}: {exc}") from None

    def post_batch(self, batch: UplinkBatch) -> bool:
        """True when the server acknowledged the batch; a lost connection is no ack."""
        try:
            status, _ = self._request("POST", "/v1/batches", batch.to_json().encode("utf-8"))
        except SourceError as exc:
            log.warning("uplink failed: %s", exc)
            return False
        return status == 200

    def health(self) -> bool:
        status, _ = self._request("GET", "/v1/health")
        return status == 200

    def devices(self) -> list[str]:
        status, payload = self._request("GET", "/v1/devices")
        if status != 200:
            raise SourceError(f"devices: HTTP {status}: {payload.get('error', '')}")
        return list(payload["devices"])

    def query(self, device_id: str, from_ts: int, to_ts: int) -> list[StoredRecord]:
        qs = urllib.parse.urlencode({"device_id": device_id, "from": from_ts, "to": to_ts})
        status, payload = self._request("GET", f"/v1/records?{qs}")
        if status != 200:
            raise SourceError(f"records: HTTP {status}: {payload.get('error', '')}")
        return [StoredRecord.from_dict(d) for d in payload["records"]]
