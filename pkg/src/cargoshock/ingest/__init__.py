from .http import IngestClient, IngestHTTPServer, SourceError
from .service import API_KEYS_ENV, IngestService, QueryRangeError, keys_from_env
from .store import Ack, RecordStore
from .wire import MalformedBatch, Rejected, Unauthorized, parse_batch

__all__ = [
    "API_KEYS_ENV",
    "Ack",
    "IngestClient",
    "IngestHTTPServer",
    "IngestService",
    "MalformedBatch",
    "QueryRangeError",
    "RecordStore",
    "Rejected",
    "SourceError",
    "Unauthorized",
    "keys_from_env",
    "parse_batch",
]
