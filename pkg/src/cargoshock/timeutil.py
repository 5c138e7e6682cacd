from __future__ import annotations

from datetime import datetime, timezone
from typing import Union

MS_PER_DAY = 86_400_000


def parse_ts(value: Union[int, float, str]) -> int:
    """Accept epoch milliseconds or an RFC 3339 timestamp; return epoch ms (UTC)."""
    if isinstance(value, bool):
        raise ValueError(f"not a timestamp: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"epoch ms must be integral: {value!r}")
        return int(value)
    text = str(value).strip()
    if text.lstrip("-").isdigit():
        return int(text)
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        raise ValueError(f"not epoch ms or RFC 3339: {value!r}") from None
    if dt.tzinfo is None:
        raise ValueError(f"RFC 3339 timestamp needs an offset: {value!r}")
    return int(round(dt.timestamp() * 1000))


def format_ts(ts_ms: int) -> str:
    dt = datetime.fromtimestamp(ts_ms / 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{ts_ms % 1000:03d}Z"
