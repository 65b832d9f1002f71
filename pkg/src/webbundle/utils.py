"""Small URL and timestamp helpers shared across modules."""

from __future__ import annotations

from datetime import datetime, timezone
from urllib.parse import urlsplit

DEFAULT_PORTS = {"http": 80, "https": 443, "ws": 80, "wss": 443, "ftp": 21}


def host_of(url: str) -> str:
    """Hostname of an absolute URL, lowercased, without port."""
    try:
        host = urlsplit(url).hostname
    except ValueError:
        return ""
    return host or ""


def origin_of(url: str) -> str:
    """scheme+host+port origin string; default ports are omitted."""
    parts = urlsplit(url)
    if not parts.scheme or not parts.hostname:
        return ""
    scheme = parts.scheme.lower()
    host = parts.hostname.lower()
    try:
        port = parts.port
    except ValueError:
        port = None
    if port is None or DEFAULT_PORTS.get(scheme) == port:
        return f"{scheme}://{host}"
    return f"{scheme}://{host}:{port}"


def normalize_url_for_match(url: str) -> str:
    """Lowercase scheme and host, drop the fragment, keep the query."""
    parts = urlsplit(url)
    scheme = parts.scheme.lower()
    netloc = parts.netloc.lower()
    rest = parts.path
    if parts.query:
        rest += "?" + parts.query
    if not scheme or not netloc:
        return url.split("#", 1)[0]
    return f"{scheme}://{netloc}{rest}"


def parse_rfc3339(value: str) -> datetime | None:
    """Parse an RFC 3339 timestamp; returns None when malformed.

    Python 3.10's fromisoformat does not accept the Z suffix.
    """
    if not isinstance(value, str) or not value:
        return None
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError:
        return None
    if parsed.tzinfo is None:
        # RFC 3339 requires an offset; a bare local time is malformed.
        return None
    return parsed


def format_rfc3339(moment: datetime) -> str:
    """UTC RFC 3339 with millisecond precision and Z suffix."""
    moment = moment.astimezone(timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%S.") + f"{moment.microsecond // 1000:03d}Z"
