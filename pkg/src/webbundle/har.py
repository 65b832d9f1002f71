"""HTTP Archive (HAR 1.1/1.2) reader and deterministic writer.

Only the fields the analyses need are lifted into dataclasses; everything
else (bodies, cookies, timings, vendor extensions) rides along untouched in
each entry's ``raw`` dict and survives a parse/serialize round trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime

from .errors import ParseError, SchemaError
from .utils import parse_rfc3339

ACCEPTED_VERSIONS = ("1.1", "1.2")


@dataclass
class HarEntry:
    url: str
    method: str
    status: int
    started_at: datetime | None
    started_raw: str | None
    request_headers: tuple[tuple[str, str], ...]
    response_headers: tuple[tuple[str, str], ...]
    body_size: int | None
    content_size: int | None
    raw: dict = field(compare=False, repr=False, default_factory=dict)

    @classmethod
    def from_raw(cls, raw: dict, index: int) -> "HarEntry":
        if not isinstance(raw, dict):
            raise SchemaError(f"entry {index}", "entry is not an object")
        request = raw.get("request")
        if not isinstance(request, dict):
            raise SchemaError(f"entry {index}", "missing request")
        url = request.get("url")
        method = request.get("method")
        if not isinstance(url, str) or not url:
            raise SchemaError(f"entry {index}", "missing request url")
        if not isinstance(method, str) or not method:
            raise SchemaError(f"entry {index}", "missing request method")
        response = raw.get("response")
        response = response if isinstance(response, dict) else {}
        status = response.get("status")
        status = status if isinstance(status, int) else 0
        content = response.get("content")
        content = content if isinstance(content, dict) else {}
        started_raw = raw.get("startedDateTime")
        started_raw = started_raw if isinstance(started_raw, str) else None
        body_size = response.get("bodySize")
        content_size = content.get("size")
        return cls(
            url=url,
            method=method,
            status=status,
            started_at=parse_rfc3339(started_raw) if started_raw else None,
            started_raw=started_raw,
            request_headers=_headers_of(request),
            response_headers=_headers_of(response),
            body_size=body_size if isinstance(body_size, int) else None,
            content_size=content_size if isinstance(content_size, int) else None,
            raw=raw,
        )


def _headers_of(message: dict) -> tuple[tuple[str, str], ...]:
    headers = message.get("headers")
    if not isinstance(headers, list):
        return ()
    pairs = []
    for item in headers:
        if isinstance(item, dict):
            name = item.get("name")
            value = item.get("value")
            if isinstance(name, str) and isinstance(value, str):
                pairs.append((name, value))
    return tuple(pairs)


def header(entry: HarEntry, side: str, name: str) -> str | None:
    """First header value with the given name, case-insensitively."""
    if side == "request":
        headers = entry.request_headers
    elif side == "response":
        headers = entry.response_headers
    else:
        raise ValueError(f"side must be 'request' or 'response', not {side!r}")
    wanted = name.lower()
    for header_name, value in headers:
        if header_name.lower() == wanted:
            return value
    return None


class HarArchive:
    """A parsed archive: entries sorted by start time plus the raw log."""

    def __init__(self, entries: list[HarEntry], raw_log: dict, version: str = "1.2"):
        self.entries = entries
        self.raw_log = raw_log
        self.version = version

    @classmethod
    def from_log(cls, log: dict) -> "HarArchive":
        if not isinstance(log, dict):
            raise SchemaError("log", "log is not an object")
        version = log.get("version")
        if version not in ACCEPTED_VERSIONS:
            raise SchemaError("log", f"unsupported HAR version {version!r}")
        raw_entries = log.get("entries")
        if not isinstance(raw_entries, list):
            raise SchemaError("log", "missing entries list")
        entries = [HarEntry.from_raw(e, i) for i, e in enumerate(raw_entries)]
        entries = _sorted_by_start(entries)
        return cls(entries, log, version)

    def __len__(self) -> int:
        return len(self.entries)


def _sorted_by_start(entries: list[HarEntry]) -> list[HarEntry]:
    # Stable: parsed timestamps in order, unparseable ones after them in
    # their original relative order.
    def sort_key(pair):
        index, entry = pair
        if entry.started_at is None:
            return (1, 0, index)
        return (0, entry.started_at.timestamp(), index)

    return [entry for _, entry in sorted(enumerate(entries), key=sort_key)]


def parse_har(data: bytes | str) -> HarArchive:
    """Parse HAR bytes; ParseError for bad JSON, SchemaError for bad shape.

    A malformed startedDateTime is not an error here — the entry is kept
    with ``started_at`` None and surfaced by bundle validation instead.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        document = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed HAR JSON: {exc.msg}", exc.lineno) from exc
    if not isinstance(document, dict) or "log" not in document:
        raise SchemaError("document", "missing top-level log")
    return HarArchive.from_log(document["log"])


def serialize_har(archive: HarArchive) -> bytes:
    """Write a HAR 1.2 document with fully deterministic bytes.

    Entries are emitted in the archive's (time-sorted) order; object keys
    are sorted.  Unrecognized entry fields pass through from ``raw``.
    """
    log = dict(archive.raw_log)
    log["version"] = "1.2"
    log.setdefault("creator", {"name": "webbundle", "version": "0.1"})
    log["entries"] = [entry.raw for entry in archive.entries]
    text = json.dumps({"log": log}, sort_keys=True, indent=2)
    return (text + "\n").encode("utf-8")
