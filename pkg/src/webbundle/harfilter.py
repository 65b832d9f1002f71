"""Separate page-context HAR entries from browser-generated traffic.

An archive records everything the browser put on the wire.  For analyses
that reason about *page* behavior, entries the page did not cause — CORS
preflights, CSP violation reports, websocket upgrades, pre-landing
redirects, internal browser fetches, service-worker traffic — are
classified out by a fixed, ordered rule list.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .har import HarArchive, HarEntry, header

_DATA_DIR = Path(__file__).parent / "data"
_DEFAULT_INTERNAL_FILE = "browser_internal_urls.txt"


class Verdict(Enum):
    PAGE_CONTEXT = "page-context"
    PREFLIGHT = "preflight"
    CSP_REPORT = "csp-report"
    WEBSOCKET_UPGRADE = "websocket-upgrade"
    INITIAL_DOCUMENT_REDIRECT = "initial-document-redirect"
    BROWSER_INTERNAL = "browser-internal"
    SERVICE_WORKER = "service-worker"


def load_internal_prefixes(path: str | Path | None = None) -> tuple[str, ...]:
    """URL prefixes treated as browser-internal; one per line, # comments."""
    if path is None:
        path = _DATA_DIR / _DEFAULT_INTERNAL_FILE
    prefixes = []
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            prefixes.append(line)
    return tuple(prefixes)


_default_prefixes: tuple[str, ...] | None = None


def _internal_prefixes() -> tuple[str, ...]:
    global _default_prefixes
    if _default_prefixes is None:
        _default_prefixes = load_internal_prefixes()
    return _default_prefixes


def classify_har_entry(
    entry: HarEntry,
    internal_prefixes: tuple[str, ...] | None = None,
    precedes_primary_document: bool = True,
) -> Verdict:
    """Apply the exclusion rules in their fixed order; first hit wins.

    ``precedes_primary_document`` says whether this entry comes before the
    first non-redirect document response in its archive — required by the
    initial-document-redirect rule, and True for an entry considered in
    isolation.
    """
    prefixes = internal_prefixes if internal_prefixes is not None else _internal_prefixes()

    if (
        header(entry, "request", "Access-Control-Request-Method") is not None
        and entry.method.upper() == "OPTIONS"
    ):
        return Verdict.PREFLIGHT

    dest = header(entry, "request", "Sec-Fetch-Dest")
    if dest == "report":
        return Verdict.CSP_REPORT

    upgrade = header(entry, "request", "Upgrade")
    if upgrade is not None and upgrade.lower() == "websocket":
        return Verdict.WEBSOCKET_UPGRADE

    if (
        dest == "document"
        and header(entry, "response", "Location") is not None
        and precedes_primary_document
    ):
        return Verdict.INITIAL_DOCUMENT_REDIRECT

    if any(entry.url.startswith(prefix) for prefix in prefixes):
        return Verdict.BROWSER_INTERNAL

    if dest == "serviceworker":
        return Verdict.SERVICE_WORKER

    return Verdict.PAGE_CONTEXT


@dataclass
class FilterResult:
    kept: list[HarEntry]
    kept_indexes: list[int]
    verdicts: list[Verdict]

    @property
    def counts(self) -> dict[str, int]:
        tally: dict[str, int] = {}
        for verdict in self.verdicts:
            tally[verdict.value] = tally.get(verdict.value, 0) + 1
        return tally


def primary_document_index(archive: HarArchive) -> int | None:
    """Index of the first non-redirect document response, if any."""
    for index, entry in enumerate(archive.entries):
        if header(entry, "request", "Sec-Fetch-Dest") != "document":
            continue
        if not 300 <= entry.status <= 399:
            return index
    return None


def filter_page_context(
    archive: HarArchive, internal_prefixes: tuple[str, ...] | None = None
) -> FilterResult:
    """Classify every entry; keep the ones the page itself caused.

    Verdicts are parallel to ``archive.entries``; ``kept``/``kept_indexes``
    hold the page-context subset in archive order.
    """
    boundary = primary_document_index(archive)
    kept: list[HarEntry] = []
    kept_indexes: list[int] = []
    verdicts: list[Verdict] = []
    for index, entry in enumerate(archive.entries):
        precedes = boundary is None or index < boundary
        verdict = classify_har_entry(entry, internal_prefixes, precedes)
        verdicts.append(verdict)
        if verdict is Verdict.PAGE_CONTEXT:
            kept.append(entry)
            kept_indexes.append(index)
    return FilterResult(kept, kept_indexes, verdicts)
