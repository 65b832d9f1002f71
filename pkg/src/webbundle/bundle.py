"""The .web bundle container: pack, unpack, load, save, validate.

A bundle is four fixed members — manifest.json, page.har, page.graphml,
page.png — stored either as a directory or inside a zip container with the
.web suffix.  Any member may be gzip-compressed at rest, gaining a .gz
suffix inside the container; readers are transparent to this.
"""

from __future__ import annotations

import gzip
import io
import json
import zipfile
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterator

from .errors import (
    InvariantViolation,
    MemberParseError,
    MissingMember,
    ParseError,
    SchemaError,
)
from .graph import EdgeType, ExecutionGraph, parse_graphml, serialize_graphml
from .har import HarArchive, parse_har, serialize_har
from .utils import origin_of, parse_rfc3339

MEMBERS = ("manifest.json", "page.har", "page.graphml", "page.png")
_TEXT_MEMBERS = ("manifest.json", "page.har", "page.graphml")
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# Fixed date for zip entries so packing is reproducible.
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class Manifest:
    page_origin: str
    final_url: str | None = None
    captured_at: datetime | None = None
    captured_raw: str | None = None
    extra: dict = field(default_factory=dict)


def parse_manifest(data: bytes | str) -> Manifest:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        document = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed manifest JSON: {exc.msg}", exc.lineno) from exc
    if not isinstance(document, dict):
        raise SchemaError("manifest", "not a JSON object")
    page_origin = document.get("page_origin")
    if not isinstance(page_origin, str) or not page_origin:
        raise SchemaError("manifest", "missing page_origin")
    if origin_of(page_origin) != page_origin:
        raise SchemaError("manifest", f"page_origin {page_origin!r} is not an origin")
    final_url = document.get("final_url")
    final_url = final_url if isinstance(final_url, str) else None
    captured_raw = document.get("captured_at")
    captured_raw = captured_raw if isinstance(captured_raw, str) else None
    extra = {
        k: v
        for k, v in document.items()
        if k not in ("page_origin", "final_url", "captured_at")
    }
    return Manifest(
        page_origin=page_origin,
        final_url=final_url,
        captured_at=parse_rfc3339(captured_raw) if captured_raw else None,
        captured_raw=captured_raw,
        extra=extra,
    )


def serialize_manifest(manifest: Manifest) -> bytes:
    document: dict = dict(manifest.extra)
    document["page_origin"] = manifest.page_origin
    if manifest.final_url is not None:
        document["final_url"] = manifest.final_url
    if manifest.captured_raw is not None:
        document["captured_at"] = manifest.captured_raw
    return (json.dumps(document, sort_keys=True, indent=2) + "\n").encode("utf-8")


@dataclass
class Bundle:
    manifest: Manifest
    har: HarArchive
    graph: ExecutionGraph
    screenshot: bytes

    @property
    def page_origin(self) -> str:
        return self.manifest.page_origin


@dataclass
class Finding:
    member: str
    code: str
    detail: str


# --- raw member access -------------------------------------------------------


def read_members(path: str | Path) -> dict[str, bytes]:
    """Read the four members from a directory or .web container.

    Gzip-compressed members (name + .gz) are decompressed transparently.
    """
    path = Path(path)
    stored: dict[str, bytes] = {}
    if path.is_dir():
        for name in MEMBERS:
            plain = path / name
            packed = path / (name + ".gz")
            if plain.exists():
                stored[name] = plain.read_bytes()
            elif packed.exists():
                stored[name] = gzip.decompress(packed.read_bytes())
    else:
        try:
            with zipfile.ZipFile(path) as archive:
                names = set(archive.namelist())
                for name in MEMBERS:
                    if name in names:
                        stored[name] = archive.read(name)
                    elif name + ".gz" in names:
                        stored[name] = gzip.decompress(archive.read(name + ".gz"))
        except FileNotFoundError:
            raise
        except zipfile.BadZipFile as exc:
            raise ParseError(f"not a zip container: {exc}") from exc
    for name in MEMBERS:
        if name not in stored:
            raise MissingMember(name)
    return stored


def pack(src_dir: str | Path, dest: str | Path, compress: bool = False) -> Path:
    """Pack a bundle directory into a .web container, reproducibly.

    Member bytes are copied verbatim (members already stored as .gz stay
    that way), so pack followed by unpack returns the original files
    byte for byte.  With ``compress`` the text members are gzipped.
    """
    src_dir = Path(src_dir)
    dest = Path(dest)
    payload: list[tuple[str, bytes]] = []
    for name in MEMBERS:
        plain = src_dir / name
        packed = src_dir / (name + ".gz")
        if plain.exists():
            data = plain.read_bytes()
            if compress and name in _TEXT_MEMBERS:
                payload.append((name + ".gz", gzip.compress(data, mtime=0)))
            else:
                payload.append((name, data))
        elif packed.exists():
            payload.append((name + ".gz", packed.read_bytes()))
        else:
            raise MissingMember(name)
    _write_container(dest, payload)
    return dest


def _write_container(dest: Path, payload: list[tuple[str, bytes]]) -> None:
    buffer = io.BytesIO()
    with zipfile.ZipFile(buffer, "w") as archive:
        for name, data in payload:
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.external_attr = 0o644 << 16
            compress_type = (
                zipfile.ZIP_STORED if name.endswith((".gz", ".png")) else zipfile.ZIP_DEFLATED
            )
            archive.writestr(info, data, compress_type=compress_type)
    dest.write_bytes(buffer.getvalue())


def unpack(container: str | Path, dest_dir: str | Path) -> Path:
    """Unpack a .web container into a directory, keeping stored names."""
    container = Path(container)
    dest_dir = Path(dest_dir)
    dest_dir.mkdir(parents=True, exist_ok=True)
    try:
        with zipfile.ZipFile(container) as archive:
            names = set(archive.namelist())
            for name in MEMBERS:
                stored = name if name in names else name + ".gz"
                if stored not in names:
                    raise MissingMember(name)
                (dest_dir / stored).write_bytes(archive.read(stored))
    except zipfile.BadZipFile as exc:
        raise ParseError(f"not a zip container: {exc}") from exc
    return dest_dir


# --- load / save -------------------------------------------------------------


def load_bundle(path: str | Path, check: bool = True) -> Bundle:
    """Load and parse a bundle from a directory or container.

    Parsing is strict about structure (malformed members raise
    MemberParseError).  With ``check`` the cross-member invariants must
    hold as well, otherwise InvariantViolation is raised; pass
    check=False to load a questionable bundle for inspection.
    """
    members = read_members(path)
    bundle = bundle_from_members(members)
    if check:
        findings = validate_bundle(bundle)
        if findings:
            first = findings[0]
            raise InvariantViolation(
                f"{len(findings)} finding(s), first: "
                f"[{first.member}] {first.code}: {first.detail}"
            )
    return bundle


def bundle_from_members(members: dict[str, bytes]) -> Bundle:
    def parse_member(name: str, parser):
        try:
            return parser(members[name])
        except (ParseError, SchemaError) as exc:
            raise MemberParseError(name, exc) from exc

    manifest = parse_member("manifest.json", parse_manifest)
    har = parse_member("page.har", parse_har)
    graph = parse_member("page.graphml", parse_graphml)
    return Bundle(manifest, har, graph, members["page.png"])


def serialize_members(bundle: Bundle) -> dict[str, bytes]:
    return {
        "manifest.json": serialize_manifest(bundle.manifest),
        "page.har": serialize_har(bundle.har),
        "page.graphml": serialize_graphml(bundle.graph),
        "page.png": bundle.screenshot,
    }


def save_bundle(
    bundle: Bundle, path: str | Path, as_dir: bool = False, compress: bool = False
) -> Path:
    """Serialize a bundle to a directory or a .web container."""
    path = Path(path)
    members = serialize_members(bundle)
    if as_dir:
        path.mkdir(parents=True, exist_ok=True)
        for name, data in members.items():
            if compress and name in _TEXT_MEMBERS:
                (path / (name + ".gz")).write_bytes(gzip.compress(data, mtime=0))
            else:
                (path / name).write_bytes(data)
        return path
    payload = []
    for name in MEMBERS:
        data = members[name]
        if compress and name in _TEXT_MEMBERS:
            payload.append((name + ".gz", gzip.compress(data, mtime=0)))
        else:
            payload.append((name, data))
    _write_container(path, payload)
    return path


# --- validation --------------------------------------------------------------


def validate_bundle(bundle: Bundle) -> list[Finding]:
    """Cross-member and soft invariant checks, as a stably ordered list.

    An empty list means the bundle is coherent.  Structural problems that
    parsing already rejects (bad XML, unknown types, dangling ids) never
    reach this layer.
    """
    findings: list[Finding] = []

    if bundle.manifest.captured_raw is not None and bundle.manifest.captured_at is None:
        findings.append(
            Finding(
                "manifest.json",
                "MANIFEST_BAD_TIMESTAMP",
                f"captured_at {bundle.manifest.captured_raw!r} is not RFC 3339",
            )
        )
    try:
        root = bundle.graph.root_document()
    except SchemaError:
        root = None
    if root is not None and root.url:
        root_origin = origin_of(root.url)
        if root_origin and root_origin != bundle.manifest.page_origin:
            findings.append(
                Finding(
                    "manifest.json",
                    "MANIFEST_ORIGIN_MISMATCH",
                    f"page_origin {bundle.manifest.page_origin} does not match "
                    f"root document origin {root_origin}",
                )
            )

    for index, entry in enumerate(bundle.har.entries):
        if entry.started_at is None:
            findings.append(
                Finding(
                    "page.har",
                    "HAR_BAD_TIMESTAMP",
                    f"entry {index} startedDateTime {entry.started_raw!r}",
                )
            )

    for request_id, detail in bundle.graph.request_chain_faults():
        code = "GRAPH_REQ_NO_ID" if request_id is None else "GRAPH_CHAIN_FAULT"
        where = detail if request_id is None else f"request {request_id}: {detail}"
        findings.append(Finding("page.graphml", code, where))

    registrations = {}
    for edge in bundle.graph.edges_by_type(EdgeType.ADD_EVENT_LISTENER):
        if edge.listener_id is not None and edge.listener_id not in registrations:
            registrations[edge.listener_id] = edge
    for edge in bundle.graph.edges_by_type(EdgeType.EVENT_LISTENER):
        if edge.listener_id is None:
            findings.append(
                Finding(
                    "page.graphml",
                    "GRAPH_LISTENER_NO_ID",
                    f"edge e{edge.id} has no listener id",
                )
            )
            continue
        registration = registrations.get(edge.listener_id)
        if registration is None:
            findings.append(
                Finding(
                    "page.graphml",
                    "GRAPH_LISTENER_UNMATCHED",
                    f"edge e{edge.id} listener {edge.listener_id} was never added",
                )
            )
        elif registration.key != edge.key:
            findings.append(
                Finding(
                    "page.graphml",
                    "GRAPH_LISTENER_KEY_MISMATCH",
                    f"edge e{edge.id} fires {edge.key!r} but listener "
                    f"{edge.listener_id} was added for {registration.key!r}",
                )
            )

    if not bundle.screenshot.startswith(PNG_MAGIC):
        findings.append(
            Finding("page.png", "SCREENSHOT_BAD_MAGIC", "not a PNG (bad signature)")
        )

    findings.sort(key=lambda f: (f.member, f.code, f.detail))
    return findings


# --- corpora -----------------------------------------------------------------


@dataclass
class CorpusEntry:
    path: Path
    page_origin: str | None = None


@dataclass
class Corpus:
    entries: list[CorpusEntry]
    notes: str = ""


def load_corpus_manifest(path: str | Path) -> Corpus:
    """Read a corpus manifest: {"bundles": [{"path", "page_origin"?}], "notes"?}.

    Relative bundle paths are resolved against the manifest's directory.
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed corpus manifest: {exc.msg}", exc.lineno) from exc
    if not isinstance(document, dict) or not isinstance(document.get("bundles"), list):
        raise SchemaError("corpus", "missing bundles list")
    entries = []
    for index, item in enumerate(document["bundles"]):
        if not isinstance(item, dict) or not isinstance(item.get("path"), str):
            raise SchemaError("corpus", f"bundle {index} has no path")
        bundle_path = Path(item["path"])
        if not bundle_path.is_absolute():
            bundle_path = path.parent / bundle_path
        page_origin = item.get("page_origin")
        entries.append(
            CorpusEntry(bundle_path, page_origin if isinstance(page_origin, str) else None)
        )
    notes = document.get("notes")
    return Corpus(entries, notes if isinstance(notes, str) else "")


def iter_corpus(corpus: Corpus, check: bool = True) -> Iterator[Bundle]:
    """Yield bundles one at a time; only the current one is kept alive.

    An entry's page_origin, when present, overrides the bundle manifest
    (useful when regrouping captures under a canonical origin).
    """
    for entry in corpus.entries:
        bundle = load_bundle(entry.path, check=check)
        if entry.page_origin:
            bundle.manifest.page_origin = entry.page_origin
        yield bundle
