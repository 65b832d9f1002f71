"""Synthetic bundles with known ground truth.

A Scenario is a flat list of page events (parser builds elements, scripts
load and run, elements fetch, frames embed, and optionally a capture race
is injected).  Building a scenario yields a Bundle whose graph and HAR
tell the same story, plus a ledger: the outcomes every analysis should
report, derived from the event semantics themselves rather than from the
analysis code.

Everything is driven by a 64-bit linear congruential generator so a seed
pins the whole bundle down to the byte.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum

from .bundle import Bundle, Manifest
from .errors import ScenarioError
from .graph import EdgeType, ExecutionGraph, GraphEdge, GraphNode, NodeType, ScriptType
from .har import HarArchive
from .utils import format_rfc3339

# MMIX multiplier/increment.
_MULT = 6364136223846793005
_INC = 1442695040888963407
_MASK = (1 << 64) - 1


class Lcg64:
    """Deterministic 64-bit linear congruential generator."""

    def __init__(self, seed: int):
        self.state = (seed ^ 0x9E3779B97F4A7C15) & _MASK

    def next_u64(self) -> int:
        self.state = (self.state * _MULT + _INC) & _MASK
        return self.state

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("below() needs a positive bound")
        return (self.next_u64() >> 16) % n

    def choice(self, seq):
        return seq[self.below(len(seq))]


class EventKind(Enum):
    PARSER_CREATES_ELEMENT = "parser-creates-element"
    SCRIPT_LOADED = "script-loaded"
    SCRIPT_CALLS_API = "script-calls-api"
    SCRIPT_ADDS_LISTENER = "script-adds-listener"
    SCRIPT_CREATES_ELEMENT = "script-creates-element"
    ELEMENT_REQUESTS = "element-requests"
    FETCH_REQUEST = "fetch-request"
    DOCUMENT_EMBEDDED = "document-embedded"
    INJECT_RACE = "inject-race"


# Handle sentinels: an entity is named by the index of the event that
# created it; -1 is the parser, -2 the root document.
PARSER = -1
ROOT_DOCUMENT = -2


@dataclass
class ScenarioEvent:
    kind: EventKind
    actor: int = PARSER
    element: int = -1
    document: int = ROOT_DOCUMENT
    tag: str = ""
    url: str = ""
    api: str = ""
    event_key: str = ""
    inline: bool = False
    method: str = "GET"
    status: int = 200
    resource_type: str = ""
    redirects: tuple[str, ...] = ()
    har_side: bool = False


@dataclass
class Scenario:
    seed: int
    page_origin: str
    events: list[ScenarioEvent] = field(default_factory=list)

    def to_dict(self) -> dict:
        events = []
        for event in self.events:
            raw = asdict(event)
            raw["kind"] = event.kind.value
            raw["redirects"] = list(event.redirects)
            events.append(raw)
        return {"seed": self.seed, "page_origin": self.page_origin, "events": events}

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        events = []
        for item in raw.get("events", []):
            item = dict(item)
            item["kind"] = EventKind(item["kind"])
            item["redirects"] = tuple(item.get("redirects", ()))
            events.append(ScenarioEvent(**item))
        return cls(raw["seed"], raw["page_origin"], events)


def tile_scenario(scenario: Scenario, copies: int) -> Scenario:
    """Repeat a scenario's events, remapping entity handles per copy.

    Handles are event indexes, so copy k's events shift every non-sentinel
    handle by k * len(events); the result plays out as that many
    independent casts sharing one page.
    """
    base = len(scenario.events)
    events: list[ScenarioEvent] = []
    for copy in range(copies):
        offset = copy * base
        for event in scenario.events:
            clone = ScenarioEvent(**asdict(event))
            clone.redirects = tuple(event.redirects)
            if clone.actor >= 0:
                clone.actor += offset
            if clone.element >= 0:
                clone.element += offset
            if clone.document >= 0:
                clone.document += offset
            events.append(clone)
    return Scenario(scenario.seed, scenario.page_origin, events)


# --- random scenario generation ----------------------------------------------

_GENERIC_TAGS = ("div", "a", "span", "button", "p", "ul", "input")
_REQUEST_TAGS = ("img", "link")
_EVENT_KEYS = ("click", "load", "scroll", "mouseover", "submit", "touchstart")

_GENERIC_APIS = (
    "Window.setTimeout",
    "Document.createElement",
    "Node.appendChild",
    "JSON.parse",
    "History.pushState",
    "Navigator.userAgent",
    "CanvasRenderingContext2D.fillText",
)
_CSSOM_APIS = (
    "Window.scrollTo",
    "Window.getComputedStyle",
    "Element.getBoundingClientRect",
    "Element.scrollIntoView",
    "Window.matchMedia",
)
_MESSAGING_APIS = (
    "MessageChannel",
    "MessagePort.postMessage",
    "MessagePort.start",
    "Window.postMessage",
)
_API_POOL = _GENERIC_APIS + _CSSOM_APIS + _MESSAGING_APIS

_TP_SCRIPTS = (
    "https://js.quanttrack.io/collect.js",
    "https://cdn.webstatic-cdn.net/lib/ui.min.js",
    "https://api.widgetery.app/embed/loader.js",
)
_TP_IMAGES = (
    "https://img.pixel-metrics.com/p.gif",
    "https://static.adnethub.com/banner42.png",
    "https://img.pixel-metrics.com/track.gif",
)
_TP_FONTS = ("https://fonts.typeserve.org/face/inter.woff2",)
_EMBED_DOCS = (
    "https://widgets.embedparty.com/frame/chat.html",
    "https://widgets.embedparty.com/frame/video.html",
)
_FP_SCRIPTS = ("/js/app.js", "/js/vendor.js", "/js/widgets.js")
_FP_ASSETS = ("/img/logo.png", "/img/hero.jpg", "/css/site.css", "/api/data")


def generate_scenario(seed: int, size: int, races: int | None = None) -> Scenario:
    """A random but causally valid scenario of about ``size`` events.

    ``races`` appends that many capture races after the normal events
    (None picks 0 most of the time, occasionally 1, from the seed).
    """
    if size < 4:
        raise ValueError("size must be at least 4")
    lcg = Lcg64(seed)
    page_origin = f"https://www.site{seed:04d}.com"
    events: list[ScenarioEvent] = []
    scripts: list[int] = []
    elements: list[tuple[int, str, int]] = []  # handle, tag, document handle
    documents: list[int] = [ROOT_DOCUMENT]
    embeds = 0

    def here(doc_pool) -> int:
        return doc_pool[lcg.below(len(doc_pool))]

    def add(event: ScenarioEvent) -> int:
        events.append(event)
        return len(events) - 1

    # Fixed preamble so every pool is populated.
    handle = add(ScenarioEvent(EventKind.PARSER_CREATES_ELEMENT, tag="div"))
    elements.append((handle, "div", ROOT_DOCUMENT))
    handle = add(ScenarioEvent(EventKind.SCRIPT_LOADED, actor=PARSER, url=""))
    scripts.append(handle)
    handle = add(
        ScenarioEvent(
            EventKind.SCRIPT_LOADED,
            actor=PARSER,
            url=page_origin + lcg.choice(_FP_SCRIPTS),
        )
    )
    scripts.append(handle)
    handle = add(ScenarioEvent(EventKind.PARSER_CREATES_ELEMENT, tag="img"))
    elements.append((handle, "img", ROOT_DOCUMENT))

    while len(events) < size:
        roll = lcg.below(17)
        if roll < 3:
            tag = lcg.choice(_GENERIC_TAGS + _REQUEST_TAGS)
            doc = here(documents)
            handle = add(ScenarioEvent(EventKind.PARSER_CREATES_ELEMENT, tag=tag, document=doc))
            elements.append((handle, tag, doc))
        elif roll < 5:
            kind = lcg.below(5)
            doc = here(documents)
            if kind == 0:
                url = ""
                actor = PARSER
            elif kind in (1, 2):
                url = page_origin + lcg.choice(_FP_SCRIPTS)
                actor = PARSER
            elif kind == 3:
                url = lcg.choice(_TP_SCRIPTS)
                actor = PARSER
            else:
                url = lcg.choice(_TP_SCRIPTS + (page_origin + "/js/lazy.js",))
                actor = lcg.choice(scripts)
            handle = add(ScenarioEvent(EventKind.SCRIPT_LOADED, actor=actor, url=url, document=doc))
            scripts.append(handle)
        elif roll < 8:
            add(
                ScenarioEvent(
                    EventKind.SCRIPT_CALLS_API,
                    actor=lcg.choice(scripts),
                    api=lcg.choice(_API_POOL),
                )
            )
        elif roll < 10:
            target, _, _ = lcg.choice(elements)
            inline = lcg.below(3) == 0
            add(
                ScenarioEvent(
                    EventKind.SCRIPT_ADDS_LISTENER,
                    actor=PARSER if (inline and lcg.below(2) == 0) else lcg.choice(scripts),
                    element=target,
                    event_key=lcg.choice(_EVENT_KEYS),
                    inline=inline,
                )
            )
        elif roll < 12:
            tag = lcg.choice(_GENERIC_TAGS + _REQUEST_TAGS)
            doc = here(documents)
            handle = add(
                ScenarioEvent(
                    EventKind.SCRIPT_CREATES_ELEMENT,
                    actor=lcg.choice(scripts),
                    tag=tag,
                    document=doc,
                )
            )
            elements.append((handle, tag, doc))
        elif roll < 14:
            fetchable = [e for e in elements if e[1] in _REQUEST_TAGS]
            if not fetchable:
                continue
            handle, tag, _ = lcg.choice(fetchable)
            if tag == "img":
                url = lcg.choice(_TP_IMAGES + (page_origin + "/img/logo.png",))
                resource = "image"
            else:
                url = lcg.choice(_TP_FONTS + (page_origin + "/css/site.css",))
                resource = "style"
            redirects: tuple[str, ...] = ()
            if tag == "img" and lcg.below(4) == 0:
                redirects = ("https://static.adnethub.com/beacon.gif",)
            add(
                ScenarioEvent(
                    EventKind.ELEMENT_REQUESTS,
                    actor=handle,
                    url=url,
                    status=lcg.choice((200, 200, 200, 204, 404)),
                    resource_type=resource,
                    redirects=redirects,
                )
            )
        elif roll < 16:
            verb = lcg.choice(("Window.fetch", "XMLHttpRequest.send"))
            add(
                ScenarioEvent(
                    EventKind.FETCH_REQUEST,
                    actor=lcg.choice(scripts),
                    url=lcg.choice(
                        (
                            page_origin + "/api/data",
                            page_origin + "/api/events",
                            "https://api.widgetery.app/v2/widgets",
                        )
                    ),
                    method=lcg.choice(("GET", "GET", "POST")),
                    api=verb,
                    resource_type="fetch",
                )
            )
        else:
            if embeds >= 2:
                continue
            embeds += 1
            handle = add(
                ScenarioEvent(
                    EventKind.DOCUMENT_EMBEDDED,
                    actor=PARSER if lcg.below(2) == 0 else lcg.choice(scripts),
                    url=_EMBED_DOCS[embeds - 1],
                )
            )
            documents.append(handle)

    if races is None:
        races = 1 if lcg.below(10) == 0 else 0
    for n in range(races):
        events.append(
            ScenarioEvent(
                EventKind.INJECT_RACE,
                url=f"{page_origin}/late/race{n}.bin",
                har_side=(n % 2 == 1),
            )
        )
    return Scenario(seed, page_origin, events)


# --- building a bundle -------------------------------------------------------


def _png_1x1() -> bytes:
    def chunk(kind: bytes, data: bytes) -> bytes:
        return (
            struct.pack(">I", len(data))
            + kind
            + data
            + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF)
        )

    header = struct.pack(">IIBBBBB", 1, 1, 8, 6, 0, 0, 0)
    body = zlib.compress(b"\x00\x00\x00\x00\x00")
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header) + chunk(b"IDAT", body) + chunk(b"IEND", b"")


SCREENSHOT = _png_1x1()

_BASE_TIME = datetime(2026, 3, 1, 12, 0, 0, tzinfo=timezone.utc)
_BASE_MS = int(_BASE_TIME.timestamp() * 1000)

_DEST_BY_RESOURCE = {
    "image": "image",
    "script": "script",
    "style": "style",
    "font": "font",
    "fetch": "empty",
    "document": "document",
}
_MIME_BY_RESOURCE = {
    "image": "image/png",
    "script": "application/javascript",
    "style": "text/css",
    "font": "font/woff2",
    "fetch": "application/json",
    "document": "text/html",
}


def _static_rd(host: str) -> str:
    # Generator convention: every synthetic host has a two-label
    # registrable domain, so ground truth needs no suffix rules.
    return ".".join(host.split(".")[-2:])


def _host(url: str) -> str:
    rest = url.split("://", 1)[1] if "://" in url else url
    return rest.split("/", 1)[0].lower()


class _Builder:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.page_origin = scenario.page_origin
        self.page_rd = _static_rd(_host(scenario.page_origin))
        self.nodes: list[GraphNode] = []
        self.edges: list[GraphEdge] = []
        self.order = 0
        self.next_request = 1
        self.next_listener = 1
        self.har_entries: list[dict] = []
        self.externs: dict[str, int] = {}
        # handle -> ("script"|"element"|"document", node id, party label, info)
        self.handles: dict[int, tuple[str, int, str, dict]] = {}
        self.ledger: dict = {
            "page_origin": self.page_origin,
            "edge_type_counts": {},
            "chains": {},
            "api_appearances": [],
            "handlers": [],
            "har_verdict_counts": {},
            "races": {"graph_only": 0, "har_only": 0},
            "third_party_domains": set(),
        }

        self.parser = self._node(NodeType.PARSER)
        self.root_doc = self._node(NodeType.DOCUMENT, url=self.page_origin + "/")

    # -- low-level emitters --

    def _node(self, node_type: NodeType, **fields) -> int:
        node = GraphNode(id=len(self.nodes), node_type=node_type, **fields)
        self.nodes.append(node)
        return node.id

    def _edge(self, edge_type: EdgeType, source: int, target: int, **fields) -> GraphEdge:
        self.order += 1
        edge = GraphEdge(
            id=len(self.edges),
            edge_type=edge_type,
            source=source,
            target=target,
            order=self.order,
            timestamp=_BASE_MS + self.order * 10,
            **fields,
        )
        self.edges.append(edge)
        counts = self.ledger["edge_type_counts"]
        counts[edge_type.value] = counts.get(edge_type.value, 0) + 1
        return edge

    def _extern(self, name: str) -> int:
        if name not in self.externs:
            self.externs[name] = self._node(NodeType.EXTERN, attributes={"builtin": name})
        return self.externs[name]

    def _note_third_party(self, url: str) -> None:
        host = _host(url)
        if "." not in host:
            return
        domain = _static_rd(host)
        if domain != self.page_rd:
            self.ledger["third_party_domains"].add(domain)

    def _har_entry(
        self,
        url: str,
        method: str,
        status: int,
        at_ms: int,
        dest: str | None = None,
        request_headers: list[tuple[str, str]] | None = None,
        response_headers: list[tuple[str, str]] | None = None,
        mime: str = "application/octet-stream",
        size: int = 512,
    ) -> dict:
        req_headers = [{"name": "Accept", "value": "*/*"}]
        if dest:
            req_headers.append({"name": "Sec-Fetch-Dest", "value": dest})
        for name, value in request_headers or ():
            req_headers.append({"name": name, "value": value})
        resp_headers = [{"name": "Content-Type", "value": mime}]
        for name, value in response_headers or ():
            resp_headers.append({"name": name, "value": value})
        entry = {
            "startedDateTime": format_rfc3339(
                datetime.fromtimestamp(at_ms / 1000, tz=timezone.utc)
            ),
            "time": 5,
            "request": {
                "method": method,
                "url": url,
                "httpVersion": "HTTP/2",
                "headers": req_headers,
                "queryString": [],
                "cookies": [],
                "headersSize": -1,
                "bodySize": 0,
            },
            "response": {
                "status": status,
                "statusText": "",
                "httpVersion": "HTTP/2",
                "headers": resp_headers,
                "cookies": [],
                "content": {"size": size, "mimeType": mime},
                "redirectURL": "",
                "headersSize": -1,
                "bodySize": size if status not in (0, 204) else 0,
            },
            "cache": {},
            "timings": {"send": 0, "wait": 3, "receive": 2},
        }
        self.har_entries.append(entry)
        return entry

    def _count_verdict(self, verdict: str) -> None:
        counts = self.ledger["har_verdict_counts"]
        counts[verdict] = counts.get(verdict, 0) + 1

    def _chain(
        self,
        source: int,
        url: str,
        method: str,
        status: int,
        resource_type: str,
        redirects: tuple[str, ...],
        context: str,
        detail: str | None,
        party: str,
        emit_har: bool = True,
    ) -> int:
        request_id = self.next_request
        self.next_request += 1
        resource = self._node(NodeType.RESOURCE, url=url)
        start = self._edge(
            EdgeType.REQUEST_START,
            source,
            resource,
            request_id=request_id,
            http_method=method,
            resource_type=resource_type or None,
        )
        self._note_third_party(url)
        urls = [url]
        current = resource
        for hop in redirects:
            nxt = self._node(NodeType.RESOURCE, url=hop)
            self._edge(
                EdgeType.REQUEST_REDIRECT,
                current,
                nxt,
                request_id=request_id,
                status=302,
            )
            self._note_third_party(hop)
            urls.append(hop)
            current = nxt
        if status == 0:
            self._edge(EdgeType.REQUEST_ERROR, current, source, request_id=request_id)
        else:
            self._edge(
                EdgeType.REQUEST_COMPLETE, current, source, request_id=request_id, status=status
            )
        self.ledger["chains"][str(request_id)] = {
            "urls": urls,
            "status": status,
            "context": context,
            "detail": detail,
            "party": party,
            "method": method,
        }
        if emit_har:
            dest = _DEST_BY_RESOURCE.get(resource_type, "empty")
            self._har_entry(
                url,
                method,
                status,
                _BASE_MS + start.order * 10,
                dest=dest,
                mime=_MIME_BY_RESOURCE.get(resource_type, "application/octet-stream"),
                size=256 + (request_id * 37) % 4096,
            )
            self._count_verdict("page-context")
        return request_id

    # -- handle helpers --

    def _resolve(self, handle: int, index: int, kinds: tuple[str, ...]) -> tuple[str, int, str, dict]:
        if handle == PARSER and "parser" in kinds:
            return ("parser", self.parser, "first-party", {})
        if handle == ROOT_DOCUMENT and "document" in kinds:
            return ("document", self.root_doc, "first-party", {"origin": self.page_origin})
        if handle < 0 or handle >= index:
            raise ScenarioError(index, f"handle {handle} does not exist yet")
        info = self.handles.get(handle)
        if info is None:
            raise ScenarioError(index, f"event {handle} created no entity")
        if info[0] not in kinds:
            raise ScenarioError(index, f"event {handle} made a {info[0]}, wanted {'/'.join(kinds)}")
        return info

    def _document_origin(self, handle: int, index: int) -> tuple[int, str]:
        _, node, _, info = self._resolve(handle, index, ("document",))
        return node, info["origin"]

    # -- event processing --

    def run(self) -> tuple[Bundle, dict]:
        self.ledger["chains"][f"doc:{self.root_doc}"] = {
            "urls": [self.page_origin + "/"],
            "status": 200,
            "context": "other",
            "detail": "document",
            "party": "first-party",
            "method": "GET",
        }
        # The landing fetch itself.
        self._har_entry(
            self.page_origin + "/",
            "GET",
            200,
            _BASE_MS,
            dest="document",
            mime="text/html",
            size=18043,
        )
        self._count_verdict("page-context")

        for index, event in enumerate(self.scenario.events):
            handler = getattr(self, "_do_" + event.kind.name.lower(), None)
            if handler is None:  # pragma: no cover - enum is closed
                raise ScenarioError(index, f"unhandled kind {event.kind}")
            handler(index, event)

        self._emit_noise()

        graph = ExecutionGraph(self.nodes, self.edges)
        manifest = Manifest(
            page_origin=self.page_origin,
            final_url=self.page_origin + "/",
            captured_at=_BASE_TIME,
            captured_raw=format_rfc3339(_BASE_TIME),
            extra={"generator": "synthetic"},
        )
        log = {
            "version": "1.2",
            "creator": {"name": "webbundle-synth", "version": "0.1"},
            "entries": self.har_entries,
        }
        har = HarArchive.from_log(log)
        bundle = Bundle(manifest, har, graph, SCREENSHOT)

        ledger = self.ledger
        ledger["third_party_domains"] = sorted(ledger["third_party_domains"])
        ledger["api_appearances"] = sorted(ledger["api_appearances"])
        ledger["node_count"] = len(self.nodes)
        ledger["edge_count"] = len(self.edges)
        ledger["chain_count"] = self.next_request - 1
        ledger["har_total_entries"] = len(self.har_entries)
        ledger["har_page_context"] = ledger["har_verdict_counts"].get("page-context", 0)
        ledger["inline_same_origin_count"] = sum(
            1
            for h in ledger["handlers"]
            if h["classification"] == "inline" and not h["cross_origin"]
        )
        return bundle, ledger

    def _new_element(self, index: int, event: ScenarioEvent, creator_handle: int) -> None:
        _, creator_node, creator_party, _ = self._resolve(
            creator_handle, index, ("parser", "script")
        )
        doc_node, doc_origin = self._document_origin(event.document, index)
        tag = event.tag or "div"
        element = self._node(NodeType.HTML_ELEMENT, tag_name=tag)
        self._edge(EdgeType.CREATE_NODE, creator_node, element)
        self._edge(EdgeType.STRUCTURE, doc_node, element)
        self.handles[index] = (
            "element",
            element,
            creator_party,
            {"tag": tag, "origin": doc_origin, "document": event.document},
        )

    def _do_parser_creates_element(self, index: int, event: ScenarioEvent) -> None:
        self._new_element(index, event, PARSER)

    def _do_script_creates_element(self, index: int, event: ScenarioEvent) -> None:
        self._resolve(event.actor, index, ("script",))
        self._new_element(index, event, event.actor)

    def _do_script_loaded(self, index: int, event: ScenarioEvent) -> None:
        kind, actor_node, actor_party, _ = self._resolve(event.actor, index, ("parser", "script"))
        doc_node, doc_origin = self._document_origin(event.document, index)
        element = self._node(NodeType.HTML_ELEMENT, tag_name="script")
        self._edge(EdgeType.CREATE_NODE, actor_node, element)
        self._edge(EdgeType.STRUCTURE, doc_node, element)

        if event.url:
            host = _host(event.url)
            rd = _static_rd(host)
            script_party = "first-party" if rd == self.page_rd else rd
            if kind == "parser":
                # The preload scanner fetches markup scripts itself.
                self._chain(
                    self.parser,
                    event.url,
                    "GET",
                    200,
                    "script",
                    (),
                    context="parser",
                    detail=None,
                    party="first-party",
                )
            else:
                self._chain(
                    element,
                    event.url,
                    "GET",
                    200,
                    "script",
                    (),
                    context="script-element",
                    detail=None,
                    party=actor_party,
                )
            script = self._node(
                NodeType.SCRIPT, url=event.url, script_type=ScriptType.CLASSIC
            )
        else:
            script_party = actor_party if kind == "script" else "first-party"
            script = self._node(NodeType.SCRIPT, script_type=ScriptType.CLASSIC)
        self._edge(EdgeType.EXECUTE, element, script)
        self.handles[index] = (
            "script",
            script,
            script_party,
            {"url": event.url, "origin": doc_origin},
        )

    def _do_script_calls_api(self, index: int, event: ScenarioEvent) -> None:
        _, script_node, _, info = self._resolve(event.actor, index, ("script",))
        api = event.api or "Window.setTimeout"
        target = self._extern(api)
        self._edge(EdgeType.JS_CALL, script_node, target, method_name=api, args="")
        identity = info["url"] or f"script:{script_node}"
        pair = [api, identity]
        if pair not in self.ledger["api_appearances"]:
            self.ledger["api_appearances"].append(pair)

    def _do_script_adds_listener(self, index: int, event: ScenarioEvent) -> None:
        adder_kind, adder_node, _, _ = self._resolve(event.actor, index, ("parser", "script"))
        _, element_node, _, el_info = self._resolve(event.element, index, ("element",))
        listener_id = self.next_listener
        self.next_listener += 1
        key = event.event_key or "click"

        if event.inline:
            # A markup on-attribute: the handler body lands in a throwaway
            # script of unknown provenance.
            self._edge(
                EdgeType.SET_ATTRIBUTE,
                adder_node,
                element_node,
                key="on" + key,
                args="handler()",
            )
            listener_script = self._node(NodeType.SCRIPT, script_type=ScriptType.UNKNOWN)
            classification = "inline"
        else:
            listener_script = self._resolve(event.actor, index, ("script",))[1]
            classification = "programmatic"

        self._edge(
            EdgeType.ADD_EVENT_LISTENER,
            adder_node,
            element_node,
            key=key,
            listener_id=listener_id,
        )
        self._edge(
            EdgeType.EVENT_LISTENER,
            element_node,
            listener_script,
            key=key,
            listener_id=listener_id,
        )
        cross_origin = el_info["origin"] != self.page_origin
        self.ledger["handlers"].append(
            {
                "listener_id": listener_id,
                "event": key,
                "classification": classification,
                "cross_origin": cross_origin,
                "adder_is_parser": adder_kind == "parser",
            }
        )

    def _do_element_requests(self, index: int, event: ScenarioEvent) -> None:
        _, element_node, party, info = self._resolve(event.actor, index, ("element",))
        tag = info["tag"]
        if tag == "img":
            context, detail = "img-element", None
        elif tag == "script":
            context, detail = "script-element", None
        else:
            context, detail = "other", tag
        self._chain(
            element_node,
            event.url,
            event.method or "GET",
            event.status,
            event.resource_type or "image",
            tuple(event.redirects),
            context=context,
            detail=detail,
            party=party,
        )

    def _do_fetch_request(self, index: int, event: ScenarioEvent) -> None:
        _, script_node, party, info = self._resolve(event.actor, index, ("script",))
        api = event.api or "Window.fetch"
        target = self._extern(api)
        self._edge(EdgeType.JS_CALL, script_node, target, method_name=api, args=event.url)
        identity = info["url"] or f"script:{script_node}"
        pair = [api, identity]
        if pair not in self.ledger["api_appearances"]:
            self.ledger["api_appearances"].append(pair)
        self._chain(
            script_node,
            event.url,
            event.method or "GET",
            event.status,
            event.resource_type or "fetch",
            tuple(event.redirects),
            context="fetch-xhr",
            detail=None,
            party=party,
        )

    def _do_document_embedded(self, index: int, event: ScenarioEvent) -> None:
        _, creator_node, creator_party, _ = self._resolve(
            event.actor, index, ("parser", "script")
        )
        frame = self._node(NodeType.HTML_ELEMENT, tag_name="iframe")
        self._edge(EdgeType.CREATE_NODE, creator_node, frame)
        self._edge(EdgeType.STRUCTURE, self.root_doc, frame)
        document = self._node(NodeType.DOCUMENT, url=event.url, frame_id=f"F{index}")
        edge = self._edge(EdgeType.STRUCTURE, frame, document)
        self._note_third_party(event.url)
        origin = event.url.split("/", 3)
        origin = origin[0] + "//" + origin[2] if len(origin) >= 3 else self.page_origin
        self.handles[index] = ("document", document, creator_party, {"origin": origin})
        self.ledger["chains"][f"doc:{document}"] = {
            "urls": [event.url],
            "status": 200,
            "context": "other",
            "detail": "iframe",
            "party": creator_party,
            "method": "GET",
        }
        self._har_entry(
            event.url,
            "GET",
            200,
            _BASE_MS + edge.order * 10,
            dest="document",
            mime="text/html",
            size=4096,
        )
        self._count_verdict("page-context")

    def _do_inject_race(self, index: int, event: ScenarioEvent) -> None:
        if event.har_side:
            # The network saw it; the capture of the graph had ended.
            self._har_entry(
                event.url,
                "GET",
                200,
                _BASE_MS + (self.order + 500) * 10,
                dest="empty",
                mime="application/octet-stream",
                size=64,
            )
            self._count_verdict("page-context")
            self.ledger["races"]["har_only"] += 1
        else:
            # The graph saw it; the proxy had already flushed its log.
            self._chain(
                self.parser,
                event.url,
                "GET",
                200,
                "image",
                (),
                context="parser",
                detail=None,
                party="first-party",
                emit_har=False,
            )
            self.ledger["races"]["graph_only"] += 1

    # -- excluded-category HAR noise --

    def _emit_noise(self) -> None:
        lcg = Lcg64(self.scenario.seed * 11400714819323198485 + len(self.page_origin))
        host = _host(self.page_origin)
        tail = _BASE_MS + 9_000_000
        slot = 0

        if lcg.below(2) == 1:
            self._har_entry(
                f"http://{host}/",
                "GET",
                301,
                _BASE_MS - 1500,
                dest="document",
                response_headers=[("Location", self.page_origin + "/")],
                mime="text/html",
                size=0,
            )
            self._count_verdict("initial-document-redirect")

        def later() -> int:
            nonlocal slot
            slot += 1
            return tail + slot * 1000

        for _ in range(lcg.below(3)):
            self._har_entry(
                "https://api.widgetery.app/embed/data",
                "OPTIONS",
                204,
                later(),
                request_headers=[
                    ("Access-Control-Request-Method", "POST"),
                    ("Origin", self.page_origin),
                ],
            )
            self._count_verdict("preflight")
        for _ in range(lcg.below(3)):
            self._har_entry(
                self.page_origin + "/csp-report",
                "POST",
                204,
                later(),
                dest="report",
            )
            self._count_verdict("csp-report")
        for _ in range(lcg.below(2)):
            self._har_entry(
                "wss://live.chatrelay.net/socket",
                "GET",
                101,
                later(),
                request_headers=[("Upgrade", "websocket"), ("Connection", "Upgrade")],
            )
            self._count_verdict("websocket-upgrade")
        for _ in range(lcg.below(2)):
            self._har_entry(
                "chrome-extension://gighmmpiobklfepjocnamgkkbiglidom/content.js",
                "GET",
                200,
                later(),
                mime="application/javascript",
            )
            self._count_verdict("browser-internal")
        for _ in range(lcg.below(2)):
            self._har_entry(
                self.page_origin + "/sw.js",
                "GET",
                200,
                later(),
                dest="serviceworker",
                mime="application/javascript",
            )
            self._count_verdict("service-worker")


def scenario_to_bundle(scenario: Scenario) -> tuple[Bundle, dict]:
    """Build the bundle a scenario describes, plus its ground-truth ledger.

    The graph and the HAR agree on every request except injected races,
    which exist on exactly one side each.  Raises ScenarioError when an
    event references an entity that does not exist yet (or the wrong kind
    of entity).
    """
    return _Builder(scenario).run()
