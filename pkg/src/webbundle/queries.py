"""Analyses over bundles: API appearances, event-handler provenance,
request attribution, HAR/graph reconciliation, third-party prevalence.

Corpus-level functions take an iterable of bundles and hold only the one
being processed, so a generator over a large corpus streams in constant
memory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .bundle import Bundle
from .errors import ProvenanceError
from .graph import EdgeType, ExecutionGraph, NodeType, RequestChain, ScriptType
from .harfilter import filter_page_context
from .trackers import FilterEngine, PublicSuffixData, default_suffix_data
from .utils import host_of, normalize_url_for_match, origin_of

log = logging.getLogger("webbundle.queries")

_DATA_DIR = Path(__file__).parent / "data"
_FEATURE_FILES = {
    "cssom-view": "apis_cssom_view.txt",
    "channel-messaging": "apis_channel_messaging.txt",
}


def load_api_names(feature_or_path: str | Path) -> frozenset[str]:
    """API names for a bundled feature list ('cssom-view',
    'channel-messaging') or from a file of one name per line."""
    name = str(feature_or_path)
    if name in _FEATURE_FILES:
        path = _DATA_DIR / _FEATURE_FILES[name]
    else:
        path = Path(feature_or_path)
    names = []
    for line in path.read_text("utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            names.append(line)
    return frozenset(names)


# --- API appearances ---------------------------------------------------------


@dataclass
class AppearanceSet:
    """Which (api, script) pairs appear in a graph, with call counts.

    A script is identified by its source URL when it has one, otherwise by
    a stable in-graph identity — two captures of the same page compare by
    URL, inline scripts only within one capture.
    """

    counts: dict[tuple[str, str], int] = field(default_factory=dict)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "AppearanceSet":
        counts: dict[tuple[str, str], int] = {}
        for api, script in pairs:
            counts[(api, script)] = counts.get((api, script), 0) + 1
        return cls(counts)

    @property
    def pairs(self) -> set[tuple[str, str]]:
        return set(self.counts)

    def total_calls(self) -> int:
        return sum(self.counts.values())

    def __len__(self) -> int:
        return len(self.counts)


def script_identity(graph: ExecutionGraph, node_id: int) -> str:
    node = graph.node(node_id)
    if node.url:
        return node.url
    return f"script:{node_id}"


def find_api_appearances(
    graph: ExecutionGraph, api_names: Iterable[str] | None = None
) -> AppearanceSet:
    """Collect (api, script) pairs from js call edges.

    With ``api_names`` only those methods count; otherwise every call
    counts under its recorded method name.
    """
    wanted = frozenset(api_names) if api_names is not None else None
    counts: dict[tuple[str, str], int] = {}
    for edge in graph.edges_by_type(EdgeType.JS_CALL):
        method = edge.method_name or ""
        if wanted is not None and method not in wanted:
            continue
        source = graph.node(edge.source)
        if source.node_type is not NodeType.SCRIPT:
            continue
        pair = (method, script_identity(graph, source.id))
        counts[pair] = counts.get(pair, 0) + 1
    return AppearanceSet(counts)


@dataclass
class AppearanceDiff:
    both: list[tuple[str, str]]
    left_only: list[tuple[str, str]]
    right_only: list[tuple[str, str]]

    @property
    def summary(self) -> dict[str, int]:
        return {
            "both": len(self.both),
            "left_only": len(self.left_only),
            "right_only": len(self.right_only),
            "left_total": len(self.both) + len(self.left_only),
            "right_total": len(self.both) + len(self.right_only),
        }


def compare_appearances(left: AppearanceSet, right: AppearanceSet) -> AppearanceDiff:
    """Partition two appearance sets into shared and one-sided pairs.

    The summary counts always satisfy both + left_only == left_total and
    both + right_only == right_total.
    """
    left_pairs = left.pairs
    right_pairs = right.pairs
    return AppearanceDiff(
        both=sorted(left_pairs & right_pairs),
        left_only=sorted(left_pairs - right_pairs),
        right_only=sorted(right_pairs - left_pairs),
    )


# --- event-handler provenance ------------------------------------------------

INLINE = "inline"
PROGRAMMATIC = "programmatic"


@dataclass
class HandlerFinding:
    listener_id: int
    event: str | None
    element: int
    element_tag: str | None
    adder: int
    adder_is_parser: bool
    listener_script: int
    script_type: str | None
    classification: str
    cross_origin: bool
    document_url: str | None


def _containing_document(graph: ExecutionGraph, node_id: int):
    seen = set()
    current = node_id
    while current not in seen:
        seen.add(current)
        node = graph.node(current)
        if node.node_type is NodeType.DOCUMENT:
            return node
        parents = graph.in_edges(current, EdgeType.STRUCTURE)
        if not parents:
            return None
        current = parents[0].source
    return None


def classify_event_handlers(graph: ExecutionGraph, page_origin: str) -> list[HandlerFinding]:
    """One finding per registered listener, split inline vs programmatic.

    A listener is programmatic when the actor that added it is the same
    script the listener body lives in, or when that script has a known
    script type; the remaining case — a listener whose body lives in a
    script of unknown provenance added by someone else — is how a markup
    on-attribute handler materializes, and is classified inline.

    cross_origin marks listeners on nodes whose containing document's
    origin differs from the page origin (embedded frames).
    """
    registrations = {}
    for edge in graph.edges_by_type(EdgeType.ADD_EVENT_LISTENER):
        if edge.listener_id is not None and edge.listener_id not in registrations:
            registrations[edge.listener_id] = edge

    findings: list[HandlerFinding] = []
    seen: set[int] = set()
    for edge in graph.edges_by_type(EdgeType.EVENT_LISTENER):
        listener_id = edge.listener_id
        if listener_id is None or listener_id in seen:
            continue
        seen.add(listener_id)
        registration = registrations.get(listener_id)
        if registration is None:
            raise ProvenanceError(edge.id)
        adder = graph.node(registration.source)
        element = graph.node(registration.target)
        listener_script = graph.node(edge.target)

        script_type = listener_script.script_type
        programmatic = (
            adder.id == listener_script.id
            or (script_type is not None and script_type is not ScriptType.UNKNOWN)
        )

        document = _containing_document(graph, element.id)
        document_url = document.url if document is not None else None
        if document_url:
            cross_origin = origin_of(document_url) != page_origin
        else:
            cross_origin = False

        findings.append(
            HandlerFinding(
                listener_id=listener_id,
                event=registration.key,
                element=element.id,
                element_tag=element.tag_name,
                adder=adder.id,
                adder_is_parser=adder.node_type is NodeType.PARSER,
                listener_script=listener_script.id,
                script_type=script_type.value if script_type else None,
                classification=PROGRAMMATIC if programmatic else INLINE,
                cross_origin=cross_origin,
                document_url=document_url,
            )
        )
    findings.sort(key=lambda f: f.listener_id)
    return findings


@dataclass
class InlineOriginSummary:
    origins_total: int
    origins_with_inline: int
    inline_counts: dict[str, int]  # page origin -> same-origin inline findings


def count_inline_origins(bundles: Iterable[Bundle]) -> InlineOriginSummary:
    """Corpus roll-up: how many origins carry at least one same-origin
    inline handler.  Cross-origin findings (embedded frames) don't count
    toward an origin."""
    total = 0
    with_inline = 0
    counts: dict[str, int] = {}
    for bundle in bundles:
        total += 1
        findings = classify_event_handlers(bundle.graph, bundle.page_origin)
        inline = sum(
            1
            for f in findings
            if f.classification == INLINE and not f.cross_origin
        )
        counts[bundle.page_origin] = counts.get(bundle.page_origin, 0) + inline
        if inline:
            with_inline += 1
    return InlineOriginSummary(total, with_inline, counts)


# --- request attribution -----------------------------------------------------


class RequestContext(Enum):
    SCRIPT_ELEMENT = "script-element"
    IMG_ELEMENT = "img-element"
    PARSER = "parser"
    FETCH_XHR = "fetch-xhr"
    OTHER = "other"


FIRST_PARTY = "first-party"

_FETCH_PREFIXES = ("Window.fetch", "XMLHttpRequest.")


@dataclass
class AttributedRequest:
    request_id: int | None
    urls: tuple[str, ...]
    http_method: str | None
    context: RequestContext
    context_detail: str | None
    responsible_party: str
    resource_type: str | None
    completed: bool
    final_status: int | None
    initiator: int | None


def _creator(graph: ExecutionGraph, node_id: int) -> int | None:
    for edge_type in (EdgeType.CREATE_NODE, EdgeType.EXECUTE, EdgeType.STRUCTURE):
        incoming = graph.in_edges(node_id, edge_type)
        if incoming:
            return incoming[0].source
    return None


def _responsible_party(
    graph: ExecutionGraph, start: int, page_rd: str, suffixes: PublicSuffixData
) -> str | None:
    """Nearest provenance script's registrable domain, or first-party when
    the chain ends at the parser.  None means the walk went nowhere."""
    seen: set[int] = set()
    current: int | None = start
    while current is not None and current not in seen:
        seen.add(current)
        node = graph.node(current)
        if node.node_type is NodeType.PARSER:
            return FIRST_PARTY
        if node.node_type is NodeType.SCRIPT and node.url:
            host = host_of(node.url)
            if host:
                party = suffixes.split(host).registrable_domain
                return FIRST_PARTY if party == page_rd else party
            # data:/blob: script; its origin is whoever created it
        current = _creator(graph, current)
    return None


def _context_of(graph: ExecutionGraph, chain: RequestChain) -> tuple[RequestContext, str | None]:
    source = graph.node(chain.start.source)
    if source.node_type is NodeType.PARSER:
        return RequestContext.PARSER, None
    if source.node_type is NodeType.HTML_ELEMENT:
        tag = (source.tag_name or "").lower()
        if tag == "script":
            return RequestContext.SCRIPT_ELEMENT, None
        if tag == "img":
            return RequestContext.IMG_ELEMENT, None
        return RequestContext.OTHER, tag or "element"
    if source.node_type is NodeType.SCRIPT:
        for call in graph.out_edges(source.id, EdgeType.JS_CALL):
            if call.method_name and call.method_name.startswith(_FETCH_PREFIXES):
                return RequestContext.FETCH_XHR, None
        return RequestContext.OTHER, "script"
    if source.node_type is NodeType.DOCUMENT:
        return RequestContext.OTHER, "document"
    return RequestContext.OTHER, source.node_type.value


def attribute_requests(
    graph: ExecutionGraph,
    page_origin: str,
    include_documents: bool = True,
    suffixes: PublicSuffixData | None = None,
) -> list[AttributedRequest]:
    """Context and responsible party for every request in the graph.

    Context comes from the topology at the start edge (which kind of node
    asked); the responsible party is the registrable domain of the nearest
    script in the initiator's provenance chain, first-party when that
    chain ends at the parser or resolves to the page's own domain.
    Request headers play no part in this.

    Documents are included as records too: the root document counts as a
    parser-fetched first-party document, an embedded one is attributed to
    whatever created its frame element.
    """
    suffixes = suffixes or default_suffix_data()
    page_host = host_of(page_origin)
    page_rd = suffixes.split(page_host).registrable_domain if page_host else ""

    records: list[AttributedRequest] = []
    for chain in graph.request_chains():
        context, detail = _context_of(graph, chain)
        party = _responsible_party(graph, chain.start.source, page_rd, suffixes)
        if party is None:
            log.warning(
                "request %d: provenance walk found no script or parser; "
                "attributing first-party",
                chain.request_id,
            )
            party = FIRST_PARTY
        records.append(
            AttributedRequest(
                request_id=chain.request_id,
                urls=chain.urls,
                http_method=chain.start.http_method or "GET",
                context=context,
                context_detail=detail,
                responsible_party=party,
                resource_type=chain.start.resource_type,
                completed=chain.completed,
                final_status=chain.final_status,
                initiator=chain.start.source,
            )
        )

    if include_documents:
        try:
            root = graph.root_document()
        except Exception:  # no unique root: documents reported as embedded
            root = None
        for document in graph.documents():
            if not document.url:
                continue
            is_root = root is not None and document.id == root.id
            if is_root:
                party = FIRST_PARTY
            else:
                parents = graph.in_edges(document.id, EdgeType.STRUCTURE)
                start = parents[0].source if parents else document.id
                party = _responsible_party(graph, start, page_rd, suffixes)
                if party is None:
                    log.warning(
                        "document n%d: provenance walk found no script or "
                        "parser; attributing first-party",
                        document.id,
                    )
                    party = FIRST_PARTY
            records.append(
                AttributedRequest(
                    request_id=None,
                    urls=(document.url,),
                    http_method="GET",
                    context=RequestContext.OTHER,
                    context_detail="document" if is_root else "iframe",
                    responsible_party=party,
                    resource_type="document",
                    completed=True,
                    final_status=None,
                    initiator=None,
                )
            )
    return records


def corpus_attribution(
    bundles: Iterable[Bundle], target_party: str
) -> tuple[list[tuple[str, int]], int]:
    """Per-origin counts of requests attributed to one responsible party.

    Returns ([(page_origin, count) sorted by origin], total).
    """
    counts: dict[str, int] = {}
    total = 0
    for bundle in bundles:
        records = attribute_requests(bundle.graph, bundle.page_origin)
        hits = sum(1 for r in records if r.responsible_party == target_party)
        counts[bundle.page_origin] = counts.get(bundle.page_origin, 0) + hits
        total += hits
    return sorted(counts.items()), total


# --- HAR vs graph reconciliation ---------------------------------------------


@dataclass
class RequestDiff:
    har_total: int
    graph_total: int
    matched_count: int
    har_only: list[int]  # indexes into the archive's entries
    graph_only: list[int]  # request ids
    graph_only_internal: list[int]  # request ids that ended with a 307
    graph_only_documents: list[int]  # document node ids

    @property
    def relative_difference(self) -> float:
        return abs(self.har_total - self.graph_total) / max(
            self.har_total, self.graph_total, 1
        )


@dataclass
class _GraphRecord:
    key: tuple
    urls: set[str]
    method: str
    matched: bool = False


def diff_requests(bundle: Bundle, internal_prefixes: tuple[str, ...] | None = None) -> RequestDiff:
    """Reconcile page-context HAR entries against graph request records.

    Matching is greedy and in-order on (normalized URL, method); a chain
    matches an entry if any of its hop URLs does.  Graph-only chains that
    ended with a 307 are reported separately — that status marks a
    redirect the network stack answered internally, which a page capture
    legitimately sees only on the graph side.
    """
    page = filter_page_context(bundle.har, internal_prefixes)

    records: list[_GraphRecord] = []
    for chain in bundle.graph.request_chains():
        urls = {normalize_url_for_match(u) for u in chain.urls if u}
        method = (chain.start.http_method or "GET").upper()
        records.append(_GraphRecord(("req", chain.request_id, chain.final_status), urls, method))
    for document in bundle.graph.documents():
        if not document.url:
            continue
        records.append(
            _GraphRecord(
                ("doc", document.id, None),
                {normalize_url_for_match(document.url)},
                "GET",
            )
        )

    har_only: list[int] = []
    matched = 0
    for har_index, entry in zip(page.kept_indexes, page.kept):
        url = normalize_url_for_match(entry.url)
        method = entry.method.upper()
        hit = next(
            (r for r in records if not r.matched and r.method == method and url in r.urls),
            None,
        )
        if hit is None:
            har_only.append(har_index)
        else:
            hit.matched = True
            matched += 1

    graph_only: list[int] = []
    graph_only_internal: list[int] = []
    graph_only_documents: list[int] = []
    for record in records:
        if record.matched:
            continue
        kind, ident, final_status = record.key
        if kind == "doc":
            graph_only_documents.append(ident)
        elif final_status == 307:
            graph_only_internal.append(ident)
        else:
            graph_only.append(ident)

    return RequestDiff(
        har_total=len(page.kept),
        graph_total=len(records),
        matched_count=matched,
        har_only=har_only,
        graph_only=sorted(graph_only),
        graph_only_internal=sorted(graph_only_internal),
        graph_only_documents=sorted(graph_only_documents),
    )


# --- third-party prevalence ---------------------------------------------------


@dataclass
class ThirdParty:
    domain: str
    first_party_count: int
    request_count: int
    tracker: bool


def third_party_prevalence(
    bundles: Iterable[Bundle],
    engine: FilterEngine | None = None,
    min_first_parties: int = 2,
    suffixes: PublicSuffixData | None = None,
) -> list[ThirdParty]:
    """Which third-party domains appear across the corpus, and where.

    A request is third-party when its host's registrable domain differs
    from the page's.  Every hop of every chain counts (a redirect into a
    tracker is a contact).  With a filter engine, a domain is marked a
    tracker if any of its URLs matches.  Domains seen on fewer than
    ``min_first_parties`` first parties are dropped.
    """
    suffixes = suffixes or default_suffix_data()
    first_parties: dict[str, set[str]] = {}
    request_counts: dict[str, int] = {}
    tracker_flags: dict[str, bool] = {}

    for bundle in bundles:
        page_origin = bundle.page_origin
        page_host = host_of(page_origin)
        page_rd = suffixes.split(page_host).registrable_domain if page_host else ""
        urls: list[str] = []
        for chain in bundle.graph.request_chains():
            urls.extend(u for u in chain.urls if u)
        for document in bundle.graph.documents():
            if document.url:
                urls.append(document.url)
        for url in urls:
            host = host_of(url)
            if not host:
                continue
            domain = suffixes.split(host).registrable_domain
            if domain == page_rd:
                continue
            first_parties.setdefault(domain, set()).add(page_rd or page_origin)
            request_counts[domain] = request_counts.get(domain, 0) + 1
            if engine is not None and not tracker_flags.get(domain):
                tracker_flags[domain] = engine.match(url, page_origin).blocked

    report = [
        ThirdParty(
            domain=domain,
            first_party_count=len(sites),
            request_count=request_counts[domain],
            tracker=tracker_flags.get(domain, False),
        )
        for domain, sites in first_parties.items()
        if len(sites) >= min_first_parties
    ]
    report.sort(key=lambda t: (-t.first_party_count, t.domain))
    return report
