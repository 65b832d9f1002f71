import logging
import random

import pytest

from webbundle.bundle import Bundle, Manifest
from webbundle.errors import ProvenanceError
from webbundle.graph import (
    EdgeType,
    ExecutionGraph,
    GraphEdge,
    GraphNode,
    NodeType,
    ScriptType,
)
from webbundle.har import HarArchive
from webbundle.queries import (
    FIRST_PARTY,
    INLINE,
    PROGRAMMATIC,
    AppearanceSet,
    RequestContext,
    attribute_requests,
    classify_event_handlers,
    compare_appearances,
    corpus_attribution,
    count_inline_origins,
    diff_requests,
    find_api_appearances,
    load_api_names,
    script_identity,
    third_party_prevalence,
)
from webbundle.synth import SCREENSHOT
from webbundle.trackers import FilterEngine, parse_filter_list

from oracles import naive_join

ORIGIN = "https://site.example"


class GraphBuilder:
    """Incremental graph assembly so tests read as topology descriptions."""

    def __init__(self, origin=ORIGIN):
        self.nodes = [
            GraphNode(0, NodeType.PARSER),
            GraphNode(1, NodeType.DOCUMENT, url=origin + "/"),
        ]
        self.edges = []
        self._order = 0

    def node(self, node_type, **kw):
        node = GraphNode(len(self.nodes), node_type, **kw)
        self.nodes.append(node)
        return node.id

    def edge(self, edge_type, source, target, **kw):
        self._order += 1
        edge = GraphEdge(
            len(self.edges), edge_type, source, target, order=self._order, **kw
        )
        self.edges.append(edge)
        return edge.id

    def element(self, tag, parent=1, creator=0):
        nid = self.node(NodeType.HTML_ELEMENT, tag_name=tag)
        self.edge(EdgeType.CREATE_NODE, creator, nid)
        self.edge(EdgeType.STRUCTURE, parent, nid)
        return nid

    def script(self, url=None, script_type=ScriptType.CLASSIC, executor=None):
        nid = self.node(NodeType.SCRIPT, url=url, script_type=script_type)
        if executor is not None:
            self.edge(EdgeType.EXECUTE, executor, nid)
        return nid

    def chain(self, initiator, url, request_id, method="GET", status=200,
              resource_type=None, redirect_to=None):
        resource = self.node(NodeType.RESOURCE, url=url)
        self.edge(EdgeType.REQUEST_START, initiator, resource, request_id=request_id,
                  http_method=method, resource_type=resource_type)
        last = resource
        if redirect_to:
            hop = self.node(NodeType.RESOURCE, url=redirect_to)
            self.edge(EdgeType.REQUEST_REDIRECT, last, hop,
                      request_id=request_id, status=302)
            last = hop
        self.edge(EdgeType.REQUEST_COMPLETE, last, initiator,
                  request_id=request_id, status=status)
        return request_id

    def build(self):
        return ExecutionGraph(self.nodes, self.edges)


def har_of(entries):
    return HarArchive.from_log({"version": "1.2", "entries": list(entries)})


def har_entry(url, method="GET", status=200, headers=(), when="2026-03-01T12:00:00.000Z"):
    return {
        "startedDateTime": when,
        "request": {
            "method": method,
            "url": url,
            "headers": [{"name": n, "value": v} for n, v in headers],
        },
        "response": {"status": status, "headers": []},
    }


def bundle_of(graph, entries=(), origin=ORIGIN):
    return Bundle(Manifest(page_origin=origin), har_of(entries), graph, SCREENSHOT)


# --- API appearances -----------------------------------------------------------

def test_load_api_names_features_and_files(tmp_path):
    cssom = load_api_names("cssom-view")
    assert "Window.getComputedStyle" in cssom
    assert "Element.getBoundingClientRect" in cssom
    messaging = load_api_names("channel-messaging")
    assert "MessagePort.postMessage" in messaging
    custom = tmp_path / "apis.txt"
    custom.write_text("# mine\nFoo.bar\n\nBaz.qux\n")
    assert load_api_names(custom) == frozenset({"Foo.bar", "Baz.qux"})


def appearance_graph():
    b = GraphBuilder()
    ext = b.script(url="https://cdn.example/lib.js", executor=0)
    inl = b.script(url=None, script_type=ScriptType.CLASSIC, executor=0)
    extern = b.node(NodeType.EXTERN)
    b.edge(EdgeType.JS_CALL, ext, extern, method_name="Window.getComputedStyle")
    b.edge(EdgeType.JS_CALL, ext, extern, method_name="Window.getComputedStyle")
    b.edge(EdgeType.JS_CALL, ext, extern, method_name="Window.fetch")
    b.edge(EdgeType.JS_CALL, inl, extern, method_name="Element.getBoundingClientRect")
    # Call issued from a non-script node: never an appearance.
    b.edge(EdgeType.JS_CALL, 1, extern, method_name="Window.getComputedStyle")
    return b, ext, inl


def test_find_api_appearances_counts_pairs():
    b, ext, inl = appearance_graph()
    graph = b.build()
    everything = find_api_appearances(graph)
    assert everything.counts[("Window.getComputedStyle", "https://cdn.example/lib.js")] == 2
    assert everything.counts[("Window.fetch", "https://cdn.example/lib.js")] == 1
    assert everything.total_calls() == 4
    assert len(everything) == 3

    cssom_only = find_api_appearances(graph, load_api_names("cssom-view"))
    assert set(cssom_only.pairs) == {
        ("Window.getComputedStyle", "https://cdn.example/lib.js"),
        ("Element.getBoundingClientRect", f"script:{inl}"),
    }


def test_script_identity_prefers_url():
    b, ext, inl = appearance_graph()
    graph = b.build()
    assert script_identity(graph, ext) == "https://cdn.example/lib.js"
    assert script_identity(graph, inl) == f"script:{inl}"


def test_compare_appearances_partition():
    left = AppearanceSet.from_pairs([("A", "s1"), ("A", "s1"), ("B", "s1"), ("C", "s2")])
    right = AppearanceSet.from_pairs([("B", "s1"), ("C", "s3"), ("D", "s2")])
    diff = compare_appearances(left, right)
    assert diff.both == [("B", "s1")]
    assert diff.left_only == [("A", "s1"), ("C", "s2")]
    assert diff.right_only == [("C", "s3"), ("D", "s2")]
    summary = diff.summary
    assert summary["left_total"] == len(left) == 3
    assert summary["right_total"] == len(right) == 3
    assert summary["both"] + summary["left_only"] == summary["left_total"]


def test_compare_appearances_agrees_with_nested_scan():
    rng = random.Random(31)
    apis = [f"Api.m{i}" for i in range(12)]
    scripts = [f"https://s.example/{i}.js" for i in range(6)]
    for _ in range(50):
        left = AppearanceSet.from_pairs(
            (rng.choice(apis), rng.choice(scripts))
            for _ in range(rng.randint(0, 25))
        )
        right = AppearanceSet.from_pairs(
            (rng.choice(apis), rng.choice(scripts))
            for _ in range(rng.randint(0, 25))
        )
        diff = compare_appearances(left, right)
        both, left_only, right_only = naive_join(sorted(left.pairs), sorted(right.pairs))
        assert diff.both == both
        assert diff.left_only == left_only
        assert diff.right_only == right_only


# --- event handlers --------------------------------------------------------------

def test_markup_attribute_listener_is_inline():
    # The parser saw onclick="..." in markup: it registers a listener whose
    # body lands in a script node of unknown type that nobody executed.
    b = GraphBuilder()
    button = b.element("button")
    body = b.node(NodeType.SCRIPT, script_type=ScriptType.UNKNOWN)
    b.edge(EdgeType.SET_ATTRIBUTE, 0, button, key="onclick")
    b.edge(EdgeType.ADD_EVENT_LISTENER, 0, button, key="click", listener_id=1)
    b.edge(EdgeType.EVENT_LISTENER, button, body, key="click", listener_id=1)
    findings = classify_event_handlers(b.build(), ORIGIN)
    assert len(findings) == 1
    f = findings[0]
    assert f.classification == INLINE
    assert f.adder_is_parser
    assert f.element_tag == "button"
    assert f.event == "click"
    assert not f.cross_origin


def test_script_set_attribute_listener_is_programmatic():
    # A script wrote the on-attribute itself; adder and body coincide.
    b = GraphBuilder()
    script = b.script(url="https://site.example/app.js", executor=0)
    button = b.element("button", creator=script)
    b.edge(EdgeType.SET_ATTRIBUTE, script, button, key="onclick")
    b.edge(EdgeType.ADD_EVENT_LISTENER, script, button, key="click", listener_id=1)
    b.edge(EdgeType.EVENT_LISTENER, button, script, key="click", listener_id=1)
    findings = classify_event_handlers(b.build(), ORIGIN)
    assert [f.classification for f in findings] == [PROGRAMMATIC]
    assert not findings[0].adder_is_parser


def test_known_script_type_is_programmatic_even_with_foreign_adder():
    b = GraphBuilder()
    adder = b.script(url="https://site.example/a.js", executor=0)
    body = b.script(url="https://site.example/b.js", script_type=ScriptType.MODULE)
    button = b.element("button")
    b.edge(EdgeType.ADD_EVENT_LISTENER, adder, button, key="scroll", listener_id=3)
    b.edge(EdgeType.EVENT_LISTENER, button, body, key="scroll", listener_id=3)
    findings = classify_event_handlers(b.build(), ORIGIN)
    assert [f.classification for f in findings] == [PROGRAMMATIC]
    assert findings[0].script_type == "module"


def test_repeat_firings_yield_one_finding():
    b = GraphBuilder()
    button = b.element("button")
    body = b.node(NodeType.SCRIPT, script_type=ScriptType.UNKNOWN)
    b.edge(EdgeType.ADD_EVENT_LISTENER, 0, button, key="click", listener_id=7)
    for _ in range(3):
        b.edge(EdgeType.EVENT_LISTENER, button, body, key="click", listener_id=7)
    findings = classify_event_handlers(b.build(), ORIGIN)
    assert [f.listener_id for f in findings] == [7]


def test_unregistered_listener_raises():
    b = GraphBuilder()
    button = b.element("button")
    body = b.node(NodeType.SCRIPT)
    b.edge(EdgeType.EVENT_LISTENER, button, body, key="click", listener_id=9)
    with pytest.raises(ProvenanceError):
        classify_event_handlers(b.build(), ORIGIN)


def test_cross_origin_flag_follows_containing_document():
    b = GraphBuilder()
    frame = b.element("iframe")
    embedded = b.node(NodeType.DOCUMENT, url="https://widget.example/embed")
    b.edge(EdgeType.STRUCTURE, frame, embedded)
    inner_button = b.element("button", parent=embedded)
    body = b.node(NodeType.SCRIPT, script_type=ScriptType.UNKNOWN)
    b.edge(EdgeType.ADD_EVENT_LISTENER, 0, inner_button, key="click", listener_id=1)
    b.edge(EdgeType.EVENT_LISTENER, inner_button, body, key="click", listener_id=1)
    same_button = b.element("button")
    body2 = b.node(NodeType.SCRIPT, script_type=ScriptType.UNKNOWN)
    b.edge(EdgeType.ADD_EVENT_LISTENER, 0, same_button, key="click", listener_id=2)
    b.edge(EdgeType.EVENT_LISTENER, same_button, body2, key="click", listener_id=2)
    findings = classify_event_handlers(b.build(), ORIGIN)
    by_id = {f.listener_id: f for f in findings}
    assert by_id[1].cross_origin
    assert by_id[1].document_url == "https://widget.example/embed"
    assert not by_id[2].cross_origin


def test_count_inline_origins_excludes_cross_origin():
    def bundle_with_inline(origin, cross=False):
        b = GraphBuilder(origin)
        if cross:
            frame = b.element("iframe")
            doc = b.node(NodeType.DOCUMENT, url="https://other.example/w")
            b.edge(EdgeType.STRUCTURE, frame, doc)
            holder = b.element("button", parent=doc)
        else:
            holder = b.element("button")
        body = b.node(NodeType.SCRIPT, script_type=ScriptType.UNKNOWN)
        b.edge(EdgeType.ADD_EVENT_LISTENER, 0, holder, key="click", listener_id=1)
        b.edge(EdgeType.EVENT_LISTENER, holder, body, key="click", listener_id=1)
        return bundle_of(b.build(), origin=origin)

    def bundle_plain(origin):
        return bundle_of(GraphBuilder(origin).build(), origin=origin)

    summary = count_inline_origins(
        [
            bundle_with_inline("https://a.example"),
            bundle_with_inline("https://b.example", cross=True),
            bundle_plain("https://c.example"),
        ]
    )
    assert summary.origins_total == 3
    assert summary.origins_with_inline == 1
    assert summary.inline_counts == {
        "https://a.example": 1,
        "https://b.example": 0,
        "https://c.example": 0,
    }


# --- attribution -----------------------------------------------------------------

def test_context_classification_by_start_topology():
    b = GraphBuilder()
    script_el = b.element("script")
    img_el = b.element("img")
    video_el = b.element("video")
    fetcher = b.script(url="https://site.example/app.js", executor=0)
    plain = b.script(url="https://site.example/other.js", executor=0)
    extern = b.node(NodeType.EXTERN)
    b.edge(EdgeType.JS_CALL, fetcher, extern, method_name="Window.fetch")

    b.chain(script_el, "https://site.example/a.js", 1, resource_type="script")
    b.chain(img_el, "https://site.example/a.png", 2)
    b.chain(video_el, "https://site.example/a.mp4", 3)
    b.chain(fetcher, "https://site.example/api", 4, method="POST")
    b.chain(plain, "https://site.example/beacon", 5)
    b.chain(0, "https://site.example/style.css", 6)

    records = attribute_requests(b.build(), ORIGIN, include_documents=False)
    by_id = {r.request_id: r for r in records}
    assert by_id[1].context is RequestContext.SCRIPT_ELEMENT
    assert by_id[2].context is RequestContext.IMG_ELEMENT
    assert by_id[3].context is RequestContext.OTHER
    assert by_id[3].context_detail == "video"
    assert by_id[4].context is RequestContext.FETCH_XHR
    assert by_id[4].http_method == "POST"
    assert by_id[5].context is RequestContext.OTHER
    assert by_id[5].context_detail == "script"
    assert by_id[6].context is RequestContext.PARSER


def test_responsible_party_walks_to_nearest_script():
    b = GraphBuilder()
    tracker = b.script(url="https://cdn.tracker.example/t.js", executor=0)
    pixel = b.element("img", creator=tracker)
    b.chain(pixel, "https://collect.tracker.example/p.gif", 1)
    own = b.element("img")  # parser-created
    b.chain(own, "https://site.example/logo.png", 2)
    same_rd = b.script(url="https://static.site.example/app.js", executor=0)
    banner = b.element("img", creator=same_rd)
    b.chain(banner, "https://ads.example/banner.png", 3)

    records = attribute_requests(b.build(), ORIGIN, include_documents=False)
    by_id = {r.request_id: r for r in records}
    assert by_id[1].responsible_party == "tracker.example"
    assert by_id[2].responsible_party == FIRST_PARTY
    # Same registrable domain as the page: still first-party.
    assert by_id[3].responsible_party == FIRST_PARTY


def test_inline_script_provenance_continues_past_it():
    # A data:-URL script has no network origin; its creator decides.
    b = GraphBuilder()
    tp = b.script(url="https://cdn.widgets.example/w.js", executor=0)
    inline = b.node(NodeType.SCRIPT, url="data:text/javascript,void 0",
                    script_type=ScriptType.EVAL)
    b.edge(EdgeType.CREATE_NODE, tp, inline)
    b.chain(inline, "https://metrics.example/m.gif", 1)
    records = attribute_requests(b.build(), ORIGIN, include_documents=False)
    assert records[0].responsible_party == "widgets.example"


def test_unresolvable_provenance_falls_back_to_first_party(caplog):
    b = GraphBuilder()
    orphan = b.node(NodeType.HTML_ELEMENT, tag_name="img")  # no in-edges at all
    b.chain(orphan, "https://somewhere.example/x.gif", 1)
    with caplog.at_level(logging.WARNING, logger="webbundle.queries"):
        records = attribute_requests(b.build(), ORIGIN, include_documents=False)
    assert records[0].responsible_party == FIRST_PARTY
    assert any("provenance" in message for message in caplog.messages)


def test_creation_cycle_does_not_hang(caplog):
    b = GraphBuilder()
    first = b.node(NodeType.HTML_ELEMENT, tag_name="div")
    second = b.node(NodeType.HTML_ELEMENT, tag_name="div")
    b.edge(EdgeType.CREATE_NODE, first, second)
    b.edge(EdgeType.CREATE_NODE, second, first)
    b.chain(first, "https://site.example/x", 1)
    with caplog.at_level(logging.WARNING, logger="webbundle.queries"):
        records = attribute_requests(b.build(), ORIGIN, include_documents=False)
    assert records[0].responsible_party == FIRST_PARTY


def test_document_records():
    b = GraphBuilder()
    embedder = b.script(url="https://embed.example/sdk.js", executor=0)
    frame = b.element("iframe", creator=embedder)
    inner = b.node(NodeType.DOCUMENT, url="https://embed.example/frame")
    b.edge(EdgeType.STRUCTURE, frame, inner)
    records = attribute_requests(b.build(), ORIGIN)
    docs = {r.urls[0]: r for r in records if r.resource_type == "document"}
    root = docs[ORIGIN + "/"]
    assert root.context is RequestContext.OTHER
    assert root.context_detail == "document"
    assert root.responsible_party == FIRST_PARTY
    assert root.request_id is None and root.http_method == "GET"
    embedded = docs["https://embed.example/frame"]
    assert embedded.context_detail == "iframe"
    assert embedded.responsible_party == "embed.example"


def test_corpus_attribution_totals():
    def one(origin, n):
        b = GraphBuilder(origin)
        tp = b.script(url="https://cdn.tracker.example/t.js", executor=0)
        for i in range(n):
            el = b.element("img", creator=tp)
            b.chain(el, f"https://collect.tracker.example/{i}.gif", i + 1)
        return bundle_of(b.build(), origin=origin)

    per_origin, total = corpus_attribution(
        [one("https://a.example", 2), one("https://b.example", 3)],
        "tracker.example",
    )
    assert per_origin == [("https://a.example", 2), ("https://b.example", 3)]
    assert total == 5


# --- HAR vs graph diff ------------------------------------------------------------

def diff_fixture(extra_entries=(), extra_graph=None, drop_entries=0):
    b = GraphBuilder()
    img = b.element("img")
    b.chain(img, "https://site.example/a.png", 1, resource_type="image")
    script_el = b.element("script")
    b.chain(script_el, "https://cdn.example/lib.js", 2,
            redirect_to="https://cdn-b.example/lib.js", resource_type="script")
    if extra_graph is not None:
        extra_graph(b)
    entries = [
        har_entry(ORIGIN + "/", headers=[("Sec-Fetch-Dest", "document")]),
        har_entry("https://site.example/a.png"),
        # The HAR records the redirect's landing URL.
        har_entry("https://cdn-b.example/lib.js"),
    ]
    entries = entries[: len(entries) - drop_entries] + list(extra_entries)
    return bundle_of(b.build(), entries)


def test_diff_clean_bundle_matches_everything():
    diff = diff_requests(diff_fixture())
    assert diff.har_total == 3
    assert diff.graph_total == 3  # two chains + the root document
    assert diff.matched_count == 3
    assert diff.har_only == [] and diff.graph_only == []
    assert diff.graph_only_internal == [] and diff.graph_only_documents == []
    assert diff.relative_difference == 0.0


def test_diff_excluded_entries_never_count():
    noise = [
        har_entry("https://api.example/x", method="OPTIONS",
                  headers=[("Access-Control-Request-Method", "GET")]),
        har_entry("chrome-extension://abc/x.js"),
    ]
    diff = diff_requests(diff_fixture(extra_entries=noise))
    assert diff.har_total == 3
    assert diff.har_only == []


def test_diff_har_only_reports_archive_indexes():
    bundle = diff_fixture(extra_entries=[
        har_entry("https://late.example/beacon", when="2026-03-01T12:00:09.000Z"),
    ])
    diff = diff_requests(bundle)
    assert diff.har_total == 4
    assert len(diff.har_only) == 1
    index = diff.har_only[0]
    assert bundle.har.entries[index].url == "https://late.example/beacon"


def test_diff_graph_only_and_internal_redirects():
    def extra(b):
        ghost = b.element("img")
        b.chain(ghost, "https://ghost.example/x.gif", 7)
        silent = b.element("img")
        b.chain(silent, "https://first.example/h", 8, status=307)

    diff = diff_requests(diff_fixture(extra_graph=extra))
    assert diff.graph_only == [7]
    assert diff.graph_only_internal == [8]
    assert diff.relative_difference == pytest.approx(2 / 5)


def test_diff_unmatched_document_is_reported_separately():
    def extra(b):
        frame = b.element("iframe")
        inner = b.node(NodeType.DOCUMENT, url="https://embed.example/frame")
        b.edge(EdgeType.STRUCTURE, frame, inner)

    diff = diff_requests(diff_fixture(extra_graph=extra))
    assert diff.graph_only == []
    assert len(diff.graph_only_documents) == 1


def test_diff_method_must_agree():
    bundle = diff_fixture()
    # Rewrite the PNG fetch as a POST on the HAR side only.
    raw = bundle.har.entries[1].raw
    assert raw["request"]["url"] == "https://site.example/a.png"
    raw["request"]["method"] = "POST"
    rebuilt = HarArchive.from_log(
        {"version": "1.2", "entries": [e.raw for e in bundle.har.entries]}
    )
    diff = diff_requests(Bundle(bundle.manifest, rebuilt, bundle.graph, SCREENSHOT))
    assert len(diff.har_only) == 1
    assert diff.graph_only == [1]


def test_relative_difference_guards_zero():
    b = GraphBuilder()
    graph = b.build()
    bundle = bundle_of(graph, [])
    diff = diff_requests(bundle)
    assert diff.har_total == 0
    assert diff.graph_total == 1  # the root document node
    assert diff.relative_difference == 1.0


# --- third-party prevalence --------------------------------------------------------

def prevalence_bundle(origin, hosts):
    b = GraphBuilder(origin)
    for i, host in enumerate(hosts):
        el = b.element("img")
        b.chain(el, f"https://{host}/r{i}", i + 1)
    return bundle_of(b.build(), origin=origin)


def test_third_party_prevalence_floor_and_sort():
    bundles = [
        prevalence_bundle("https://a.example", ["t1.tracker.net", "cdn.assets.org"]),
        prevalence_bundle("https://b.example", ["t2.tracker.net", "cdn.assets.org"]),
        prevalence_bundle("https://c.example", ["t3.tracker.net", "once.example"]),
    ]
    report = third_party_prevalence(bundles)
    assert [(t.domain, t.first_party_count, t.request_count) for t in report] == [
        ("tracker.net", 3, 3),
        ("assets.org", 2, 2),
    ]


def test_third_party_prevalence_counts_redirect_hops():
    b = GraphBuilder("https://a.example")
    el = b.element("img")
    b.chain(el, "https://bounce.example/r", 1, redirect_to="https://tracker.net/px")
    one = bundle_of(b.build(), origin="https://a.example")
    two = prevalence_bundle("https://b.example", ["tracker.net"])
    report = third_party_prevalence([one, two])
    domains = {t.domain: t for t in report}
    assert domains["tracker.net"].first_party_count == 2
    # bounce.example was seen on only one first party: dropped by the floor.
    assert "bounce.example" not in domains
    lifted = third_party_prevalence([one, two], min_first_parties=1)
    assert {t.domain for t in lifted} == {"tracker.net", "bounce.example"}


def test_third_party_prevalence_own_domain_never_counts():
    bundles = [
        prevalence_bundle("https://a.example", ["static.a.example", "tracker.net"]),
        prevalence_bundle("https://b.example", ["tracker.net"]),
    ]
    report = third_party_prevalence(bundles)
    assert {t.domain for t in report} == {"tracker.net"}


def test_third_party_tracker_flags():
    bundles = [
        prevalence_bundle("https://a.example", ["pixels.net", "fonts.org"]),
        prevalence_bundle("https://b.example", ["pixels.net", "fonts.org"]),
    ]
    engine = FilterEngine(parse_filter_list("||pixels.net^\n"))
    report = third_party_prevalence(bundles, engine=engine)
    flags = {t.domain: t.tracker for t in report}
    assert flags == {"pixels.net": True, "fonts.org": False}
