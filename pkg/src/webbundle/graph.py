"""Execution graph model, GraphML profile parser, and deterministic writer.

The graph is a directed multigraph of page activity: nodes are actors and
resources (parser, documents, elements, scripts, requests, storage), edges
are timestamped events carrying an ``order`` value that forms the
authoritative total order (ties broken by edge id, never by timestamp).
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum

from .errors import ChainError, ParseError, SchemaError


class NodeType(Enum):
    PARSER = "parser"
    DOCUMENT = "document"
    HTML_ELEMENT = "html element"
    SCRIPT = "script"
    RESOURCE = "resource"
    STORAGE = "storage"
    EXTERN = "extern"


class ScriptType(Enum):
    CLASSIC = "classic"
    MODULE = "module"
    EVAL = "eval"
    EXTENSION = "extension"
    UNKNOWN = "unknown"


class EdgeType(Enum):
    STRUCTURE = "structure"
    CREATE_NODE = "create node"
    SET_ATTRIBUTE = "set attribute"
    EXECUTE = "execute"
    JS_CALL = "js call"
    JS_RESULT = "js result"
    REQUEST_START = "request start"
    REQUEST_REDIRECT = "request redirect"
    REQUEST_COMPLETE = "request complete"
    REQUEST_ERROR = "request error"
    ADD_EVENT_LISTENER = "add event listener"
    REMOVE_EVENT_LISTENER = "remove event listener"
    EVENT_LISTENER = "event listener"


REQUEST_EDGE_TYPES = frozenset(
    {
        EdgeType.REQUEST_START,
        EdgeType.REQUEST_REDIRECT,
        EdgeType.REQUEST_COMPLETE,
        EdgeType.REQUEST_ERROR,
    }
)


@dataclass
class GraphNode:
    id: int
    node_type: NodeType
    tag_name: str | None = None
    url: str | None = None
    script_type: ScriptType | None = None
    frame_id: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)


@dataclass
class GraphEdge:
    id: int
    edge_type: EdgeType
    source: int
    target: int
    order: int
    timestamp: int | None = None
    key: str | None = None
    args: str | None = None
    method_name: str | None = None
    request_id: int | None = None
    http_method: str | None = None
    status: int | None = None
    resource_type: str | None = None
    listener_id: int | None = None
    attributes: dict[str, str] = field(default_factory=dict)

    @property
    def sort_key(self) -> tuple[int, int]:
        return (self.order, self.id)


@dataclass
class RequestChain:
    """One request lifecycle: a start edge, zero or more redirects, an end.

    ``urls[0]`` is the URL of the resource node the start edge points at;
    each redirect contributes the URL of its target resource node.
    """

    request_id: int
    start: GraphEdge
    redirects: tuple[GraphEdge, ...]
    end: GraphEdge | None
    urls: tuple[str, ...]

    @property
    def initiator(self) -> int:
        return self.start.source

    @property
    def resource(self) -> int:
        return self.start.target

    @property
    def completed(self) -> bool:
        return self.end is not None and self.end.edge_type is EdgeType.REQUEST_COMPLETE

    @property
    def failed(self) -> bool:
        return self.end is not None and self.end.edge_type is EdgeType.REQUEST_ERROR

    @property
    def final_status(self) -> int | None:
        if self.end is None:
            return None
        return self.end.status


class ExecutionGraph:
    """In-memory execution graph with id and adjacency indexes."""

    def __init__(self, nodes, edges):
        self._nodes: dict[int, GraphNode] = {}
        self._edges: dict[int, GraphEdge] = {}
        self._out: dict[int, list[int]] = {}
        self._in: dict[int, list[int]] = {}
        for node in nodes:
            if node.id in self._nodes:
                raise SchemaError(f"node n{node.id}", "duplicate node id")
            self._nodes[node.id] = node
            self._out.setdefault(node.id, [])
            self._in.setdefault(node.id, [])
        for edge in edges:
            if edge.id in self._edges:
                raise SchemaError(f"edge e{edge.id}", "duplicate edge id")
            if edge.source not in self._nodes:
                raise SchemaError(f"edge e{edge.id}", f"unknown source n{edge.source}")
            if edge.target not in self._nodes:
                raise SchemaError(f"edge e{edge.id}", f"unknown target n{edge.target}")
            self._edges[edge.id] = edge
            self._out[edge.source].append(edge.id)
            self._in[edge.target].append(edge.id)

    @property
    def nodes(self) -> list[GraphNode]:
        return [self._nodes[i] for i in sorted(self._nodes)]

    @property
    def edges(self) -> list[GraphEdge]:
        return [self._edges[i] for i in sorted(self._edges)]

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def node(self, node_id: int) -> GraphNode:
        return self._nodes[node_id]

    def edge(self, edge_id: int) -> GraphEdge:
        return self._edges[edge_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._nodes

    def out_edges(self, node_id: int, edge_type: EdgeType | None = None) -> list[GraphEdge]:
        found = [self._edges[i] for i in self._out.get(node_id, ())]
        if edge_type is not None:
            found = [e for e in found if e.edge_type is edge_type]
        return sorted(found, key=lambda e: e.sort_key)

    def in_edges(self, node_id: int, edge_type: EdgeType | None = None) -> list[GraphEdge]:
        found = [self._edges[i] for i in self._in.get(node_id, ())]
        if edge_type is not None:
            found = [e for e in found if e.edge_type is edge_type]
        return sorted(found, key=lambda e: e.sort_key)

    def edges_by_type(self, edge_type: EdgeType) -> list[GraphEdge]:
        return sorted(
            (e for e in self._edges.values() if e.edge_type is edge_type),
            key=lambda e: e.sort_key,
        )

    def nodes_by_type(self, node_type: NodeType) -> list[GraphNode]:
        return [n for n in self.nodes if n.node_type is node_type]

    def documents(self) -> list[GraphNode]:
        return self.nodes_by_type(NodeType.DOCUMENT)

    def root_document(self) -> GraphNode:
        """The single document node with no incoming structure edge."""
        roots = [
            d
            for d in self.documents()
            if not self.in_edges(d.id, EdgeType.STRUCTURE)
        ]
        if len(roots) != 1:
            raise SchemaError("graph", f"expected one root document, found {len(roots)}")
        return roots[0]

    def request_chain_faults(self) -> list[tuple[int | None, str]]:
        """Soft chain problems as (request_id, detail) pairs, stably ordered."""
        faults: list[tuple[int | None, str]] = []
        groups: dict[int, list[GraphEdge]] = {}
        for edge in self.edges:
            if edge.edge_type not in REQUEST_EDGE_TYPES:
                continue
            if edge.request_id is None:
                faults.append((None, f"edge e{edge.id} ({edge.edge_type.value}) has no request id"))
                continue
            groups.setdefault(edge.request_id, []).append(edge)
        for request_id in sorted(groups):
            fault = _chain_fault(groups[request_id])
            if fault is not None:
                faults.append((request_id, fault))
        return faults

    def request_chains(self, strict: bool = True) -> list[RequestChain]:
        """Assemble request lifecycles, sorted by start-edge order.

        Edges sharing a request id form one chain.  With ``strict`` a broken
        chain (or a request edge with no request id) raises ChainError;
        otherwise broken groups are skipped.
        """
        groups: dict[int, list[GraphEdge]] = {}
        for edge in self.edges:
            if edge.edge_type not in REQUEST_EDGE_TYPES:
                continue
            if edge.request_id is None:
                if strict:
                    raise ChainError(None, f"edge e{edge.id} has no request id")
                continue
            groups.setdefault(edge.request_id, []).append(edge)
        chains = []
        for request_id, group in groups.items():
            fault = _chain_fault(group)
            if fault is not None:
                if strict:
                    raise ChainError(request_id, fault)
                continue
            chains.append(self._build_chain(request_id, group))
        chains.sort(key=lambda c: c.start.sort_key)
        return chains

    def _build_chain(self, request_id: int, group: list[GraphEdge]) -> RequestChain:
        ordered = sorted(group, key=lambda e: e.sort_key)
        start = next(e for e in ordered if e.edge_type is EdgeType.REQUEST_START)
        redirects = tuple(e for e in ordered if e.edge_type is EdgeType.REQUEST_REDIRECT)
        end = next(
            (
                e
                for e in ordered
                if e.edge_type in (EdgeType.REQUEST_COMPLETE, EdgeType.REQUEST_ERROR)
            ),
            None,
        )
        urls = [self._nodes[start.target].url or ""]
        urls.extend(self._nodes[r.target].url or "" for r in redirects)
        return RequestChain(request_id, start, redirects, end, tuple(urls))


def _chain_fault(group: list[GraphEdge]) -> str | None:
    ordered = sorted(group, key=lambda e: e.sort_key)
    starts = [e for e in ordered if e.edge_type is EdgeType.REQUEST_START]
    ends = [
        e
        for e in ordered
        if e.edge_type in (EdgeType.REQUEST_COMPLETE, EdgeType.REQUEST_ERROR)
    ]
    if not starts:
        return "no start edge"
    if len(starts) > 1:
        return "multiple start edges"
    if len(ends) > 1:
        return "multiple end edges"
    if ordered[0].edge_type is not EdgeType.REQUEST_START:
        return "start edge is not first in order"
    if ends and ordered[-1] is not ends[0]:
        return "edges after the end edge"
    return None


# --- GraphML profile ---------------------------------------------------------

_NODE_KEYS = ("node type", "tag name", "url", "script type", "frame id")
_EDGE_KEYS = (
    "edge type",
    "order",
    "timestamp",
    "key",
    "args",
    "method name",
    "request id",
    "http method",
    "status",
    "resource type",
    "listener id",
)
_KEY_TYPES = {
    "order": "int",
    "timestamp": "long",
    "request id": "int",
    "status": "int",
    "listener id": "int",
}
_INT_EDGE_FIELDS = {
    "order": "order",
    "timestamp": "timestamp",
    "request id": "request_id",
    "status": "status",
    "listener id": "listener_id",
}
_STR_EDGE_FIELDS = {
    "key": "key",
    "args": "args",
    "method name": "method_name",
    "http method": "http_method",
    "resource type": "resource_type",
}


def _strip_ns(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_id(raw: str | None, prefix: str, what: str) -> int:
    if raw is None or not raw.startswith(prefix):
        raise SchemaError(what, f"id {raw!r} does not match {prefix}<int>")
    try:
        return int(raw[len(prefix):])
    except ValueError:
        raise SchemaError(what, f"id {raw!r} does not match {prefix}<int>") from None


def parse_graphml(data: bytes | str) -> ExecutionGraph:
    """Parse GraphML bytes into an ExecutionGraph.

    Raises ParseError for malformed XML and SchemaError when the profile is
    violated (unknown type values, missing edge order, duplicate or dangling
    ids, no unique root document).  Data under keys outside the profile is
    preserved in the node/edge ``attributes`` map.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise ParseError(f"malformed GraphML: {exc.msg if hasattr(exc, 'msg') else exc}", line) from exc

    if _strip_ns(root.tag) != "graphml":
        raise SchemaError("document", f"root element is {_strip_ns(root.tag)!r}, not graphml")

    key_names: dict[str, tuple[str, str]] = {}
    for child in root.iter():
        if _strip_ns(child.tag) != "key":
            continue
        key_id = child.get("id")
        name = child.get("attr.name")
        domain = child.get("for", "")
        if key_id and name:
            key_names[key_id] = (name, domain)

    graph_el = next((c for c in root if _strip_ns(c.tag) == "graph"), None)
    if graph_el is None:
        raise SchemaError("document", "no graph element")

    def data_of(element) -> dict[str, str]:
        values: dict[str, str] = {}
        for child in element:
            if _strip_ns(child.tag) != "data":
                continue
            ref = child.get("key")
            if ref is None:
                continue
            name = key_names.get(ref, (ref, ""))[0]
            if name not in values:  # first occurrence wins
                values[name] = child.text or ""
        return values

    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    for element in graph_el:
        tag = _strip_ns(element.tag)
        if tag == "node":
            node_id = _parse_id(element.get("id"), "n", "node")
            values = data_of(element)
            raw_type = values.pop("node type", None)
            if raw_type is None:
                raise SchemaError(f"node n{node_id}", "missing node type")
            try:
                node_type = NodeType(raw_type)
            except ValueError:
                raise SchemaError(f"node n{node_id}", f"unknown node type {raw_type!r}") from None
            script_type = None
            raw_script = values.pop("script type", None)
            if raw_script is not None:
                try:
                    script_type = ScriptType(raw_script)
                except ValueError:
                    raise SchemaError(
                        f"node n{node_id}", f"unknown script type {raw_script!r}"
                    ) from None
            nodes.append(
                GraphNode(
                    id=node_id,
                    node_type=node_type,
                    tag_name=values.pop("tag name", None),
                    url=values.pop("url", None),
                    script_type=script_type,
                    frame_id=values.pop("frame id", None),
                    attributes=values,
                )
            )
        elif tag == "edge":
            edge_id = _parse_id(element.get("id"), "e", "edge")
            what = f"edge e{edge_id}"
            source = _parse_id(element.get("source"), "n", what)
            target = _parse_id(element.get("target"), "n", what)
            values = data_of(element)
            raw_type = values.pop("edge type", None)
            if raw_type is None:
                raise SchemaError(what, "missing edge type")
            try:
                edge_type = EdgeType(raw_type)
            except ValueError:
                raise SchemaError(what, f"unknown edge type {raw_type!r}") from None
            ints: dict[str, int | None] = {}
            for name, attr in _INT_EDGE_FIELDS.items():
                raw = values.pop(name, None)
                if raw is None:
                    ints[attr] = None
                    continue
                try:
                    ints[attr] = int(raw)
                except ValueError:
                    raise SchemaError(what, f"{name} {raw!r} is not an integer") from None
            if ints["order"] is None:
                raise SchemaError(what, "missing order")
            strings = {attr: values.pop(name, None) for name, attr in _STR_EDGE_FIELDS.items()}
            if edge_type is EdgeType.JS_CALL and not strings["method_name"]:
                raise SchemaError(what, "js call edge missing method name")
            edges.append(
                GraphEdge(
                    id=edge_id,
                    edge_type=edge_type,
                    source=source,
                    target=target,
                    order=ints["order"],
                    timestamp=ints["timestamp"],
                    key=strings["key"],
                    args=strings["args"],
                    method_name=strings["method_name"],
                    request_id=ints["request_id"],
                    http_method=strings["http_method"],
                    status=ints["status"],
                    resource_type=strings["resource_type"],
                    listener_id=ints["listener_id"],
                    attributes=values,
                )
            )

    graph = ExecutionGraph(nodes, edges)
    graph.root_document()  # enforce the unique-root invariant up front
    return graph


def _escape_text(value: str) -> str:
    return value.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _escape_attr(value: str) -> str:
    return _escape_text(value).replace('"', "&quot;")


def serialize_graphml(graph: ExecutionGraph) -> bytes:
    """Write an ExecutionGraph as deterministic GraphML bytes.

    The writer is hand-rolled so the output is stable down to the byte:
    fixed key ids (d0..d15 for the profile, u0.. for extra attributes sorted
    by domain then name), nodes and edges in id order, LF line endings.
    """
    unknown: list[tuple[str, str]] = []
    seen = set()
    for node in graph.nodes:
        for name in node.attributes:
            if ("node", name) not in seen:
                seen.add(("node", name))
                unknown.append(("node", name))
    for edge in graph.edges:
        for name in edge.attributes:
            if ("edge", name) not in seen:
                seen.add(("edge", name))
                unknown.append(("edge", name))
    unknown.sort()

    key_ids: dict[tuple[str, str], str] = {}
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
    ]
    serial = 0
    for domain, names in (("node", _NODE_KEYS), ("edge", _EDGE_KEYS)):
        for name in names:
            key_id = f"d{serial}"
            serial += 1
            key_ids[(domain, name)] = key_id
            attr_type = _KEY_TYPES.get(name, "string")
            lines.append(
                f'  <key attr.name="{_escape_attr(name)}" attr.type="{attr_type}"'
                f' for="{domain}" id="{key_id}"/>'
            )
    for index, (domain, name) in enumerate(unknown):
        key_id = f"u{index}"
        key_ids[(domain, name)] = key_id
        lines.append(
            f'  <key attr.name="{_escape_attr(name)}" attr.type="string"'
            f' for="{domain}" id="{key_id}"/>'
        )

    lines.append('  <graph id="G" edgedefault="directed">')

    def emit_data(domain: str, pairs: list[tuple[str, str]]) -> list[str]:
        return [
            f'      <data key="{key_ids[(domain, name)]}">{_escape_text(value)}</data>'
            for name, value in pairs
        ]

    for node in graph.nodes:
        pairs: list[tuple[str, str]] = [("node type", node.node_type.value)]
        if node.tag_name is not None:
            pairs.append(("tag name", node.tag_name))
        if node.url is not None:
            pairs.append(("url", node.url))
        if node.script_type is not None:
            pairs.append(("script type", node.script_type.value))
        if node.frame_id is not None:
            pairs.append(("frame id", node.frame_id))
        pairs.extend((name, node.attributes[name]) for name in sorted(node.attributes))
        lines.append(f'    <node id="n{node.id}">')
        lines.extend(emit_data("node", pairs))
        lines.append("    </node>")

    for edge in graph.edges:
        pairs = [("edge type", edge.edge_type.value), ("order", str(edge.order))]
        if edge.timestamp is not None:
            pairs.append(("timestamp", str(edge.timestamp)))
        if edge.key is not None:
            pairs.append(("key", edge.key))
        if edge.args is not None:
            pairs.append(("args", edge.args))
        if edge.method_name is not None:
            pairs.append(("method name", edge.method_name))
        if edge.request_id is not None:
            pairs.append(("request id", str(edge.request_id)))
        if edge.http_method is not None:
            pairs.append(("http method", edge.http_method))
        if edge.status is not None:
            pairs.append(("status", str(edge.status)))
        if edge.resource_type is not None:
            pairs.append(("resource type", edge.resource_type))
        if edge.listener_id is not None:
            pairs.append(("listener id", str(edge.listener_id)))
        pairs.extend((name, edge.attributes[name]) for name in sorted(edge.attributes))
        lines.append(f'    <edge id="e{edge.id}" source="n{edge.source}" target="n{edge.target}">')
        lines.extend(emit_data("edge", pairs))
        lines.append("    </edge>")

    lines.append("  </graph>")
    lines.append("</graphml>")
    lines.append("")
    return "\n".join(lines).encode("utf-8")
