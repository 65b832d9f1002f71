"""Exception types raised across the webbundle package."""

from __future__ import annotations


class WebBundleError(Exception):
    """Base class for all webbundle errors."""


class ParseError(WebBundleError):
    """Input bytes are not well-formed (XML or JSON level)."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"{message} (line {line})")
        self.line = line


class SchemaError(WebBundleError):
    """Well-formed input is missing a mandatory field or violates the profile."""

    def __init__(self, element: str, detail: str):
        super().__init__(f"{element}: {detail}")
        self.element = element
        self.detail = detail


class MissingMember(WebBundleError):
    """A bundle directory or container lacks one of the fixed members."""

    def __init__(self, name: str):
        super().__init__(f"missing bundle member: {name}")
        self.name = name


class MemberParseError(WebBundleError):
    """A bundle member exists but does not parse."""

    def __init__(self, name: str, cause: Exception):
        super().__init__(f"member {name} failed to parse: {cause}")
        self.name = name
        self.cause = cause


class InvariantViolation(WebBundleError):
    """Cross-member bundle invariants do not hold."""

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ChainError(WebBundleError):
    """Request-lifecycle edges for one request id do not form a valid chain."""

    def __init__(self, request_id: int | None, detail: str = "broken request chain"):
        super().__init__(f"request {request_id}: {detail}")
        self.request_id = request_id


class ProvenanceError(WebBundleError):
    """An event-listener edge has no matching registration provenance."""

    def __init__(self, edge_id: int, detail: str = "no matching add-event-listener edge"):
        super().__init__(f"edge {edge_id}: {detail}")
        self.edge_id = edge_id


class InputError(WebBundleError):
    """Caller-supplied value is unusable (empty host, bad origin, ...)."""


class ScenarioError(WebBundleError):
    """A synthetic scenario references an entity before it exists."""

    def __init__(self, event_index: int, detail: str):
        super().__init__(f"event {event_index}: {detail}")
        self.event_index = event_index
