"""webbundle: pack, validate, and query .web page-capture bundles.

A bundle couples an HTTP Archive, an execution graph of page activity,
and a screenshot under one manifest.  This package reads and writes the
container and reproduces the analyses built on it: JS API appearances,
event-handler provenance, and request extraction, filtering, and
attribution with tracker classification.
"""

from .bundle import (
    Bundle,
    Corpus,
    CorpusEntry,
    Finding,
    Manifest,
    iter_corpus,
    load_bundle,
    load_corpus_manifest,
    pack,
    parse_manifest,
    save_bundle,
    serialize_manifest,
    unpack,
    validate_bundle,
)
from .errors import (
    ChainError,
    InputError,
    InvariantViolation,
    MemberParseError,
    MissingMember,
    ParseError,
    ProvenanceError,
    ScenarioError,
    SchemaError,
    WebBundleError,
)
from .graph import (
    EdgeType,
    ExecutionGraph,
    GraphEdge,
    GraphNode,
    NodeType,
    RequestChain,
    ScriptType,
    parse_graphml,
    serialize_graphml,
)
from .har import HarArchive, HarEntry, header, parse_har, serialize_har
from .harfilter import Verdict, classify_har_entry, filter_page_context, load_internal_prefixes
from .queries import (
    AppearanceSet,
    AttributedRequest,
    HandlerFinding,
    RequestContext,
    RequestDiff,
    ThirdParty,
    attribute_requests,
    classify_event_handlers,
    compare_appearances,
    count_inline_origins,
    diff_requests,
    find_api_appearances,
    load_api_names,
    third_party_prevalence,
)
from .synth import (
    Lcg64,
    Scenario,
    ScenarioEvent,
    generate_scenario,
    scenario_to_bundle,
    tile_scenario,
)
from .trackers import (
    FilterEngine,
    FilterList,
    FilterRule,
    PublicSuffixData,
    parse_filter_list,
    registrable_domain,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
