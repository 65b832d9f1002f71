"""Command-line front end.

Data goes to stdout (JSON by default, CSV on request) and is byte-stable
for a given input; diagnostics go to stderr.  Exit status: 0 on success,
1 on runtime failure or — under --strict — when a reporting command found
problems, 2 for usage errors (argparse's default).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import bundle as bundlemod
from .errors import WebBundleError
from .harfilter import load_internal_prefixes
from .queries import (
    attribute_requests,
    classify_event_handlers,
    corpus_attribution,
    diff_requests,
    find_api_appearances,
    load_api_names,
    third_party_prevalence,
)
from .synth import generate_scenario, scenario_to_bundle
from .trackers import FilterEngine, parse_filter_list


def _emit_obj(obj: dict, fmt: str) -> None:
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key in sorted(obj):
            value = obj[key]
            if isinstance(value, (list, dict)):
                value = json.dumps(value, sort_keys=True)
            writer.writerow([key, value])
        sys.stdout.write(out.getvalue())
    else:
        sys.stdout.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _emit_rows(rows: list[dict], fieldnames: list[str], fmt: str) -> None:
    if fmt == "csv":
        out = io.StringIO()
        writer = csv.DictWriter(out, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            flat = {
                k: json.dumps(v, sort_keys=True) if isinstance(v, (list, dict)) else v
                for k, v in row.items()
            }
            writer.writerow(flat)
        sys.stdout.write(out.getvalue())
    else:
        sys.stdout.write(json.dumps(rows, sort_keys=True, indent=2) + "\n")


def _load(path: str, check: bool) -> bundlemod.Bundle:
    return bundlemod.load_bundle(path, check=check)


# --- subcommand handlers -----------------------------------------------------


def _cmd_validate(args) -> int:
    all_findings: list[dict] = []
    for path in args.bundle:
        loaded = bundlemod.load_bundle(path, check=False)
        for finding in bundlemod.validate_bundle(loaded):
            all_findings.append(
                {
                    "bundle": path,
                    "member": finding.member,
                    "code": finding.code,
                    "detail": finding.detail,
                }
            )
    _emit_rows(all_findings, ["bundle", "member", "code", "detail"], args.format)
    if all_findings and args.strict:
        return 1
    return 0


def _cmd_stats(args) -> int:
    loaded = _load(args.bundle, check=not args.no_check)
    graph = loaded.graph
    edge_types: dict[str, int] = {}
    for edge in graph.edges:
        edge_types[edge.edge_type.value] = edge_types.get(edge.edge_type.value, 0) + 1
    _emit_obj(
        {
            "page_origin": loaded.page_origin,
            "nodes": len(graph),
            "edges": graph.edge_count,
            "edge_types": edge_types,
            "har_entries": len(loaded.har),
            "request_chains": len(graph.request_chains(strict=False)),
            "documents": len(graph.documents()),
            "screenshot_bytes": len(loaded.screenshot),
        },
        args.format,
    )
    return 0


def _cmd_pack(args) -> int:
    out = bundlemod.pack(args.directory, args.output, compress=args.compress)
    _emit_obj({"path": str(out), "bytes": out.stat().st_size}, args.format)
    return 0


def _cmd_query(args) -> int:
    loaded = _load(args.bundle, check=not args.no_check)
    if args.what == "api-calls":
        names = load_api_names(args.apis) if args.apis else None
        appearances = find_api_appearances(loaded.graph, names)
        rows = [
            {"api": api, "script": script, "calls": count}
            for (api, script), count in sorted(appearances.counts.items())
        ]
        _emit_rows(rows, ["api", "script", "calls"], args.format)
    elif args.what == "handlers":
        findings = classify_event_handlers(loaded.graph, loaded.page_origin)
        rows = [asdict(f) for f in findings]
        _emit_rows(
            rows,
            [
                "listener_id",
                "event",
                "classification",
                "cross_origin",
                "element",
                "element_tag",
                "adder",
                "adder_is_parser",
                "listener_script",
                "script_type",
                "document_url",
            ],
            args.format,
        )
    else:  # requests
        if args.attribute:
            records = attribute_requests(loaded.graph, loaded.page_origin)
            rows = [
                {
                    "request_id": r.request_id,
                    "urls": list(r.urls),
                    "method": r.http_method,
                    "context": r.context.value,
                    "detail": r.context_detail,
                    "party": r.responsible_party,
                    "resource_type": r.resource_type,
                    "status": r.final_status,
                }
                for r in records
            ]
            _emit_rows(
                rows,
                [
                    "request_id",
                    "urls",
                    "method",
                    "context",
                    "detail",
                    "party",
                    "resource_type",
                    "status",
                ],
                args.format,
            )
        else:
            rows = [
                {
                    "request_id": chain.request_id,
                    "urls": list(chain.urls),
                    "method": chain.start.http_method,
                    "status": chain.final_status,
                    "completed": chain.completed,
                }
                for chain in loaded.graph.request_chains(strict=False)
            ]
            _emit_rows(
                rows, ["request_id", "urls", "method", "status", "completed"], args.format
            )
    return 0


def _cmd_diff_har(args) -> int:
    loaded = _load(args.bundle, check=not args.no_check)
    prefixes = load_internal_prefixes(args.internal_urls) if args.internal_urls else None
    diff = diff_requests(loaded, prefixes)
    _emit_obj(
        {
            "har_total": diff.har_total,
            "graph_total": diff.graph_total,
            "matched": diff.matched_count,
            "relative_difference": diff.relative_difference,
            "har_only": diff.har_only,
            "graph_only": diff.graph_only,
            "graph_only_internal": diff.graph_only_internal,
            "graph_only_documents": diff.graph_only_documents,
        },
        args.format,
    )
    mismatches = len(diff.har_only) + len(diff.graph_only)
    if mismatches and args.strict:
        return 1
    return 0


def _engine_from_file(path: str) -> FilterEngine:
    data = Path(path).read_bytes()
    digest = hashlib.sha256(data).hexdigest()
    print(f"filter list {path} sha256={digest}", file=sys.stderr)
    return FilterEngine(parse_filter_list(data.decode("utf-8")))


def _cmd_third_parties(args) -> int:
    corpus = bundlemod.load_corpus_manifest(args.corpus)
    engine = _engine_from_file(args.list) if args.list else None
    report = third_party_prevalence(
        bundlemod.iter_corpus(corpus, check=not args.no_check),
        engine,
        min_first_parties=args.min_first_parties,
    )
    if args.top:
        report = report[: args.top]
    rows = [
        {
            "domain": t.domain,
            "first_parties": t.first_party_count,
            "requests": t.request_count,
            "tracker": t.tracker,
        }
        for t in report
    ]
    _emit_rows(rows, ["domain", "first_parties", "requests", "tracker"], args.format)
    return 0


def _cmd_attribute(args) -> int:
    corpus = bundlemod.load_corpus_manifest(args.corpus)
    origins, total = corpus_attribution(
        bundlemod.iter_corpus(corpus, check=not args.no_check), args.target
    )
    _emit_obj(
        {
            "target": args.target,
            "total": total,
            "origins": [{"origin": origin, "count": count} for origin, count in origins],
        },
        args.format,
    )
    return 0


def _cmd_synth(args) -> int:
    scenario = generate_scenario(args.seed, args.size, races=args.races)
    built, ledger = scenario_to_bundle(scenario)
    out = Path(args.output)
    bundlemod.save_bundle(built, out, as_dir=args.as_dir, compress=args.compress)
    if args.ledger:
        Path(args.ledger).write_text(
            json.dumps(ledger, sort_keys=True, indent=2) + "\n", "utf-8"
        )
    _emit_obj(
        {
            "path": str(out),
            "page_origin": built.page_origin,
            "nodes": len(built.graph),
            "edges": built.graph.edge_count,
            "har_entries": len(built.har),
        },
        args.format,
    )
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--format", choices=("json", "csv"), default="json", help="output format"
    )
    common.add_argument(
        "--strict",
        action="store_true",
        help="exit 1 when a reporting command finds problems",
    )
    common.add_argument(
        "--no-check",
        action="store_true",
        help="load bundles without enforcing cross-member invariants",
    )

    parser = argparse.ArgumentParser(
        prog="webbundle", description="Inspect and analyze .web page-capture bundles."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="report bundle invariant findings")
    p.add_argument("bundle", nargs="+")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("stats", parents=[common], help="summarize a bundle")
    p.add_argument("bundle")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("pack", parents=[common], help="pack a bundle directory into a .web file")
    p.add_argument("directory")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--compress", action="store_true", help="gzip the text members")
    p.set_defaults(func=_cmd_pack)

    p = sub.add_parser("query", parents=[common], help="run an analysis over one bundle")
    p.add_argument("what", choices=("api-calls", "handlers", "requests"))
    p.add_argument("bundle")
    p.add_argument(
        "--apis",
        help="restrict api-calls to a feature list name or a file of method names",
    )
    p.add_argument(
        "--attribute",
        action="store_true",
        help="with requests: add context and responsible party",
    )
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser(
        "diff-har", parents=[common], help="reconcile HAR entries against graph requests"
    )
    p.add_argument("bundle")
    p.add_argument("--internal-urls", help="file of browser-internal URL prefixes")
    p.set_defaults(func=_cmd_diff_har)

    p = sub.add_parser(
        "third-parties", parents=[common], help="third-party prevalence across a corpus"
    )
    p.add_argument("--corpus", required=True, help="corpus manifest JSON")
    p.add_argument("--list", help="filter list for tracker flags")
    p.add_argument("--top", type=int, default=0, help="keep only the top N domains")
    p.add_argument("--min-first-parties", type=int, default=2)
    p.set_defaults(func=_cmd_third_parties)

    p = sub.add_parser(
        "attribute", parents=[common], help="count requests attributed to one party"
    )
    p.add_argument("--corpus", required=True, help="corpus manifest JSON")
    p.add_argument("--target", required=True, help="responsible party (domain or first-party)")
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic bundle")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, required=True, help="approximate event count")
    p.add_argument("--races", type=int, default=None, help="inject capture races")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--as-dir", action="store_true", help="write a directory, not a container")
    p.add_argument("--compress", action="store_true")
    p.add_argument("--ledger", help="also write the ground-truth ledger JSON here")
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WebBundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
