"""Registrable domains (public-suffix rules) and URL filter lists.

Two building blocks for tracker analysis: a public-suffix resolver that
turns hosts into registrable domains, and a matcher for the common subset
of the Adblock Plus filter syntax (domain-anchored, plain, and exact
patterns with ``*``/``^`` wildcards and third-party/domain options).
"""

from __future__ import annotations

import ipaddress
import os
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import InputError
from .utils import host_of

_DATA_DIR = Path(__file__).parent / "data"
SUFFIX_DATA_ENV = "WEBBUNDLE_SUFFIX_DATA"
_DEFAULT_SUFFIX_FILE = "public_suffix_2026-07-01.dat"


# --- public suffixes ---------------------------------------------------------


@dataclass(frozen=True)
class SuffixResult:
    host: str
    public_suffix: str
    registrable_domain: str
    is_ip: bool = False
    host_is_suffix: bool = False


class PublicSuffixData:
    """Public-suffix rules: normal, wildcard (*.), and exception (!) entries."""

    def __init__(self, normal: set[str], wildcard: set[str], exception: set[str]):
        self._normal = frozenset(normal)
        self._wildcard = frozenset(wildcard)
        self._exception = frozenset(exception)

    @classmethod
    def from_text(cls, text: str) -> "PublicSuffixData":
        normal: set[str] = set()
        wildcard: set[str] = set()
        exception: set[str] = set()
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("//"):
                continue
            line = line.split()[0].lower()
            if line.startswith("!"):
                exception.add(line[1:])
            elif line.startswith("*."):
                wildcard.add(line[2:])
            else:
                normal.add(line)
        return cls(normal, wildcard, exception)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PublicSuffixData":
        if path is None:
            override = os.environ.get(SUFFIX_DATA_ENV)
            path = Path(override) if override else _DATA_DIR / _DEFAULT_SUFFIX_FILE
        return cls.from_text(Path(path).read_text("utf-8"))

    def split(self, host: str) -> SuffixResult:
        """Public suffix and registrable domain of a bare hostname.

        IP literals come back verbatim; a host that *is* a public suffix
        also comes back verbatim, flagged so callers can decide.  The
        operation is idempotent on its registrable_domain output.
        """
        if not isinstance(host, str) or not host:
            raise InputError("empty host")
        host = host.strip().lower().rstrip(".")
        if not host:
            raise InputError("empty host")
        try:
            ipaddress.ip_address(host.strip("[]"))
        except ValueError:
            pass
        else:
            return SuffixResult(host, "", host, is_ip=True)
        if "/" in host or ":" in host or " " in host:
            raise InputError(f"not a hostname: {host!r}")

        labels = host.split(".")
        if "" in labels:
            raise InputError(f"not a hostname: {host!r}")

        suffix_len = 0
        for i in range(len(labels)):
            if ".".join(labels[i:]) in self._exception:
                suffix_len = len(labels) - i - 1
                break
        else:
            best = 1  # the implicit "*" rule: any sole label is a suffix
            for i in range(len(labels)):
                if ".".join(labels[i:]) in self._normal:
                    best = max(best, len(labels) - i)
            for i in range(len(labels) - 1):
                if ".".join(labels[i + 1:]) in self._wildcard:
                    best = max(best, len(labels) - i)
            suffix_len = best

        public_suffix = ".".join(labels[len(labels) - suffix_len:])
        if suffix_len >= len(labels):
            return SuffixResult(host, public_suffix, host, host_is_suffix=True)
        registrable = ".".join(labels[len(labels) - suffix_len - 1:])
        return SuffixResult(host, public_suffix, registrable)


_default_data: PublicSuffixData | None = None
_default_source: str | None = None


def default_suffix_data() -> PublicSuffixData:
    global _default_data, _default_source
    source = os.environ.get(SUFFIX_DATA_ENV, "")
    if _default_data is None or source != _default_source:
        _default_data = PublicSuffixData.load()
        _default_source = source
    return _default_data


def registrable_domain(host: str) -> str:
    """Registrable domain of a host using the bundled suffix snapshot."""
    return default_suffix_data().split(host).registrable_domain


# --- filter lists ------------------------------------------------------------


class Anchor(Enum):
    DOMAIN = "domain"
    PLAIN = "plain"
    EXACT = "exact"


@dataclass
class FilterRule:
    pattern: str
    anchor: Anchor
    is_exception: bool = False
    third_party: bool | None = None
    domains_include: tuple[str, ...] = ()
    domains_exclude: tuple[str, ...] = ()
    raw: str = ""


@dataclass
class FilterList:
    rules: list[FilterRule]
    skipped: dict[str, int] = field(default_factory=dict)
    total_lines: int = 0

    @property
    def supported_count(self) -> int:
        return len(self.rules)


_SUPPORTED_OPTIONS = ("third-party", "~third-party")


def parse_filter_list(text: str) -> FilterList:
    """Parse the supported Adblock Plus subset, tallying what gets skipped.

    Skipped categories: comment, element_hiding, regex, unsupported_option,
    unsupported_pattern, blank.
    """
    rules: list[FilterRule] = []
    skipped: dict[str, int] = {}
    total = 0

    def skip(category: str) -> None:
        skipped[category] = skipped.get(category, 0) + 1

    for raw_line in text.splitlines():
        total += 1
        line = raw_line.strip()
        if not line:
            skip("blank")
            continue
        if line.startswith("!") or (line.startswith("[") and line.endswith("]")):
            skip("comment")
            continue
        if "##" in line or "#@#" in line or "#?#" in line or "#$#" in line:
            skip("element_hiding")
            continue

        is_exception = line.startswith("@@")
        body = line[2:] if is_exception else line

        options = ""
        if "$" in body:
            body, options = body.rsplit("$", 1)
        if len(body) > 1 and body.startswith("/") and body.endswith("/"):
            skip("regex")
            continue

        third_party: bool | None = None
        include: list[str] = []
        exclude: list[str] = []
        unsupported = False
        if options:
            for option in options.split(","):
                option = option.strip()
                if option == "third-party":
                    third_party = True
                elif option == "~third-party":
                    third_party = False
                elif option.startswith("domain="):
                    for domain in option[len("domain="):].split("|"):
                        domain = domain.strip().lower()
                        if not domain:
                            continue
                        if domain.startswith("~"):
                            exclude.append(domain[1:])
                        else:
                            include.append(domain)
                else:
                    unsupported = True
        if unsupported:
            skip("unsupported_option")
            continue

        if body.startswith("||"):
            pattern = body[2:]
            if pattern.endswith("|"):
                skip("unsupported_pattern")
                continue
            anchor = Anchor.DOMAIN
        elif body.startswith("|") and body.endswith("|") and len(body) >= 2:
            anchor = Anchor.EXACT
            pattern = body[1:-1]
        elif body.startswith("|"):
            anchor = Anchor.EXACT
            pattern = body[1:] + "*"
        elif body.endswith("|"):
            anchor = Anchor.EXACT
            pattern = "*" + body[:-1]
        else:
            anchor = Anchor.PLAIN
            pattern = body
        if not pattern.strip("*"):
            skip("unsupported_pattern")
            continue

        rules.append(
            FilterRule(
                pattern=pattern.lower(),
                anchor=anchor,
                is_exception=is_exception,
                third_party=third_party,
                domains_include=tuple(include),
                domains_exclude=tuple(exclude),
                raw=raw_line,
            )
        )
    return FilterList(rules, skipped, total)


@dataclass
class MatchDecision:
    blocked: bool
    rule: FilterRule | None = None
    exception: FilterRule | None = None


# ^ in a pattern: a separator character, or the end of the URL.
_SEPARATOR_CLASS = r"[^a-z0-9_.%\-]"


def _translate(pattern: str) -> str:
    out = []
    for ch in pattern:
        if ch == "*":
            out.append(".*")
        elif ch == "^":
            out.append(f"(?:{_SEPARATOR_CLASS}|$)")
        else:
            out.append(re.escape(ch))
    return "".join(out)


class FilterEngine:
    """Compiled-regex matcher over a parsed filter list.

    Matching is case-insensitive over the whole URL.  Exception (@@) rules
    override block rules regardless of their order in the list.
    """

    def __init__(self, filters: FilterList, suffixes: PublicSuffixData | None = None):
        self.filters = filters
        self._suffixes = suffixes
        self._compiled: list[tuple[FilterRule, re.Pattern[str]]] = []
        for rule in filters.rules:
            body = _translate(rule.pattern)
            if rule.anchor is Anchor.DOMAIN:
                regex = r"^[a-z][a-z0-9+.\-]*://(?:[^/?#]*\.)?" + body
            elif rule.anchor is Anchor.EXACT:
                regex = "^" + body + "$"
            else:
                regex = body
            self._compiled.append((rule, re.compile(regex)))

    def _split(self, host: str) -> str:
        data = self._suffixes or default_suffix_data()
        try:
            return data.split(host).registrable_domain
        except InputError:
            return host

    def _rule_applies(self, rule: FilterRule, url_host: str, page_host: str | None) -> bool:
        if rule.third_party is not None:
            if page_host is None:
                return False
            third = self._split(url_host) != self._split(page_host)
            if third != rule.third_party:
                return False
        if rule.domains_include or rule.domains_exclude:
            if page_host is None:
                return False
            if any(_domain_covers(d, page_host) for d in rule.domains_exclude):
                return False
            if rule.domains_include and not any(
                _domain_covers(d, page_host) for d in rule.domains_include
            ):
                return False
        return True

    def match(self, url: str, page_origin: str | None = None) -> MatchDecision:
        """Decide whether a URL is blocked in the context of a page origin."""
        subject = url.lower()
        url_host = host_of(url)
        page_host = host_of(page_origin) if page_origin else None
        matched: FilterRule | None = None
        for rule, regex in self._compiled:
            if rule.is_exception:
                continue
            if not self._rule_applies(rule, url_host, page_host):
                continue
            if regex.search(subject):
                matched = rule
                break
        if matched is None:
            return MatchDecision(False)
        for rule, regex in self._compiled:
            if not rule.is_exception:
                continue
            if not self._rule_applies(rule, url_host, page_host):
                continue
            if regex.search(subject):
                return MatchDecision(False, matched, rule)
        return MatchDecision(True, matched)


def _domain_covers(domain: str, host: str) -> bool:
    return host == domain or host.endswith("." + domain)
