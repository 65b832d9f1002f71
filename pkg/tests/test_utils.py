from datetime import datetime, timezone

from webbundle.utils import (
    format_rfc3339,
    host_of,
    normalize_url_for_match,
    origin_of,
    parse_rfc3339,
)


def test_host_of_lowercases_and_strips_port():
    assert host_of("https://WWW.Example.COM:8443/a?b#c") == "www.example.com"
    assert host_of("http://example.com") == "example.com"
    assert host_of("not a url") == ""


def test_origin_of_default_ports_omitted():
    assert origin_of("https://example.com:443/path") == "https://example.com"
    assert origin_of("http://example.com:80/") == "http://example.com"
    assert origin_of("http://example.com:8080/") == "http://example.com:8080"
    assert origin_of("ws://example.com:80/") == "ws://example.com"
    assert origin_of("data:text/plain,hi") == ""


def test_normalize_url_for_match():
    assert (
        normalize_url_for_match("HTTPS://Example.COM/Path?Q=1#frag")
        == "https://example.com/Path?Q=1"
    )
    # Path case is preserved; only scheme/host fold.
    assert normalize_url_for_match("http://a.example/CaseSensitive") == "http://a.example/CaseSensitive"


def test_parse_rfc3339_accepts_z_suffix():
    moment = parse_rfc3339("2026-03-01T12:00:00.250Z")
    assert moment == datetime(2026, 3, 1, 12, 0, 0, 250000, tzinfo=timezone.utc)


def test_parse_rfc3339_accepts_numeric_offset():
    moment = parse_rfc3339("2026-03-01T13:30:00+01:30")
    assert moment is not None
    assert moment == datetime(2026, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


def test_parse_rfc3339_rejects_naive_and_garbage():
    assert parse_rfc3339("2026-03-01T12:00:00") is None
    assert parse_rfc3339("yesterday") is None
    assert parse_rfc3339("") is None
    assert parse_rfc3339(None) is None


def test_format_rfc3339_round_trip():
    raw = "2026-03-01T12:00:00.500Z"
    assert format_rfc3339(parse_rfc3339(raw)) == raw
    # Non-UTC inputs are rendered in UTC.
    shifted = parse_rfc3339("2026-03-01T13:00:00.500+01:00")
    assert format_rfc3339(shifted) == raw
