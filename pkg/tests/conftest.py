from __future__ import annotations

from pathlib import Path

import pytest

from webbundle.synth import generate_scenario, scenario_to_bundle

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def small_bundle():
    bundle, ledger = scenario_to_bundle(generate_scenario(5, 30, races=0))
    return bundle, ledger


# The acceptance tests each cover one numbered criterion; echo a stable
# pass/fail line per criterion at the end of the run even when pytest is
# capturing output.
def pytest_terminal_summary(terminalreporter, exitstatus, config):
    del exitstatus, config
    lines: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(outcome, ()):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid or getattr(report, "when", "call") != "call":
                continue
            name = nodeid.split("::")[-1]
            lines[name] = "PASS" if outcome == "passed" else "FAIL"
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(lines):
        terminalreporter.write_line(f"{name}: {lines[name]}")
