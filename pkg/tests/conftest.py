from __future__ import annotations

import pytest

from helpers import pair_instance
from lllsample import LLLInstance, load_bundled


@pytest.fixture
def pair() -> LLLInstance:
    return pair_instance()


@pytest.fixture
def path3() -> LLLInstance:
    return load_bundled("path3")


@pytest.fixture
def chain4() -> LLLInstance:
    return load_bundled("chain-4")


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, in criterion order."""
    lines = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid or rep.when not in ("call", "setup"):
                continue
            name = nodeid.rsplit("::", 1)[-1]
            if not name.startswith("test_criterion_"):
                continue
            number = int(name.split("_")[2])
            text = dict(rep.user_properties).get("acceptance")
            if text is None:
                text = f"criterion {number}: FAIL (no result, {rep.when} {rep.outcome})"
            elif rep.outcome != "passed" and " PASS" in text:
                text = text.replace(" PASS", " FAIL", 1)
            lines[number] = text
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
