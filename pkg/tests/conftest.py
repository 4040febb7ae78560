from __future__ import annotations

import os

import pytest

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool | None, str]] = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("FOLDTN_EXTENDED") == "1":
        return
    skip = pytest.mark.skip(reason="extended run; set FOLDTN_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
        ok, detail = ACCEPTANCE[key]
        status = "NOT RUN" if ok is None else ("PASS" if ok else "FAIL")
        terminalreporter.write_line(f"criterion {key:<5} {status:<8} {detail}")
