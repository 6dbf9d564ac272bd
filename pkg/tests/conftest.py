import sys
from collections import OrderedDict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: "OrderedDict[str, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key, title): acceptance criterion this test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            key, title = m.args
            _criteria.setdefault(key, {"title": title, "tests": [], "failed": [], "ran": 0})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    entry = _criteria[m.args[0]]
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        entry["ran"] += 1
        entry["tests"].append(item.name)
        if rep.outcome != "passed":
            entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key, e in _criteria.items():
        if e["ran"] == 0:
            continue
        status = "FAIL" if e["failed"] else "PASS"
        line = f"{status} criterion {key}: {e['title']}"
        if e["failed"]:
            line += f"  (failed: {', '.join(e['failed'])})"
        tr.write_line(line)
