"""Per-criterion PASS/FAIL summary for tests marked ``criterion(id, title)``."""

import pytest

_RESULTS: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.outcome == "passed"):
        return
    cid, title = mark.args
    entry = _RESULTS.setdefault(
        cid, {"title": title, "passed": 0, "failed": [], "skipped": 0, "notes": []}
    )
    if report.when == "call":
        # values attached with the record_property fixture
        entry["notes"] += [f"{k}: {v}" for k, v in item.user_properties]
    if report.when == "call" and report.passed:
        entry["passed"] += 1
    elif report.skipped:
        entry["skipped"] += 1
    else:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_RESULTS, key=lambda c: (int(c.split("-")[0]), c)):
        e = _RESULTS[cid]
        if e["failed"]:
            status = "FAIL"
        elif e["passed"]:
            status = "PASS"
        else:
            status = "SKIP"
        detail = f" (failed: {', '.join(e['failed'])})" if e["failed"] else ""
        tr.write_line(f"criterion {cid:<12} {status}  {e['title']}{detail}")
        for note in e["notes"]:
            tr.write_line(f"    {note}")
