import re

_CRITERION = re.compile(r"test_criterion_(\d+)_")
_titles: dict[str, str] = {}
_results: dict[int, tuple[str, str, str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        doc = getattr(item.function, "__doc__", None) or item.name
        _titles[item.nodeid] = doc.strip().splitlines()[0]


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    # keep the call phase, or a setup/teardown failure
    if report.when != "call" and report.outcome == "passed":
        return
    detail = dict(report.user_properties).get("detail", "")
    _results[int(m.group(1))] = (report.outcome, _titles.get(report.nodeid, ""), detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_results):
        outcome, title, detail = _results[k]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {k}: {status}  {title}  {detail}".rstrip())
