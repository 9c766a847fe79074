"""Collects acceptance-criterion outcomes and prints one line per criterion."""

from collections import defaultdict

_results = defaultdict(list)


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", marker.args[0]))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        ok = report.passed and not hasattr(report, "wasxfail")
        _results[props["criterion"]].append((report.nodeid.split("::")[-1], ok, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        checks = _results[n]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        details = "; ".join(f"{name}: {'ok' if ok else 'FAILED'}{' (' + d + ')' if d else ''}"
                            for name, ok, d in checks)
        tr.write_line(f"criterion {n:2d}: {status}  {details}")
