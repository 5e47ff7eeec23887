import pytest

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        props = dict(item.user_properties)
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA.append((mark.args[0], mark.args[1], item.name, status, rep.duration, props))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num, title, name, status, dur, props in sorted(_CRITERIA, key=lambda r: (r[0], r[2])):
        detail = props.get("detail", "")
        tr.write_line(f"criterion {num} {status}: {title} [{name}, {dur:.1f}s]" + (f" {detail}" if detail else ""))
    for num, title, name, status, dur, props in sorted(_CRITERIA, key=lambda r: (r[0], r[2])):
        if "table" in props:
            tr.write_line("")
            tr.write_line(f"criterion {num} ({name}) posterior summary:")
            for line in props["table"].splitlines():
                tr.write_line("  " + line)
