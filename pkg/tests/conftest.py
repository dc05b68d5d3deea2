import pytest

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n, title = marker.args
    note = getattr(item, "criterion_note", "")
    _criteria[n] = ("PASS" if report.passed else "FAIL", title, note)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, title, note = _criteria[n]
        line = f"criterion {n:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" [{note}]" if note else ""))


@pytest.fixture
def note(request):
    """Attach a short measurement string to the criterion summary line."""
    def record(text: str) -> None:
        request.node.criterion_note = text
    return record
