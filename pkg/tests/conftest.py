import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by the test")


@pytest.fixture
def measured(request):
    """Attach a one-line measurement summary to the acceptance report."""
    def note(text):
        request.node.user_properties.append(("measured", text))
    return note


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    name = dict(report.user_properties).get("criterion")
    if name is None:
        return
    notes = [v for k, v in report.user_properties if k == "measured"]
    prev = _criteria.get(name)
    ok = report.passed and (prev is None or prev[0])
    _criteria[name] = (ok, "; ".join(([prev[1]] if prev and prev[1] else []) + notes))


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: (len(s), s)):
        ok, detail = _criteria[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")
