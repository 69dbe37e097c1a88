import pytest

ACCEPTANCE = {}


@pytest.fixture
def accept(request):
    """Record one PASS/FAIL line per acceptance check; unfinished checks count as FAIL."""
    marker = request.node.get_closest_marker("acceptance")
    num, title = marker.args
    ACCEPTANCE[num] = f"[{num}] FAIL  {title} (did not complete)"

    def check(ok, detail):
        line = f"[{num}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE[num] = line
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
