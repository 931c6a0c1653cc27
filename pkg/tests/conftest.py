import pytest

# filled by tests/test_acceptance.py: criterion number -> summary line
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return ok
    return record
