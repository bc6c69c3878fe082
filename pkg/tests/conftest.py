import pytest

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def record():
    """record(criterion, ok, detail) stores one acceptance verdict."""
    def _record(key, ok, detail):
        ACCEPTANCE[key] = (bool(ok), detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {key}: {detail}")
