import pytest

ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE, key=lambda c: (len(c), c)):
        passed, note = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit}: {'PASS' if passed else 'FAIL'}  {note}")
