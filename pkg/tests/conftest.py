import pytest

_CRITERIA = []


def log_criterion(label, passed, detail):
    _CRITERIA.append((label, bool(passed), detail))


@pytest.fixture
def criterion_log():
    """Collects one pass/fail line per acceptance criterion for the summary."""
    return log_criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _CRITERIA:
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}  [{detail}]")
