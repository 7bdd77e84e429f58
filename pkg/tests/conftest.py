import pytest

# one line per numbered acceptance check, printed after the run
_CRITERIA = {}


@pytest.fixture
def record():
    """Register the summary line for one numbered acceptance check.

    The line is recorded before the test asserts, so a failing check
    still reports its measured numbers.
    """
    def _rec(num, ok, detail):
        _CRITERIA[int(num)] = (bool(ok), str(detail))
    return _rec


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        ok, detail = _CRITERIA[num]
        terminalreporter.write_line(
            "[criterion %d] %s  %s" % (num, "PASS" if ok else "FAIL", detail))
