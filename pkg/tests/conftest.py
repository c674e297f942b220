import pytest

_ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion():
    """Record ``criterion(n, passed, detail)``; lines are echoed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = (number, bool(passed), detail)
        _ACCEPTANCE.append(line)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}")
