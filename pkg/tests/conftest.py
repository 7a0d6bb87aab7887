import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail verdict line for an acceptance criterion."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}"
        if detail:
            line += f" | {detail}"
        _LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
