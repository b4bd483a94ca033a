import pytest

# (criterion number, description, passed, detail) collected by test_acceptance
ACCEPTANCE_LINES: list[tuple[int, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {num:>2}. {name}: {detail}")


@pytest.fixture
def acceptance():
    def record(num: int, name: str, ok: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append((num, name, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'}  {num:>2}. {name}: {detail}")
        assert ok, f"criterion {num} ({name}) failed: {detail}"
    return record
