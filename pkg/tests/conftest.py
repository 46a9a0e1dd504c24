import pytest

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance row: criterion(number, passed, detail)."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA.setdefault(number, []).append((bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        rows = _CRITERIA[number]
        ok = all(p for p, _ in rows)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({sum(p for p, _ in rows)}/{len(rows)} checks)")
        for passed, detail in rows:
            if not passed:
                terminalreporter.write_line(f"    failed: {detail}")
