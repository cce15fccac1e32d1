from __future__ import annotations

import pytest

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


class CriterionLog:
    def record(self, number: int, title: str, ok: bool, detail: str) -> bool:
        _CRITERIA[number] = (title, bool(ok), detail)
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}")
        return bool(ok)


@pytest.fixture(scope="session")
def criteria() -> CriterionLog:
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {number:>2}. {title}: {detail}")
    passed = sum(ok for _, ok, _ in _CRITERIA.values())
    terminalreporter.write_line(f"{passed}/{len(_CRITERIA)} criteria met")
