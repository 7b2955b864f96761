from collections import OrderedDict

import pytest

_CRITERIA: "OrderedDict[str, list[tuple[str, bool, str]]]" = OrderedDict()


def record(criterion: str, check: str, passed: bool, detail: str = "") -> bool:
    """Register one sub-check of an acceptance criterion; returns ``passed``."""
    _CRITERIA.setdefault(criterion, []).append((check, bool(passed), detail))
    print(f"[{criterion}] {check}: {'PASS' if passed else 'FAIL'} {detail}")
    return bool(passed)


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, checks in _CRITERIA.items():
        ok = all(p for _, p, _ in checks)
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
        for check, p, detail in checks:
            tr.write_line(f"        {'ok  ' if p else 'FAIL'} {check} {detail}".rstrip())
