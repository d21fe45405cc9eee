import time

import pytest

_LINES: list[str] = []


class Criterion:
    """Times one acceptance criterion and records a PASS/FAIL line for it."""

    def __init__(self, number: int, title: str, limit_s: float):
        self.number, self.title, self.limit_s = number, title, limit_s
        self.start = time.perf_counter()

    def finish(self, ok: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.limit_s
        passed = ok and in_time
        timing = f"{elapsed:.1f}s of {self.limit_s:g}s" + ("" if in_time else " OVER TIME")
        line = f"{'PASS' if passed else 'FAIL'} criterion {self.number:2d} {self.title}: {detail} [{timing}]"
        _LINES.append(line)
        print(line)
        return passed


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES, key=lambda s: int(s.split()[2])):
        terminalreporter.write_line(line)
