import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line for an acceptance criterion; returns the pass flag."""

    def emit(num, title, ok, detail, elapsed, limit):
        passed = bool(ok) and elapsed < limit
        line = (f"criterion {num:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
                f"  [{elapsed:.2f} s, limit {limit:g} s]")
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
