"""Collects the acceptance verdict lines and repeats them after the run."""
import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    def record(number, label, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {label}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print("\n" + line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
