import numpy as np
import pytest

from sizefield import shapes


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def finned():
    return shapes.finned_block()


_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    def record(label: str, ok: bool, detail: str):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
