import numpy as np
import pytest

from l0babai.linalg import make_rng, qr_factorize

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for a criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> None:
        line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


@pytest.fixture
def rng():
    return make_rng(20240611)


def random_R(rng, n, scale=1.0):
    return qr_factorize(scale * rng.standard_normal((n, n)))[1]


@pytest.fixture
def remark10_R():
    return np.array([[0.8432, -0.6045], [0.0, 0.8980]])
