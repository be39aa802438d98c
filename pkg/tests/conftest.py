import numpy as np
import pytest

from atvgarch import DGPS, simulate


@pytest.fixture(scope="session")
def dgp3_1000():
    cfg = DGPS["DGP3"]
    return simulate(cfg.spec, 1000, seed=101)


@pytest.fixture(scope="session")
def dgp3_5000():
    cfg = DGPS["DGP3"]
    return simulate(cfg.spec, 5000, seed=202)


@pytest.fixture(scope="session")
def dgp4_2500():
    cfg = DGPS["DGP4"]
    return simulate(cfg.spec, 2500, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion."""

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
