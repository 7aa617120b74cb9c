import numpy as np
import pytest

from csiloc.csi_model import CsiWindow, LinkId

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(criterion: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_window(rng: np.random.Generator, n_links: int = 2, f: int = 8,
                  max_packets: int = 12, lo: float = 20.0, hi: float = 60.0) -> CsiWindow:
    profiles = {}
    for k in range(n_links):
        count = int(rng.integers(1, max_packets + 1))
        profiles[LinkId(0, k)] = rng.uniform(lo, hi, size=(count, f)).round(1)
    return CsiWindow(profiles)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
