import numpy as np
import pytest

from fedcontrib.data import LabeledDataset, generate_synthetic, split_per_class


def central_difference(f, x, h=1e-5):
    """Numerical gradient of scalar ``f`` at flat vector ``x``, one coordinate at a time."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def relative_error(a, b, floor=1e-7):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


@pytest.fixture(scope="session")
def blobs():
    """Small 4-class problem: (pool, validation)."""
    full = generate_synthetic(4, 6, 120, 0.1, seed=3)
    return split_per_class(full, 40)


@pytest.fixture
def tiny_dataset():
    x = np.array([[0.1, 0.9], [0.8, 0.2], [0.5, 0.5], [0.9, 0.9], [0.0, 0.1]])
    y = np.array([0, 1, 0, 1, 0])
    return LabeledDataset(x, y, 2)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    def record(label: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}" + (f"  ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
