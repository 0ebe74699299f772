import numpy as np
import pytest

from splitlora.network import ToyNet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_net(d_in=5, width=6, depth=3, n_classes=3, activation="tanh", seed=0):
    """Tiny network with a random (non-zero) head so every weight gets gradient."""
    net = ToyNet.create(d_in, width, depth, activation, seed=seed, n_classes=n_classes)
    head_rng = np.random.default_rng(seed + 1)
    net.head_w = head_rng.standard_normal(net.head_w.shape)
    net.head_b = head_rng.standard_normal(net.head_b.shape)
    return net


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(label: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
