import numpy as np
import pytest

from lyapnet.network import NetShape, init


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_net(shape, seed, scale=1.0):
    """Network with all parameters (biases included) drawn from N(0, scale^2)."""
    net = init(shape, seed)
    net.theta[:] = np.random.default_rng(seed).normal(scale=scale, size=net.theta.size)
    return net


@pytest.fixture
def small_net():
    return random_net(NetShape(3, 2, 2, 4), seed=7)


_ACCEPTANCE = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion; returns ``ok``."""

    def record(number, title, ok, detail):
        _ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
