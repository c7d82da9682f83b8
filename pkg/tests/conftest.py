import numpy as np
import pytest

from tdsbm.network import MultilayerNetwork


def random_network(rng, N, T, rate=0.5, connected=True):
    """Poisson counts; with ``connected`` every node gets a departure and an arrival."""
    A = rng.poisson(rate, size=(N, N, T))
    if connected:
        for i in range(N):
            A[i, (i + 1) % N, rng.integers(T)] += 1
    return MultilayerNetwork.from_dense(A)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_net(rng):
    return random_network(rng, 6, 4, rate=0.8)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
