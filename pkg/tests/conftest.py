import numpy as np
import pytest

from flowmap import NetworkSpec, Rng, init_network


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def small_net():
    spec = NetworkSpec(d=2, l=2, hidden_layers=2, width=5)
    net = init_network(spec, Rng(7))
    # nonzero biases so bias paths are exercised
    for W in net.weights:
        W[:, -1] = Rng(8).normal(0.0, 0.3, W.shape[0])
    return net


def random_inputs(spec, n, seed=0):
    g = np.random.default_rng(seed)
    return g.uniform(-1, 1, (n, spec.d)), g.uniform(0, 1, (n, spec.l)), g.uniform(0, 0.1, n)


ACCEPTANCE_LINES: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
