import numpy as np
import pytest

from community_gnar import build_network, equal_weights, max_stage, stage_adjacency
from community_gnar.experiments import five_node_model

ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


def random_connected_edges(rng, d, extra=0.2):
    """A random spanning tree plus extra random edges."""
    perm = rng.permutation(d) + 1
    edges = [(int(perm[i]), int(perm[rng.integers(0, i)])) for i in range(1, d)]
    for i in range(1, d + 1):
        for j in range(i + 1, d + 1):
            if rng.random() < extra:
                edges.append((i, j))
    return edges


@pytest.fixture
def five_node():
    return five_node_model()


@pytest.fixture
def ring():
    d = 6
    net = build_network([(i, i % d + 1) for i in range(1, d + 1)], d)
    stages = stage_adjacency(net, max_stage(net))
    return net, stages, equal_weights(net, stages)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
