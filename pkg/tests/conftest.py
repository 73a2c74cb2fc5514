import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gnnplus.graph import Graph
from gnnplus.tensor import get_tape

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(autouse=True)
def _fresh_tape():
    get_tape().clear()
    yield
    get_tape().clear()


def random_graph(rng, n, p=0.4, node_dim=3, edge_dim=None, self_loops=False, label=None):
    iu, ju = np.triu_indices(n, k=0 if self_loops else 1)
    keep = rng.random(iu.size) < p
    if self_loops:
        keep &= (iu != ju) | (rng.random(iu.size) < 0.3)
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    feat = rng.standard_normal((n, node_dim))
    ef = None if edge_dim is None else rng.standard_normal((len(edges), edge_dim))
    return Graph.from_undirected(n, edges, feat, ef, label=label)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
