import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aggsample.topology import Deployment, NetworkGraph, build_deployment, build_network

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def graph_from_edges(positions, edges) -> NetworkGraph:
    """Graph with explicit edges; lengths are Euclidean."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    nbrs = [set() for _ in range(n)]
    lengths = {}
    for a, b in edges:
        a, b = min(a, b), max(a, b)
        nbrs[a].add(b)
        nbrs[b].add(a)
        lengths[(a, b)] = float(np.hypot(*(pos[a] - pos[b])))
    span = np.ptp(pos, axis=0) + 1.0
    dep = Deployment(pos, arena=(float(span[0]), float(span[1])), origin=tuple(pos.min(axis=0) - 0.5))
    return NetworkGraph(dep, tuple(tuple(sorted(s)) for s in nbrs), lengths)


def line_graph(n: int) -> NetworkGraph:
    return graph_from_edges([(i, 0) for i in range(n)], [(i, i + 1) for i in range(n - 1)])


def random_graph(n: int, seed: int, k_min: int = 3) -> NetworkGraph:
    return build_network(build_deployment("uniform", n, seed), k_min=k_min)


@pytest.fixture
def line5():
    return line_graph(5)


_REPORT = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def acceptance_report(pytestconfig):
    """``record(criterion, ok, detail)`` collects one line per acceptance criterion."""
    lines = pytestconfig.stash.setdefault(_REPORT, {})

    def record(criterion: int, ok: bool, detail: str) -> None:
        lines[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        print(lines[criterion])

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
