import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggsample.exceptions import DuplicateDevice, InvalidArgument, ParseError
from aggsample.topology import (
    DEPLOYMENT_KINDS,
    Deployment,
    build_deployment,
    build_network,
    load_stations,
    read_station_ids,
)


def test_grid_of_four_is_the_unit_square():
    dep = build_deployment("grid", 4, seed=123)
    assert dep.positions.tolist() == [[0, 0], [1, 0], [0, 1], [1, 1]]


def test_grid_1000_is_a_truncated_32_lattice():
    dep = build_deployment("grid", 1000, seed=5)
    assert dep.n == 1000
    assert dep.arena == (32, 32)
    xs, ys = dep.positions.T
    assert set(xs) == set(range(32))
    assert ys.max() == 31 and np.count_nonzero(ys == 31) == 1000 - 31 * 32
    g = build_network(dep)
    # unit spacing
    assert min(g.edge_length.values()) == pytest.approx(1.0)


def test_pgrid_jitter_is_bounded():
    for seed in range(100):
        grid = build_deployment("grid", 100, seed)
        pert = build_deployment("pgrid", 100, seed)
        assert np.abs(pert.positions - grid.positions).max() <= 0.45


def test_zero_devices_rejected():
    with pytest.raises(InvalidArgument):
        build_deployment("grid", 0, 1)
    with pytest.raises(InvalidArgument):
        build_deployment("hexagon", 10, 1)


@pytest.mark.parametrize("kind", DEPLOYMENT_KINDS)
def test_positions_inside_arena_and_distinct(kind):
    dep = build_deployment(kind, 300, seed=7)
    assert all(dep.contains(p) for p in dep.positions)
    assert len({tuple(p) for p in dep.positions.tolist()}) == dep.n


@pytest.mark.parametrize("kind", DEPLOYMENT_KINDS)
def test_deployment_is_deterministic(kind):
    a = build_deployment(kind, 150, seed=99)
    b = build_deployment(kind, 150, seed=99)
    assert a.positions.tobytes() == b.positions.tobytes()
    ga, gb = build_network(a), build_network(b)
    assert ga.neighbors == gb.neighbors and ga.edge_length == gb.edge_length


def test_exp_deployment_is_skewed():
    dep = build_deployment("exp", 2000, seed=3)
    ys = dep.positions[:, 1] - dep.origin[1]
    assert np.median(ys) < dep.arena[1] / 2 * 0.8
    xs = dep.positions[:, 0] - dep.origin[0]
    assert abs(np.median(xs) - dep.arena[0] / 2) < dep.arena[0] * 0.1


def test_two_devices_single_edge():
    dep = Deployment(np.array([[0.0, 0.0], [3.0, 4.0]]), arena=(5, 5))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        g = build_network(dep, k_min=8)
    assert g.edges() == [(0, 1)]
    assert g.length(0, 1) == 5.0
    assert g.degenerate
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_three_by_three_centre_sees_everyone():
    g = build_network(build_deployment("grid", 9, 0), k_min=8)
    assert g.neighbors[4] == (0, 1, 2, 3, 5, 6, 7, 8)


def test_two_clusters_get_exactly_one_bridge():
    rng = np.random.default_rng(4)
    left = rng.uniform(0, 2, size=(10, 2))
    right = rng.uniform(0, 2, size=(10, 2)) + [20, 0]
    pos = np.vstack([left, right])
    g = build_network(Deployment(pos, arena=(23, 3)), k_min=3)
    assert g.is_connected()
    cross = [(a, b) for a, b in g.edges() if (a < 10) != (b < 10)]
    assert len(cross) == 1
    # brute force: the bridge is the closest cross pair
    best = min(itertools.product(range(10), range(10, 20)),
               key=lambda ab: np.hypot(*(pos[ab[0]] - pos[ab[1]])))
    assert cross[0] == best


@given(kind=st.sampled_from(DEPLOYMENT_KINDS), n=st.integers(2, 120), seed=st.integers(0, 2**32),
       k=st.integers(1, 10))
def test_graph_invariants(kind, n, seed, k):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        g = build_network(build_deployment(kind, n, seed), k_min=k)
    for d, nb in enumerate(g.neighbors):
        assert d not in nb
        assert list(nb) == sorted(nb)
        for j in nb:
            assert d in g.neighbors[j]
    assert g.is_connected()
    if k < n:
        pos = g.positions
        for d in range(n):
            dist = np.hypot(*(pos - pos[d]).T)
            dist[d] = np.inf
            kth = np.sort(dist)[k - 1]
            assert all(j in g.neighbors[d] for j in np.flatnonzero(dist < kth))
            assert g.degree(d) >= k
    for (a, b), length in g.edge_length.items():
        assert length == pytest.approx(float(np.hypot(*(g.positions[a] - g.positions[b]))))


def test_load_stations_bounding_box(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("# id,x,y\n0,0,0\n\n1,3,4\n")
    dep = load_stations(f)
    assert dep.n == 2
    assert dep.arena == pytest.approx((3.03, 4.04))
    assert all(dep.contains(p) for p in dep.positions)
    assert read_station_ids(f) == [0, 1]


def test_load_stations_keeps_original_ids(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("17,0,0\n4,1,0\n9,0,1\n")
    assert read_station_ids(f) == [17, 4, 9]
    assert load_stations(f).n == 3


def test_load_stations_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ParseError):
        load_stations(empty)
    dup = tmp_path / "dup.csv"
    dup.write_text("0,0,0\n0,1,1\n")
    with pytest.raises(DuplicateDevice):
        load_stations(dup)
    bad = tmp_path / "bad.csv"
    bad.write_text("0,0,0\n1,x,2\n")
    with pytest.raises(ParseError, match="line 2") as info:
        load_stations(bad)
    assert info.value.line == 2
