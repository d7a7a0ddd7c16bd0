import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggsample.exceptions import InvalidArgument, ParseError
from aggsample.signals import (
    SignalSpec,
    constant,
    dynamic,
    gauss,
    load_signal_csv,
    make_signal,
    multigauss,
    read_sensor,
    recorded_signal,
    uniform,
)
from aggsample.topology import build_deployment, build_network


@pytest.fixture(scope="module")
def grid100():
    return build_deployment("grid", 100, 0)


def test_constant_everywhere(grid100):
    f = make_signal(constant(5), grid100, 1)
    assert f.evaluate((3.3, 1.7), 12.0) == 5
    assert read_sensor(make_signal(constant(1), grid100), 42, grid100, 7.0) == 1


def test_gauss_peaks_at_its_centre(grid100):
    f = make_signal(gauss(amplitude=10), grid100)
    assert f.evaluate(grid100.center) == 10
    assert f.values().max() <= 10


def test_gauss_default_spread_is_a_quarter_side(grid100):
    f = make_signal(gauss(), grid100)
    side = max(grid100.arena)
    cx, cy = grid100.center
    assert f.evaluate((cx + side / 4, cy)) == pytest.approx(10 * math.exp(-0.5))


def test_multigauss_at_centre_matches_closed_form(grid100):
    f = make_signal(multigauss(amplitude=9), grid100)
    side = max(grid100.arena)
    spread = side / 4
    half_diag2 = 2 * (side / 2) ** 2
    tail = 3 * math.exp(-half_diag2 / (2 * spread ** 2))
    assert f.evaluate(grid100.center) == pytest.approx(3 + 2 * tail)
    corner = grid100.origin
    far = (corner[0] + side, corner[1] + side)
    assert f.evaluate(corner) == pytest.approx(f.evaluate(far))


def test_uniform_frozen_within_run(grid100):
    f = make_signal(uniform(), grid100, seed=3)
    assert read_sensor(f, 10, grid100, 0.0) == read_sensor(f, 10, grid100, 250.0)
    v = f.values()
    assert v.min() >= 0 and v.max() < 1
    assert not np.array_equal(v, make_signal(uniform(), grid100, seed=4).values())
    with pytest.raises(InvalidArgument):
        f.evaluate((0, 0))


def test_uniform_neighbour_correlation_is_negligible():
    dep = build_deployment("grid", 1000, 0)
    g = build_network(dep)
    a, b = np.array(g.edges()).T
    rs = []
    for seed in range(100):
        v = make_signal(uniform(), dep, seed).values()
        rs.append(np.corrcoef(v[a], v[b])[0, 1])
    assert abs(np.mean(rs)) < 0.1
    assert max(abs(r) for r in rs) < 0.1


def test_dynamic_phase_arithmetic(grid100):
    L = 50.0
    f = make_signal(dynamic(constant(0), constant(1), phase_length=L), grid100)
    assert f.read(3, L / 2) == 0
    assert f.read(3, 1.5 * L) == 1
    assert f.read(3, 2.5 * L) == 0
    assert f.phase_at(L) == 1
    assert f.phase_start(3) == 3 * L


@given(t1=st.floats(0, 299.99), t2=st.floats(0, 299.99))
def test_static_within_phase(t1, t2):
    dep = build_deployment("grid", 16, 0)
    f = make_signal(dynamic(uniform(), gauss(), phase_length=300), dep, 5)
    assert np.array_equal(f.values(t1), f.values(t2))
    assert np.array_equal(f.values(t1 + 300), f.values(t2 + 300))


def test_spec_validation():
    with pytest.raises(InvalidArgument):
        SignalSpec("gauss", spread=0)
    with pytest.raises(InvalidArgument):
        SignalSpec("gauss", amplitude=math.nan)
    with pytest.raises(InvalidArgument):
        dynamic()
    with pytest.raises(InvalidArgument):
        dynamic(constant(), phase_length=0)
    with pytest.raises(InvalidArgument):
        SignalSpec("sine")


def test_pooled_std(grid100):
    assert make_signal(constant(3), grid100).pooled_std() == 0
    f = make_signal(dynamic(constant(0), constant(2)), grid100)
    assert f.pooled_std() == pytest.approx(1.0)


def test_recorded_signal_roundtrip(tmp_path, grid100):
    ids = list(range(100, 200))
    f = tmp_path / "v.csv"
    f.write_text("\n".join(f"{i},{(i - 100) / 10}" for i in reversed(ids)))
    values = load_signal_csv(f, ids)
    assert values[5] == 0.5
    field = recorded_signal(values, grid100)
    assert field.read(7) == 0.7
    with pytest.raises(InvalidArgument):
        recorded_signal(values[:5], grid100)


def test_signal_csv_errors(tmp_path):
    f = tmp_path / "v.csv"
    f.write_text("1,2.0\n")
    with pytest.raises(ParseError, match="no reading"):
        load_signal_csv(f, [1, 2])
    f.write_text("1,2.0\n7,1\n")
    with pytest.raises(ParseError, match="line 2"):
        load_signal_csv(f, [1, 2])
