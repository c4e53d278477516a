import numpy as np
import pytest

from morseflow.errors import MorseflowError
from morseflow.geometry import builtin_system
from morseflow.critical import find_critical_points
from morseflow.dynamics import FlowSettings, limit_point
from morseflow.invariants import (
    cell_samples,
    count_trajectories,
    equal_index_connection,
    flowed_sphere_degree,
    map_cell_count,
    trajectory_records,
)
from morseflow.maps import identity_map


@pytest.fixture(scope="module")
def circle():
    sys_ = builtin_system("circle", a=0.2)
    return sys_, find_critical_points(sys_)


@pytest.fixture(scope="module")
def peanut():
    sys_ = builtin_system("peanut")
    return sys_, find_critical_points(sys_)


def test_circle_trajectories_cancel(circle):
    sys_, cps = circle
    maximum = next(c for c in cps if c.index == 1)
    minimum = next(c for c in cps if c.index == 0)
    records = trajectory_records(sys_, maximum, minimum, cps)
    assert len(records) == 2
    assert sorted(r.sign for r in records) == [-1, 1]
    assert count_trajectories(sys_, maximum, minimum, cps) == 0


def test_trajectory_records_locate_actual_connections(circle):
    sys_, cps = circle
    maximum = next(c for c in cps if c.index == 1)
    minimum = next(c for c in cps if c.index == 0)
    for rec in trajectory_records(sys_, maximum, minimum, cps):
        assert rec.margin > 1e-3
        assert rec.residual < 1e-9
        # the located point flows into the target
        assert limit_point(sys_, rec.location, cps) == minimum.id


def test_count_flips_with_source_orientation(circle):
    sys_, cps = circle
    maximum = next(c for c in cps if c.index == 1)
    minimum = next(c for c in cps if c.index == 0)
    flipped = maximum.with_flipped_orientation()
    records = trajectory_records(sys_, maximum, minimum, cps)
    flipped_records = trajectory_records(sys_, flipped, minimum, cps)
    def by_location(rs):
        return sorted((round(r.location.array[0], 6), r.sign) for r in rs)

    for (p1, s1), (p2, s2) in zip(by_location(records), by_location(flipped_records)):
        assert p1 == pytest.approx(p2, abs=1e-5)
        assert s1 == -s2


def test_index_gap_must_be_one(circle):
    sys_, cps = circle
    maximum = next(c for c in cps if c.index == 1)
    with pytest.raises(MorseflowError):
        count_trajectories(sys_, maximum, maximum, cps)


def test_peanut_saddle_counts(peanut):
    sys_, cps = peanut
    saddle = next(c for c in cps if c.index == 1)
    tops = [c for c in cps if c.index == 2]
    counts = sorted(count_trajectories(sys_, t, saddle, cps) for t in tops)
    assert counts == [-1, 1]


def test_flowed_sphere_degree_circle(circle):
    sys_, cps = circle
    maximum = next(c for c in cps if c.index == 1)
    minimum = next(c for c in cps if c.index == 0)
    assert flowed_sphere_degree(sys_, maximum, minimum, cps) == 0


def test_cell_samples_stay_in_the_cell(peanut):
    sys_, cps = peanut
    top = next(c for c in cps if c.index == 2)
    pts = cell_samples(sys_, top, cps, FlowSettings(), samples=12)
    assert len(pts) == 12
    for p in pts:
        assert sys_.value(p.chart, p.array) <= top.value + 1e-9


def test_no_equal_index_connections_on_peanut(peanut):
    sys_, cps = peanut
    tops = [c for c in cps if c.index == 2]
    assert not equal_index_connection(sys_, tops[0], tops[1], cps, FlowSettings())


def test_map_cell_count_identity_diagonal(circle):
    sys_, cps = circle
    phi = identity_map(sys_)
    maximum = next(c for c in cps if c.index == 1)
    minimum = next(c for c in cps if c.index == 0)
    assert map_cell_count(phi, maximum, cps, sys_, maximum, cps) == 1
    assert map_cell_count(phi, minimum, cps, sys_, minimum, cps) == 1
