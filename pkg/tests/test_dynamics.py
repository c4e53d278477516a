import numpy as np
import pytest

from morseflow.errors import MorseflowError
from morseflow.geometry import Point, builtin_system
from morseflow.critical import find_critical_points
from morseflow.dynamics import (
    FlowSettings,
    flow,
    flow_trajectory,
    flow_with_jacobian,
    limit_point,
    scan_flow,
    trajectory_to_csv,
)


def test_settings_validate_positive():
    with pytest.raises(MorseflowError):
        FlowSettings(rel_tol=-1.0)
    loose = FlowSettings().loosened(10.0)
    assert loose.rel_tol == pytest.approx(1e-9)


def test_flow_decreases_the_function():
    for family in ("torus", "peanut"):
        sys_ = builtin_system(family)
        rng = np.random.default_rng(3)
        for _ in range(5):
            p = sys_.random_point(rng)
            q = flow(sys_, p, 1.5)
            assert sys_.value(q.chart, q.array) <= sys_.value(p.chart, p.array) + 1e-10


def test_flow_composition_semigroup():
    sys_ = builtin_system("torus")
    p = Point.of(0, np.array([0.31, 0.72]))
    q1 = flow(sys_, flow(sys_, p, 0.7), 0.5)
    q2 = flow(sys_, p, 1.2)
    assert sys_.distance(q1, q2) < 1e-8


def test_backward_flow_inverts_forward():
    sys_ = builtin_system("peanut")
    p = Point.of(0, np.array([0.3, 0.4]))
    q = flow(sys_, p, 1.0)
    back = flow(sys_, q, -1.0)
    assert sys_.distance(back, p) < 1e-7


def test_backward_cap_enforced():
    sys_ = builtin_system("circle")
    with pytest.raises(MorseflowError):
        flow(sys_, Point.of(0, np.array([0.3])), -1000.0)


def test_jacobian_matches_finite_differences():
    sys_ = builtin_system("torus")
    p = Point.of(0, np.array([0.21, 0.64]))
    t = 1.3
    q, J = flow_with_jacobian(sys_, p, t)
    h = 1e-6
    for i in range(2):
        d = np.zeros(2)
        d[i] = h
        qp = flow(sys_, Point.of(0, p.array + d), t)
        qm = flow(sys_, Point.of(0, p.array - d), t)
        col = sys_.displacement(qm, qp) / (2 * h)
        assert np.allclose(col, J[:, i], atol=1e-6)


def test_long_jacobian_flow_stays_fast_and_finite():
    # exponential growth of the variational matrix must not stall the stepper
    sys_ = builtin_system("sphere_height")
    p = Point.of(1, np.array([2e-15, 1e-15]))
    q, J = flow_with_jacobian(sys_, p, 30.0)
    assert np.all(np.isfinite(J))
    assert np.linalg.norm(J) > 1e10


def test_limit_point_finds_the_basin():
    sys_ = builtin_system("circle", a=0.0)
    cps = find_critical_points(sys_)
    minimum = next(c for c in cps if c.index == 0)
    lim = limit_point(sys_, Point.of(0, np.array([0.3])), cps)
    assert lim == minimum.id


def test_scan_flow_reports_closest_approach():
    sys_ = builtin_system("circle", a=0.0)
    cps = find_critical_points(sys_)
    minimum = next(c for c in cps if c.index == 0)
    limit, approach = scan_flow(
        sys_, Point.of(0, np.array([0.3])), cps, FlowSettings(), targets=cps
    )
    assert limit == minimum.id
    dist, t_min = approach[minimum.id]
    assert dist < 1e-3
    assert t_min > 0.0


def test_trajectory_values_monotone_and_csv_shape():
    sys_ = builtin_system("torus")
    traj = flow_trajectory(sys_, Point.of(0, np.array([0.3, 0.6])), 2.0, samples=50)
    vals = np.asarray(traj.values)
    assert np.all(np.diff(vals) <= 1e-10)
    text = trajectory_to_csv(traj)
    lines = text.strip().splitlines()
    assert lines[0].split(",")[:2] == ["t", "chart"]
    assert len(lines) == len(traj.times) + 1
