import numpy as np
import pytest

from morseflow.errors import MorseflowError
from morseflow.geometry import Point, builtin_system
from morseflow.maps import (
    circle_self_map,
    circle_to_torus_map,
    compose,
    constant_map,
    identity_map,
    torus_linear_map,
    torus_to_circle_map,
)


@pytest.fixture(scope="module")
def circle():
    return builtin_system("circle")


@pytest.fixture(scope="module")
def torus():
    return builtin_system("torus")


def test_identity_map_round_trips(torus):
    phi = identity_map(torus)
    p = Point.of(0, np.array([0.4, 0.9]))
    q = phi.eval(p)
    assert torus.distance(p, q) == 0.0
    assert np.allclose(phi.jacobian(p), np.eye(2))


def test_circle_self_map_winding(circle):
    phi = circle_self_map(circle, circle, 3, 0.2)
    q = phi.eval(Point.of(0, np.array([0.5])))
    assert q.array[0] == pytest.approx((3 * 0.5 + 0.2) % 1.0)
    assert phi.jacobian(q) == pytest.approx(np.array([[3.0]]))


def test_degree_zero_rejected(circle):
    with pytest.raises(MorseflowError):
        circle_self_map(circle, circle, 0)


def test_non_integer_linear_part_rejected(torus):
    with pytest.raises(MorseflowError):
        torus_linear_map(torus, torus, [[1.5, 0.0], [0.0, 1.0]])


def test_map_jacobians_match_finite_differences(circle, torus):
    maps = [
        circle_self_map(circle, circle, -2, 0.31),
        torus_linear_map(torus, torus, [[1, 1], [0, 1]], (0.2, 0.7)),
        circle_to_torus_map(circle, torus, (2, 1), (0.1, 0.4)),
        torus_to_circle_map(torus, circle, (1, 0), 0.2, 0.05),
    ]
    rng = np.random.default_rng(9)
    for phi in maps:
        for _ in range(5):
            p = phi.src.random_point(rng)
            assert phi.check_jacobian(p) < 1e-6, phi.label


def test_compose_applies_chain_rule(circle, torus):
    inner = circle_to_torus_map(circle, torus, (1, 2), (0.1, 0.2))
    outer = torus_to_circle_map(torus, circle, (1, 1), 0.05, 0.1)
    comp = compose(outer, inner)
    p = Point.of(0, np.array([0.37]))
    assert circle.distance(comp.eval(p), outer.eval(inner.eval(p))) < 1e-12
    assert comp.check_jacobian(p) < 1e-6


def test_compose_requires_matching_middle(circle, torus):
    inner = circle_self_map(circle, circle, 2)
    outer = torus_linear_map(torus, torus, [[1, 0], [0, 1]])
    with pytest.raises(MorseflowError):
        compose(outer, inner)


def test_constant_map(circle, torus):
    phi = constant_map(circle, torus, Point.of(0, np.array([0.3, 0.8])))
    p = Point.of(0, np.array([0.1]))
    assert np.allclose(phi.eval(p).array, [0.3, 0.8])
    assert np.allclose(phi.jacobian(p), 0.0)


def test_wobble_amplitude_limited(circle, torus):
    with pytest.raises(MorseflowError):
        torus_to_circle_map(torus, circle, (1, 0), 0.0, 0.5)
