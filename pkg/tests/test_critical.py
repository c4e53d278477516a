import json

import numpy as np
import pytest

from morseflow.geometry import builtin_system
from morseflow.critical import (
    catalogue_to_json,
    check_morse_smale,
    euler_characteristic,
    find_critical_points,
)

EXPECTED_INDICES = {
    "circle": [0, 1],
    "torus": [0, 1, 1, 2],
    "sphere_height": [0, 2],
    "peanut": [0, 1, 2, 2],
    "torus3": [0, 1, 1, 1, 2, 2, 2, 3],
}

EXPECTED_EULER = {"circle": 0, "torus": 0, "sphere_height": 2, "peanut": 2, "torus3": 0}


@pytest.mark.parametrize("family", sorted(EXPECTED_INDICES))
def test_catalogue_counts_and_indices(family):
    sys_ = builtin_system(family)
    cps = find_critical_points(sys_)
    assert sorted(c.index for c in cps) == sorted(EXPECTED_INDICES[family])
    assert euler_characteristic(cps) == EXPECTED_EULER[family]


def test_catalogue_is_deterministic():
    sys_ = builtin_system("torus", a=0.17, b=0.43)
    a = find_critical_points(sys_)
    b = find_critical_points(sys_)
    assert [c.id for c in a] == [c.id for c in b]
    for x, y in zip(a, b):
        assert np.allclose(x.point.array, y.point.array)
        assert np.allclose(x.eigvecs, y.eigvecs)


def test_catalogue_stable_under_grid_refinement():
    sys_ = builtin_system("peanut")
    coarse = find_critical_points(sys_, grid_density=10)
    fine = find_critical_points(sys_, grid_density=16)
    assert [c.id for c in coarse] == [c.id for c in fine]
    for x, y in zip(coarse, fine):
        assert sys_.distance(x.point, y.point) < 1e-8


def test_critical_points_are_critical_and_framed():
    sys_ = builtin_system("peanut")
    for cp in find_critical_points(sys_):
        assert sys_.grad_norm(cp.point) < 1e-8
        # eigen decomposition reproduces the metric Hessian action
        H = sys_.hess(cp.point.chart, cp.point.array)
        g = sys_.metric(cp.point.chart, cp.point.array)
        for val, vec in zip(cp.eigenvalues, cp.eigvecs.T):
            assert np.allclose(H @ vec, val * (g @ vec), atol=1e-7)
        assert np.allclose(cp.eigvecs_inv @ cp.eigvecs, np.eye(2), atol=1e-10)


def test_orientation_sign_normalization():
    sys_ = builtin_system("torus")
    for cp in find_critical_points(sys_):
        for col in cp.eigvecs.T:
            first = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
            assert first > 0


def test_stable_coframe_pairs_plus_one():
    sys_ = builtin_system("torus")
    for cp in find_critical_points(sys_):
        if cp.index in (0,):
            continue
        pairing = cp.stable_coframe.matrix @ cp.eigvecs[:, : cp.index]
        assert np.linalg.det(pairing) == pytest.approx(1.0)


def test_catalogue_json_round_trip():
    sys_ = builtin_system("circle", a=0.2)
    cps = find_critical_points(sys_)
    payload = json.loads(catalogue_to_json(cps))
    assert [row["id"] for row in payload] == [c.id for c in cps]
    assert all(set(row) >= {"coords", "value", "index", "eigenvalues"} for row in payload)


def test_circle_catalogue_oracle_positions():
    a = 0.23
    sys_ = builtin_system("circle", a=a)
    cps = find_critical_points(sys_)
    minimum = next(c for c in cps if c.index == 0)
    maximum = next(c for c in cps if c.index == 1)
    assert minimum.point.array[0] == pytest.approx((a + 0.5) % 1.0, abs=1e-9)
    assert maximum.point.array[0] == pytest.approx(a % 1.0, abs=1e-9)


def test_check_morse_smale_passes_on_circle():
    sys_ = builtin_system("circle")
    cps = find_critical_points(sys_)
    report = check_morse_smale(sys_, cps)
    assert report.passed
    assert report.min_margin > 1e-3
