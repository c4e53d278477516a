import numpy as np
import pytest

from morseflow.errors import DimensionError
from morseflow.exterior import (
    CovectorFrame,
    Multivector,
    OrientedFrame,
    contract,
    det_pair,
    evaluation_margin,
    induced_coorientation,
    intersection_sign,
    wedge,
)


def test_from_frame_matches_wedge_of_columns():
    rng = np.random.default_rng(0)
    mat = rng.normal(size=(4, 2))
    a = Multivector.from_vector(mat[:, 0])
    b = Multivector.from_vector(mat[:, 1])
    assert np.allclose(wedge(a, b).array, Multivector.from_frame(mat).array)


def test_wedge_antisymmetry_on_vectors():
    rng = np.random.default_rng(1)
    u = Multivector.from_vector(rng.normal(size=5))
    v = Multivector.from_vector(rng.normal(size=5))
    assert np.allclose(wedge(u, v).array, -wedge(v, u).array)
    assert np.allclose(wedge(u, u).array, 0.0)


def test_wedge_graded_commutativity():
    rng = np.random.default_rng(2)
    a = Multivector.from_frame(rng.normal(size=(5, 2)))
    b = Multivector.from_vector(rng.normal(size=5))
    # degree (2, 1): a ^ b = (-1)^{2*1} b ^ a
    assert np.allclose(wedge(a, b).array, wedge(b, a).array)


def test_wedge_degree_overflow_raises():
    u = Multivector.from_vector([1.0, 0.0])
    uv = wedge(u, Multivector.from_vector([0.0, 1.0]))
    with pytest.raises(DimensionError):
        wedge(uv, u)


def test_det_pair_is_determinant_of_evaluations():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 2))  # vectors as columns
    C = rng.normal(size=(2, 4))  # covectors as rows
    o = Multivector.from_frame(A)
    c = Multivector.from_frame(C.T)
    assert det_pair(c, o) == pytest.approx(np.linalg.det(C @ A))


def test_contract_single_covector():
    # contract(u1 ^ u2, c) = c(u1) u2 - c(u2) u1
    rng = np.random.default_rng(4)
    u1, u2 = rng.normal(size=3), rng.normal(size=3)
    c = rng.normal(size=3)
    o = Multivector.from_frame(np.column_stack([u1, u2]))
    cf = CovectorFrame.from_matrix(c.reshape(1, 3))
    expected = (c @ u1) * u2 - (c @ u2) * u1
    assert np.allclose(contract(o, cf).array, expected)


def test_contract_full_degree_gives_det():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(3, 3))
    C = rng.normal(size=(3, 3))
    o = Multivector.from_frame(A)
    cf = CovectorFrame.from_matrix(C)
    out = contract(o, cf)
    assert out.degree == 0
    assert out.coeffs[0] == pytest.approx(np.linalg.det(C @ A))


def test_induced_coorientation_pairs_to_plus_one():
    rng = np.random.default_rng(6)
    M = rng.normal(size=(4, 4)) + 4.0 * np.eye(4)
    u = OrientedFrame.from_matrix(M[:, :2])
    s = M[:, 2:]
    c = induced_coorientation(u, s)
    # rows annihilate the submanifold tangents and pair +1 with the frame
    assert np.allclose(c.matrix @ s, 0.0, atol=1e-10)
    assert np.linalg.det(c.matrix @ M[:, :2]) == pytest.approx(1.0)


def test_intersection_sign_flips_with_frame():
    u = OrientedFrame.from_matrix(np.array([[1.0], [0.0]]))
    c = CovectorFrame.from_matrix(np.array([[1.0, 0.2]]))
    s = intersection_sign(u, c)
    assert s in (-1, 1)
    flipped = OrientedFrame.from_matrix(np.array([[-1.0], [0.0]]))
    assert intersection_sign(flipped, c) == -s


def test_evaluation_margin_detects_degeneracy():
    frame = np.array([[1.0], [0.0]])
    good = np.array([[1.0, 0.0]])
    bad = np.array([[0.0, 1.0]])
    assert evaluation_margin(frame, good) == pytest.approx(1.0)
    assert evaluation_margin(frame, bad) == pytest.approx(0.0)


def test_multivector_shape_validation():
    with pytest.raises(DimensionError):
        Multivector(3, 2, (1.0,))
    with pytest.raises(DimensionError):
        Multivector(3, 5, (1.0,))
