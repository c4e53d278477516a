import pytest

from morseflow.errors import MorseflowError
from morseflow.cup import (
    _saddles_by_axis,
    cup_product,
    torus_triple,
    triple_intersection,
)


@pytest.fixture(scope="module")
def triple():
    return torus_triple()


def test_zero_shift_rejected():
    with pytest.raises(MorseflowError):
        torus_triple(shift1=(0.0, 0.0))
    with pytest.raises(MorseflowError):
        torus_triple(shift1=(1.0, 2.0))


def test_equal_shifts_rejected():
    with pytest.raises(MorseflowError):
        torus_triple(shift1=(0.2, 0.4), shift2=(0.2, 0.4))


def test_unknown_generator_rejected(triple):
    with pytest.raises(MorseflowError):
        cup_product(triple, {"nope": 1}, {}, 1, 1)


def test_minimum_cup_minimum_is_the_unit(triple):
    # degree-zero classes multiply by basin membership: the generic point lies
    # in the basin of each copy's minimum, so 1 . 1 = 1 on the base minimum
    m0 = next(c for c in triple.base_cps if c.index == 0)
    m1 = next(c for c in triple.aux1_cps if c.index == 0)
    m2 = next(c for c in triple.aux2_cps if c.index == 0)
    count = triple_intersection(
        triple.base, m0, triple.base_cps,
        (triple.aux1, m1, triple.aux1_cps),
        (triple.aux2, m2, triple.aux2_cps),
    )
    assert count == 1


def test_saddle_ordering_is_intrinsic(triple):
    for cps in (triple.base_cps, triple.aux1_cps, triple.aux2_cps):
        s = _saddles_by_axis(cps)
        assert len(s) == 2
        axes = [int(abs(c.eigvecs[:, 0][1]) > abs(c.eigvecs[:, 0][0])) for c in s]
        assert axes == [0, 1]


def test_one_saddle_pair_triple_count(triple):
    # a single mixed saddle pair meets each top cell in exactly one signed point
    s1 = _saddles_by_axis(triple.aux1_cps)
    s2 = _saddles_by_axis(triple.aux2_cps)
    tops = [c for c in triple.base_cps if c.index == 2]
    total = sum(
        triple_intersection(
            triple.base, x3, triple.base_cps,
            (triple.aux1, s1[0], triple.aux1_cps),
            (triple.aux2, s2[1], triple.aux2_cps),
        )
        for x3 in tops
    )
    assert total in (-1, 1)
