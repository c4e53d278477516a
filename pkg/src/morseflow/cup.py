"""Cup products on degree-one cohomology via triple intersections.

Stable manifolds of distinct critical points of a single gradient system never
intersect, so products of classes supported on saddles need auxiliary systems:
offset copies of the base system whose saddles carry the same cohomology
classes but whose stable manifolds sit in general position.  The value of a
product of two degree-one cocycles on a top cell is the signed count of points
of that cell lying simultaneously on one stable manifold from each auxiliary
system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critical import find_critical_points
from .dynamics import FlowSettings, limit_point
from .errors import MorseflowError, TransversalityError
from .geometry import MorseSystem, builtin_system
from .invariants import cup_records

__all__ = [
    "TripleSystem",
    "torus_triple",
    "triple_intersection",
    "cup_product",
    "cup_tensor",
    "cup_pairing_matrix",
    "pairing_report",
]


@dataclass(frozen=True)
class TripleSystem:
    """A base system and two offset copies with their critical catalogues."""

    base: MorseSystem
    aux1: MorseSystem
    aux2: MorseSystem
    base_cps: tuple
    aux1_cps: tuple
    aux2_cps: tuple


def torus_triple(
    a: float = 0.1,
    b: float = 0.35,
    w1: float = 1.0,
    w2: float = 1.3,
    shift1=(0.23, 0.41),
    shift2=(0.57, 0.13),
) -> TripleSystem:
    """Three copies of a product torus system with mutually offset potentials.

    The shifts must keep each pair of copies in general position: no saddle of
    one copy may share a stable circle with a saddle of another.
    """
    for s in (shift1, shift2):
        if np.allclose(np.mod(s, 1.0), 0.0):
            raise MorseflowError("auxiliary shifts must be nonzero on the torus")
    if np.allclose(np.mod(np.subtract(shift1, shift2), 1.0), 0.0):
        raise MorseflowError("the two auxiliary shifts must differ")
    base = builtin_system("torus", a=a, b=b, w1=w1, w2=w2)
    aux1 = builtin_system("torus", a=a + shift1[0], b=b + shift1[1], w1=w1, w2=w2)
    aux2 = builtin_system("torus", a=a + shift2[0], b=b + shift2[1], w1=w1, w2=w2)
    return TripleSystem(
        base,
        aux1,
        aux2,
        tuple(find_critical_points(base)),
        tuple(find_critical_points(aux1)),
        tuple(find_critical_points(aux2)),
    )


def triple_intersection(
    sys0: MorseSystem,
    x3,
    cps0,
    pair1,
    pair2,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 32,
) -> int:
    """Signed count of points of the cell of x3 on both auxiliary stable manifolds.

    Each pair is (system, critical_point, catalogue) for one auxiliary copy.
    """
    if x3.index == 0:
        # the cell is the single point x3; it meets the open dense stable sets
        # of two minima exactly when it lies in both basins, with empty-frame
        # sign +1
        loose = settings.loosened()
        in1 = limit_point(pair1[0], x3.point, pair1[2], loose) == pair1[1].id
        in2 = limit_point(pair2[0], x3.point, pair2[2], loose) == pair2[1].id
        return 1 if in1 and in2 else 0
    records = cup_records(sys0, x3, cps0, (pair1, pair2), settings, tau=tau, density=density)
    for r in records:
        if r.sign == 0:
            raise TransversalityError(
                f"triple intersection near {r.location} has margin {r.margin:.3e}",
                margin=r.margin,
            )
    return int(sum(r.sign for r in records))


def cup_product(
    triple: TripleSystem,
    alpha: dict,
    beta: dict,
    k1: int,
    k2: int,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 32,
) -> dict:
    """Bilinear extension of the basis triple counts to integer cochains.

    `alpha` assigns integers to degree-k1 critical-point ids of the first copy
    and `beta` to degree-k2 ids of the second; the result assigns integers to
    degree-(k1 + k2) ids of the base copy.
    """
    by_id1 = {c.id: c for c in triple.aux1_cps if c.index == k1}
    by_id2 = {c.id: c for c in triple.aux2_cps if c.index == k2}
    for cid in alpha:
        if cid not in by_id1:
            raise MorseflowError(f"{cid} is not a degree-{k1} generator of the first copy")
    for cid in beta:
        if cid not in by_id2:
            raise MorseflowError(f"{cid} is not a degree-{k2} generator of the second copy")
    out = {}
    for x3 in triple.base_cps:
        if x3.index != k1 + k2:
            continue
        total = 0
        for cid1, a in alpha.items():
            if a == 0:
                continue
            for cid2, b in beta.items():
                if b == 0:
                    continue
                total += a * b * triple_intersection(
                    triple.base, x3, triple.base_cps,
                    (triple.aux1, by_id1[cid1], triple.aux1_cps),
                    (triple.aux2, by_id2[cid2], triple.aux2_cps),
                    settings, tau=tau, density=density,
                )
        out[x3.id] = total
    return out


def cup_tensor(
    triple: TripleSystem,
    k1: int,
    k2: int,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 32,
) -> dict:
    """All basis triple counts for one bidegree, keyed x1 -> x2 -> x3."""
    out = {}
    for x1 in (c for c in triple.aux1_cps if c.index == k1):
        row = {}
        for x2 in (c for c in triple.aux2_cps if c.index == k2):
            vals = {}
            for x3 in (c for c in triple.base_cps if c.index == k1 + k2):
                vals[x3.id] = triple_intersection(
                    triple.base, x3, triple.base_cps,
                    (triple.aux1, x1, triple.aux1_cps),
                    (triple.aux2, x2, triple.aux2_cps),
                    settings, tau=tau, density=density,
                )
            row[x2.id] = vals
        out[x1.id] = row
    return out


def _saddles_by_axis(cps):
    """Index-1 points ordered by the dominant axis of the unstable direction.

    The ordering is intrinsic, so corresponding saddles of offset copies of the
    same system line up regardless of how the catalogue happened to be sorted.
    """
    saddles = [c for c in cps if c.index == 1]
    return sorted(saddles, key=lambda c: int(np.argmax(np.abs(c.eigvecs[:, 0]))))


def cup_pairing_matrix(
    triple: TripleSystem,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 32,
):
    """Pairing of degree-one classes against the fundamental class.

    Entry (i, j) evaluates the product of the class of the i-th saddle of the
    first copy with the class of the j-th saddle of the second copy on the sum
    of top cells of the base copy.  Graded commutativity in odd degree forces
    the matrix to be antisymmetric.
    """
    tops = [c for c in triple.base_cps if c.index == triple.base.dim]
    s1 = _saddles_by_axis(triple.aux1_cps)
    s2 = _saddles_by_axis(triple.aux2_cps)
    mat = []
    for x1 in s1:
        row = []
        for x2 in s2:
            total = 0
            for x3 in tops:
                total += triple_intersection(
                    triple.base, x3, triple.base_cps,
                    (triple.aux1, x1, triple.aux1_cps),
                    (triple.aux2, x2, triple.aux2_cps),
                    settings, tau=tau, density=density,
                )
            row.append(total)
        mat.append(row)
    return mat


def pairing_report(
    triple: TripleSystem,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 32,
) -> dict:
    mat = cup_pairing_matrix(triple, settings, tau=tau, density=density)
    n = len(mat)
    antisym = all(mat[i][j] == -mat[j][i] for i in range(n) for j in range(n))
    return {
        "pairing": mat,
        "antisymmetric": antisym,
        "saddles_first_copy": [c.id for c in _saddles_by_axis(triple.aux1_cps)],
        "saddles_second_copy": [c.id for c in _saddles_by_axis(triple.aux2_cps)],
    }
