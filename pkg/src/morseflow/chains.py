"""Integer chain complexes from trajectory counts, Smith normal form and homology.

All linear algebra here is exact: matrices hold Python integers (arbitrary
precision), so ranks, invariant factors and torsion coefficients are never
subject to floating-point error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ChainMapError, MorseflowError
from .dynamics import FlowSettings

__all__ = [
    "ChainComplex",
    "CochainComplex",
    "HomologySummary",
    "build_morse_complex",
    "smith_normal_form",
    "homology",
    "dualize",
]


def _as_int_matrix(mat, rows, cols):
    out = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            v = mat[i][j]
            if isinstance(v, float) and v != int(v):
                raise MorseflowError("chain complex entries must be integers")
            out[i][j] = int(v)
    return out


@dataclass(frozen=True)
class ChainComplex:
    """Finitely generated complex over the integers, graded by Morse index.

    `generators[k]` lists the generator ids in degree k and `boundaries[k]`
    is the matrix of the boundary map from degree k to degree k-1, with one
    column per degree-k generator and one row per degree-(k-1) generator.
    """

    generators: tuple[tuple[str, ...], ...]
    boundaries: tuple  # boundaries[k]: rows x cols nested int lists, k >= 1

    def __post_init__(self):
        gens = tuple(tuple(g) for g in self.generators)
        object.__setattr__(self, "generators", gens)
        mats = []
        for k in range(1, len(gens)):
            rows, cols = len(gens[k - 1]), len(gens[k])
            mat = self.boundaries[k - 1] if k - 1 < len(self.boundaries) else [[0] * cols for _ in range(rows)]
            mats.append(tuple(tuple(r) for r in _as_int_matrix(mat, rows, cols)))
        object.__setattr__(self, "boundaries", tuple(mats))
        self._check_square_zero()

    @property
    def top_degree(self) -> int:
        return len(self.generators) - 1

    def boundary(self, k: int):
        """Matrix of the boundary map in degree k as nested integer lists."""
        if k < 1 or k > self.top_degree:
            rows = len(self.generators[k - 1]) if 1 <= k - 1 <= self.top_degree else 0
            cols = len(self.generators[k]) if 0 <= k <= self.top_degree else 0
            return [[0] * cols for _ in range(rows)]
        return [list(r) for r in self.boundaries[k - 1]]

    def _check_square_zero(self):
        for k in range(2, self.top_degree + 1):
            a = self.boundary(k - 1)
            b = self.boundary(k)
            rows = len(self.generators[k - 2])
            cols = len(self.generators[k])
            for i in range(rows):
                for j in range(cols):
                    v = sum(a[i][m] * b[m][j] for m in range(len(self.generators[k - 1])))
                    if v != 0:
                        raise ChainMapError(
                            f"boundary squared is nonzero: degree {k}, entry ({i},{j}) = {v}"
                        )

    def euler_characteristic(self) -> int:
        return sum((-1) ** k * len(g) for k, g in enumerate(self.generators))

    def to_dict(self) -> dict:
        return {
            "generators": [list(g) for g in self.generators],
            "boundaries": [self.boundary(k) for k in range(1, self.top_degree + 1)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


@dataclass(frozen=True)
class CochainComplex:
    """Dual complex: same generators, transposed differentials going up in degree."""

    generators: tuple[tuple[str, ...], ...]
    differentials: tuple  # differentials[k]: matrix from degree k to k+1

    def differential(self, k: int):
        if k < 0 or k >= len(self.generators) - 1:
            return []
        return [list(r) for r in self.differentials[k]]


def dualize(cx: ChainComplex) -> CochainComplex:
    diffs = []
    for k in range(1, cx.top_degree + 1):
        b = cx.boundary(k)
        rows = len(cx.generators[k])
        cols = len(cx.generators[k - 1])
        diffs.append(tuple(tuple(b[j][i] for j in range(len(b))) for i in range(rows)))
    return CochainComplex(cx.generators, tuple(diffs))


def build_morse_complex(
    sys,
    cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
) -> ChainComplex:
    """Morse complex of a catalogued system: generators are critical points and
    boundary entries are signed trajectory counts between adjacent indices."""
    from .invariants import count_trajectories

    top = max((c.index for c in cps), default=0)
    gens = tuple(tuple(c.id for c in cps if c.index == k) for k in range(top + 1))
    by_id = {c.id: c for c in cps}
    mats = []
    for k in range(1, top + 1):
        rows = gens[k - 1]
        cols = gens[k]
        mat = [[0] * len(cols) for _ in rows]
        for j, xid in enumerate(cols):
            for i, yid in enumerate(rows):
                mat[i][j] = count_trajectories(sys, by_id[xid], by_id[yid], cps, settings, tau=tau)
        mats.append(mat)
    return ChainComplex(gens, tuple(mats))


# --------------------------------------------------------------------------
# exact integer Smith normal form


def smith_normal_form(matrix):
    """Smith normal form over the integers with unimodular transforms.

    Returns (U, D, V) with U @ A @ V = D, where D is diagonal with each
    invariant factor dividing the next, and det U, det V = +-1.  All entries
    are exact Python integers.
    """
    A = [list(map(int, row)) for row in matrix]
    m = len(A)
    n = len(A[0]) if m else 0
    U = [[int(i == j) for j in range(m)] for i in range(m)]
    V = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap_rows(i, j):
        A[i], A[j] = A[j], A[i]
        U[i], U[j] = U[j], U[i]

    def swap_cols(i, j):
        for r in A:
            r[i], r[j] = r[j], r[i]
        for r in V:
            r[i], r[j] = r[j], r[i]

    def add_row(dst, src, q):
        A[dst] = [a + q * b for a, b in zip(A[dst], A[src])]
        U[dst] = [a + q * b for a, b in zip(U[dst], U[src])]

    def add_col(dst, src, q):
        for r in A:
            r[dst] += q * r[src]
        for r in V:
            r[dst] += q * r[src]

    def negate_row(i):
        A[i] = [-a for a in A[i]]
        U[i] = [-a for a in U[i]]

    t = 0
    while t < min(m, n):
        # pivot: smallest nonzero magnitude in the remaining block
        pivot = None
        for i in range(t, m):
            for j in range(t, n):
                if A[i][j] != 0 and (pivot is None or abs(A[i][j]) < abs(A[pivot[0]][pivot[1]])):
                    pivot = (i, j)
        if pivot is None:
            break
        swap_rows(t, pivot[0])
        swap_cols(t, pivot[1])
        dirty = True
        while dirty:
            dirty = False
            for i in range(t + 1, m):
                if A[i][t] != 0:
                    q = -(A[i][t] // A[t][t])
                    add_row(i, t, q)
                    if A[i][t] != 0:
                        swap_rows(i, t)
                        dirty = True
            for j in range(t + 1, n):
                if A[t][j] != 0:
                    q = -(A[t][j] // A[t][t])
                    add_col(j, t, q)
                    if A[t][j] != 0:
                        swap_cols(j, t)
                        dirty = True
        # divisibility: fold any entry not divisible by the pivot into column t
        fixed = False
        for i in range(t + 1, m):
            for j in range(t + 1, n):
                if A[i][j] % A[t][t] != 0:
                    add_row(t, i, 1)
                    fixed = True
                    break
            if fixed:
                break
        if fixed:
            continue
        if A[t][t] < 0:
            negate_row(t)
        t += 1
    return U, A, V


def _rank_of_diag(D):
    return sum(1 for i in range(min(len(D), len(D[0]) if D else 0)) if D[i][i] != 0)


@dataclass(frozen=True)
class HomologySummary:
    betti: tuple[int, ...]
    torsion: tuple[tuple[int, ...], ...]  # invariant factors > 1 per degree
    ranks: tuple[int, ...] = field(default=())  # ranks of the boundary maps

    def to_dict(self) -> dict:
        return {
            "betti": list(self.betti),
            "torsion": [list(t) for t in self.torsion],
            "boundary_ranks": list(self.ranks),
        }


def homology(cx: ChainComplex) -> HomologySummary:
    """Betti numbers and torsion coefficients of an integer chain complex.

    In degree k the group is ker(boundary_k) / im(boundary_{k+1}); the free rank
    is dim ker - rank im and the torsion coefficients are the invariant factors
    of the boundary matrix one degree up that exceed 1.
    """
    top = cx.top_degree
    betti = []
    torsion = []
    ranks = []
    for k in range(0, top + 2):
        b = cx.boundary(k) if 1 <= k <= top else None
        if b is None or not b or not b[0]:
            ranks.append(0)
        else:
            _, D, _ = smith_normal_form(b)
            ranks.append(_rank_of_diag(D))
    for k in range(0, top + 1):
        nk = len(cx.generators[k])
        dim_ker = nk - ranks[k]
        betti.append(dim_ker - ranks[k + 1])
        factors = []
        if k + 1 <= top:
            bnext = cx.boundary(k + 1)
            if bnext and bnext[0]:
                _, D, _ = smith_normal_form(bnext)
                for i in range(min(len(D), len(D[0]))):
                    if abs(D[i][i]) > 1:
                        factors.append(abs(D[i][i]))
        torsion.append(tuple(factors))
    return HomologySummary(tuple(betti), tuple(torsion), tuple(ranks[: top + 2]))
