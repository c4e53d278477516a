"""Exterior algebra over R^n: multivectors, frames, and the orientation calculus.

Basis k-vectors are indexed by lexicographically ordered k-element subsets of
{0, ..., n-1}.  Covector frames keep an ordered list of covectors rather than a
wedge so the evaluation matrix (needed for signs and margins) is immediate.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .errors import DimensionError, TransversalityError

__all__ = [
    "Multivector",
    "CovectorFrame",
    "OrientedFrame",
    "wedge",
    "det_pair",
    "contract",
    "induced_coorientation",
    "intersection_sign",
]


def _subsets(n: int, k: int) -> list[tuple[int, ...]]:
    return list(combinations(range(n), k))


def _subset_index(n: int) -> dict[int, dict[tuple[int, ...], int]]:
    return {k: {s: i for i, s in enumerate(_subsets(n, k))} for k in range(n + 1)}


_INDEX_CACHE: dict[int, dict[int, dict[tuple[int, ...], int]]] = {}


def _index(n: int) -> dict[int, dict[tuple[int, ...], int]]:
    if n not in _INDEX_CACHE:
        _INDEX_CACHE[n] = _subset_index(n)
    return _INDEX_CACHE[n]


def _merge_sign(s: tuple[int, ...], t: tuple[int, ...]) -> int:
    """Sign of sorting the concatenation of two disjoint increasing tuples."""
    inversions = 0
    for a in t:
        inversions += sum(1 for b in s if b > a)
    return -1 if inversions % 2 else 1


@dataclass(frozen=True)
class Multivector:
    """Element of Lambda^k R^n with one real coefficient per lex-ordered k-subset."""

    ambient_dim: int
    degree: int
    coeffs: tuple[float, ...]

    def __post_init__(self):
        n, k = self.ambient_dim, self.degree
        if n < 1:
            raise DimensionError("ambient_dim must be positive")
        if not 0 <= k <= n:
            raise DimensionError(f"degree {k} outside [0, {n}]")
        if len(self.coeffs) != comb(n, k):
            raise DimensionError(
                f"expected {comb(n, k)} coefficients for degree {k} in dim {n}, got {len(self.coeffs)}"
            )
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @staticmethod
    def zero(n: int, k: int) -> "Multivector":
        return Multivector(n, k, (0.0,) * comb(n, k))

    @staticmethod
    def scalar(n: int, value: float) -> "Multivector":
        return Multivector(n, 0, (float(value),))

    @staticmethod
    def basis(n: int, subset: tuple[int, ...]) -> "Multivector":
        subset = tuple(subset)
        k = len(subset)
        coeffs = [0.0] * comb(n, k)
        coeffs[_index(n)[k][subset]] = 1.0
        return Multivector(n, k, tuple(coeffs))

    @staticmethod
    def from_vector(v) -> "Multivector":
        v = np.asarray(v, dtype=float)
        return Multivector(len(v), 1, tuple(v))

    @staticmethod
    def from_frame(mat) -> "Multivector":
        """Wedge of the columns of an n x k matrix, computed from its k x k minors."""
        mat = np.asarray(mat, dtype=float)
        n, k = mat.shape
        if k == 0:
            return Multivector.scalar(n, 1.0)
        coeffs = [float(np.linalg.det(mat[list(s), :])) for s in _subsets(n, k)]
        return Multivector(n, k, tuple(coeffs))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def scale(self, a: float) -> "Multivector":
        return Multivector(self.ambient_dim, self.degree, tuple(a * c for c in self.coeffs))

    def add(self, other: "Multivector") -> "Multivector":
        if (self.ambient_dim, self.degree) != (other.ambient_dim, other.degree):
            raise DimensionError("cannot add multivectors of different dim/degree")
        return Multivector(
            self.ambient_dim, self.degree, tuple(a + b for a, b in zip(self.coeffs, other.coeffs))
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.array))


def wedge(a: Multivector, b: Multivector) -> Multivector:
    """Graded-anticommutative product Lambda^i x Lambda^j -> Lambda^{i+j}."""
    n = a.ambient_dim
    if b.ambient_dim != n:
        raise DimensionError("wedge of multivectors with different ambient dimensions")
    i, j = a.degree, b.degree
    if i + j > n:
        raise DimensionError(f"wedge degree {i}+{j} exceeds ambient dimension {n}")
    idx = _index(n)
    out = [0.0] * comb(n, i + j)
    subs_a = _subsets(n, i)
    subs_b = _subsets(n, j)
    for si, s in enumerate(subs_a):
        ca = a.coeffs[si]
        if ca == 0.0:
            continue
        sset = set(s)
        for ti, t in enumerate(subs_b):
            cb = b.coeffs[ti]
            if cb == 0.0 or sset & set(t):
                continue
            merged = tuple(sorted(s + t))
            out[idx[i + j][merged]] += _merge_sign(s, t) * ca * cb
    return Multivector(n, i + j, tuple(out))


def det_pair(c: Multivector, o: Multivector) -> float:
    """Determinant pairing of a degree-k coform (coefficients in the dual lex basis)
    against a degree-k multivector.  For decomposables with factors alpha_i, v_j this
    is det[alpha_i(v_j)]."""
    if c.ambient_dim != o.ambient_dim:
        raise DimensionError("det_pair ambient dimension mismatch")
    if c.degree != o.degree:
        raise DimensionError(f"det_pair degree mismatch: {c.degree} vs {o.degree}")
    return float(np.dot(c.array, o.array))


@dataclass(frozen=True)
class CovectorFrame:
    """Ordered list of k linearly independent covectors on R^n (rows)."""

    ambient_dim: int
    covectors: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        rows = tuple(tuple(float(x) for x in row) for row in self.covectors)
        object.__setattr__(self, "covectors", rows)
        for row in rows:
            if len(row) != self.ambient_dim:
                raise DimensionError("covector length does not match ambient dimension")
        if rows:
            mat = np.asarray(rows)
            if np.linalg.matrix_rank(mat, tol=1e-12 * max(1.0, np.abs(mat).max())) < len(rows):
                raise DimensionError("covector frame is not linearly independent")

    @staticmethod
    def from_matrix(mat) -> "CovectorFrame":
        mat = np.asarray(mat, dtype=float)
        return CovectorFrame(mat.shape[1], tuple(tuple(row) for row in mat))

    @property
    def size(self) -> int:
        return len(self.covectors)

    @property
    def matrix(self) -> np.ndarray:
        if not self.covectors:
            return np.zeros((0, self.ambient_dim))
        return np.asarray(self.covectors, dtype=float)

    def as_multivector(self) -> Multivector:
        """Wedge of the covectors, expressed in the dual lex basis."""
        return Multivector.from_frame(self.matrix.T)


@dataclass(frozen=True)
class OrientedFrame:
    """Ordered list of k linearly independent vectors on R^n (columns)."""

    ambient_dim: int
    vectors: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        cols = tuple(tuple(float(x) for x in col) for col in self.vectors)
        object.__setattr__(self, "vectors", cols)
        for col in cols:
            if len(col) != self.ambient_dim:
                raise DimensionError("vector length does not match ambient dimension")
        if cols:
            mat = np.asarray(cols).T
            if np.linalg.matrix_rank(mat, tol=1e-12 * max(1.0, np.abs(mat).max())) < len(cols):
                raise DimensionError("frame vectors are not linearly independent")

    @staticmethod
    def from_matrix(mat) -> "OrientedFrame":
        mat = np.asarray(mat, dtype=float)
        return OrientedFrame(mat.shape[0], tuple(tuple(col) for col in mat.T))

    @property
    def size(self) -> int:
        return len(self.vectors)

    @property
    def matrix(self) -> np.ndarray:
        if not self.vectors:
            return np.zeros((self.ambient_dim, 0))
        return np.asarray(self.vectors, dtype=float).T

    def as_multivector(self) -> Multivector:
        return Multivector.from_frame(self.matrix)


def contract(o: Multivector, c: CovectorFrame) -> Multivector:
    """Contraction of a degree-l multivector with a size-k covector frame.

    Returns the unique v of degree l-k with det_pair(beta, v) = det_pair(c ^ beta, o)
    for every coform beta of degree l-k.
    """
    n, l, k = o.ambient_dim, o.degree, c.size
    if c.ambient_dim != n:
        raise DimensionError("contract ambient dimension mismatch")
    if k > l:
        raise DimensionError(f"cannot contract degree {l} by a frame of size {k}")
    cw = c.as_multivector()
    out = []
    for t in _subsets(n, l - k):
        beta = Multivector.basis(n, t)
        out.append(det_pair(wedge(cw, beta), o))
    return Multivector(n, l - k, tuple(out))


def induced_coorientation(u: OrientedFrame, s) -> CovectorFrame:
    """Natural coorientation of the complement S spanned by `s` given an oriented U.

    Returns k covectors annihilating S whose pairing matrix against u has
    determinant +1, so the oriented intersection U \\cap S is positive.
    """
    n, k = u.ambient_dim, u.size
    s = np.asarray(s, dtype=float)
    if s.size == 0:
        s = np.zeros((n, 0))
    if s.shape[0] != n:
        raise DimensionError("complement vectors have wrong length")
    basis = np.hstack([u.matrix, s])
    if basis.shape != (n, n):
        raise DimensionError("frame plus complement does not have n vectors")
    if abs(np.linalg.det(basis)) < 1e-12 * max(1.0, np.abs(basis).max()) ** n:
        raise DimensionError("frame plus complement is not a basis")
    inv = np.linalg.inv(basis)
    rows = inv[:k, :]
    # Pairing against u is the identity by construction; rescale first row so the
    # determinant is exactly +1 even after roundoff.
    if k:
        d = float(np.linalg.det(rows @ u.matrix))
        rows = rows.copy()
        rows[0, :] /= d
    return CovectorFrame.from_matrix(rows)


def intersection_sign(u: OrientedFrame, c: CovectorFrame, tau: float = 1e-6) -> int:
    """Sign of the 0-dimensional oriented intersection defined by the evaluation matrix c(u).

    The empty pairing (k = 0) has sign +1.  Raises TransversalityError carrying the
    smallest singular value if the evaluation matrix is singular below `tau`.
    """
    if u.ambient_dim != c.ambient_dim:
        raise DimensionError("intersection_sign ambient dimension mismatch")
    if u.size != c.size:
        raise DimensionError(f"frame size {u.size} does not match coframe size {c.size}")
    if u.size == 0:
        return 1
    ev = c.matrix @ u.matrix
    margin = evaluation_margin(u.matrix, c.matrix)
    if margin < tau:
        raise TransversalityError(
            f"evaluation matrix nearly singular (margin {margin:.3e} < tau {tau:.3e})",
            margin=margin,
        )
    return 1 if np.linalg.det(ev) > 0 else -1


def evaluation_margin(frame_matrix, coframe_matrix) -> float:
    """Scale-normalized transversality margin of a coframe against a tangent frame.

    Smallest singular value of the evaluation matrix after orthonormalizing the
    frame columns and unit-normalizing the coframe rows, so the margin is
    insensitive to positive rescaling of either input.
    """
    frame = np.asarray(frame_matrix, dtype=float)
    rows = np.asarray(coframe_matrix, dtype=float)
    if rows.shape[0] == 0:
        return float("inf")
    q, _ = np.linalg.qr(frame)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        return 0.0
    ev = (rows / norms) @ q
    return float(np.linalg.svd(ev, compute_uv=False)[-1])
