"""Smooth maps between the model manifolds, with evaluation and differentials.

Every map exposes eval(point) -> point and jacobian(point) -> matrix; the
jacobian is expressed between the chart of the input point and the chart of
the point eval returns, so downstream chain rules stay consistent across
chart switches.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, MorseflowError
from .geometry import MorseSystem, Point

__all__ = [
    "SmoothMap",
    "identity_map",
    "circle_self_map",
    "torus_linear_map",
    "circle_to_torus_map",
    "torus_to_circle_map",
    "constant_map",
    "compose",
]


class SmoothMap:
    """Base class wiring a source system to a destination system."""

    def __init__(self, src: MorseSystem, dst: MorseSystem, label: str):
        self.src = src
        self.dst = dst
        self.label = label

    def eval(self, p: Point) -> Point:
        raise NotImplementedError

    def jacobian(self, p: Point) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"map": self.label, "src": self.src.describe(), "dst": self.dst.describe()}

    def check_jacobian(self, p: Point, h: float = 1e-6) -> float:
        """Max abs deviation of the jacobian from central differences at p."""
        J = self.jacobian(p)
        q0 = self.eval(p)
        n = self.src.dim
        err = 0.0
        for i in range(n):
            d = np.zeros(n)
            d[i] = h
            qp = self.eval(Point.of(p.chart, p.array + d))
            qm = self.eval(Point.of(p.chart, p.array - d))
            up = self.dst.to_chart(qp, q0.chart)
            um = self.dst.to_chart(qm, q0.chart)
            col = self.dst.displacement(Point.of(q0.chart, um), Point.of(q0.chart, up)) / (2 * h)
            err = max(err, float(np.max(np.abs(col - J[:, i]))))
        return err


class _Identity(SmoothMap):
    def __init__(self, sys):
        super().__init__(sys, sys, "identity")

    def eval(self, p):
        return self.dst.normalize(p)

    def jacobian(self, p):
        q = self.dst.normalize(p)
        if q.chart == p.chart:
            return np.eye(self.src.dim)
        _, _, T = self.src.switch_chart(p.chart, p.array)
        return T


def identity_map(sys: MorseSystem) -> SmoothMap:
    return _Identity(sys)


class _FlatAffine(SmoothMap):
    """u -> A u + c between flat (single-chart, unit-periodic) systems.

    Integer matrices descend to well-defined torus maps; the offset is free.
    """

    def __init__(self, src, dst, A, c, label):
        super().__init__(src, dst, label)
        A = np.asarray(A, dtype=float)
        c = np.asarray(c, dtype=float)
        if src.manifold.ncharts != 1 or dst.manifold.ncharts != 1:
            raise MorseflowError("affine maps are defined between flat systems")
        if A.shape != (dst.dim, src.dim):
            raise DimensionError(f"matrix shape {A.shape} does not map dim {src.dim} to {dst.dim}")
        if not np.allclose(A, np.round(A)):
            raise MorseflowError("the linear part must be integral to descend to the torus")
        self.A = np.round(A)
        self.c = c

    def eval(self, p):
        return self.dst.normalize(Point.of(0, self.A @ p.array + self.c))

    def jacobian(self, p):
        return self.A.copy()


def circle_self_map(src, dst, degree: int, offset: float = 0.0) -> SmoothMap:
    """theta -> degree * theta + offset on the circle."""
    if degree == 0:
        raise MorseflowError("use constant_map for degree zero")
    return _FlatAffine(src, dst, [[degree]], [offset], f"circle-degree-{degree}")


def torus_linear_map(src, dst, matrix, offset=(0.0, 0.0)) -> SmoothMap:
    return _FlatAffine(src, dst, matrix, offset, "torus-linear")


def circle_to_torus_map(src, dst, winding=(1, 0), offset=(0.0, 0.0)) -> SmoothMap:
    """theta -> (p theta + c1, q theta + c2), an embedded (p, q) curve."""
    p, q = winding
    return _FlatAffine(src, dst, [[p], [q]], offset, f"circle-to-torus-{p}-{q}")


class _TorusToCircle(SmoothMap):
    """(u1, u2) -> p u1 + q u2 + c + amp * sin(2 pi (u1 + u2)).

    The sinusoidal term breaks the degeneracies a plain linear projection has
    against product-structured targets while keeping the homotopy class (p, q).
    """

    def __init__(self, src, dst, winding, offset, amp):
        super().__init__(src, dst, f"torus-to-circle-{winding[0]}-{winding[1]}")
        self.p, self.q = int(winding[0]), int(winding[1])
        self.offset = float(offset)
        self.amp = float(amp)
        if abs(self.amp) >= 0.15:
            raise MorseflowError("wobble amplitude must stay below 0.15")

    def eval(self, pt):
        u = pt.array
        val = self.p * u[0] + self.q * u[1] + self.offset + self.amp * np.sin(
            2.0 * np.pi * (u[0] + u[1])
        )
        return self.dst.normalize(Point.of(0, np.array([val])))

    def jacobian(self, pt):
        u = pt.array
        d = 2.0 * np.pi * self.amp * np.cos(2.0 * np.pi * (u[0] + u[1]))
        return np.array([[self.p + d, self.q + d]])


def torus_to_circle_map(src, dst, winding=(1, 0), offset: float = 0.0, amp: float = 0.0) -> SmoothMap:
    return _TorusToCircle(src, dst, winding, offset, amp)


class _Constant(SmoothMap):
    def __init__(self, src, dst, point):
        super().__init__(src, dst, "constant")
        self.point = dst.normalize(point)

    def eval(self, p):
        return self.point

    def jacobian(self, p):
        return np.zeros((self.dst.dim, self.src.dim))


def constant_map(src, dst, point: Point) -> SmoothMap:
    return _Constant(src, dst, point)


class _Composite(SmoothMap):
    def __init__(self, outer, inner):
        if inner.dst is not outer.src and inner.dst.describe() != outer.src.describe():
            raise MorseflowError("composition needs matching middle systems")
        super().__init__(inner.src, outer.dst, f"{outer.label} o {inner.label}")
        self.outer = outer
        self.inner = inner

    def eval(self, p):
        return self.outer.eval(self.inner.eval(p))

    def jacobian(self, p):
        mid = self.inner.eval(p)
        return self.outer.jacobian(mid) @ self.inner.jacobian(p)


def compose(outer: SmoothMap, inner: SmoothMap) -> SmoothMap:
    """outer after inner, with the chain-rule differential."""
    return _Composite(outer, inner)
