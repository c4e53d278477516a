"""Chain maps induced by smooth maps, their homology action, and degree checks.

Two independent constructions of the induced chain map are provided: counting
intersections of mapped open cells with stable manifolds, and pushing mapped
cells with the destination flow for a fixed time before counting preimages of
local transversals.  Agreement of the two is a strong correctness check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from sympy import Matrix

from .errors import ChainMapError, MorseflowError, RegularityError
from .chains import ChainComplex, smith_normal_form
from .dynamics import FlowSettings, limit_point
from .geometry import MorseSystem

__all__ = [
    "ChainMap",
    "chain_map_by_intersection",
    "chain_map_by_flow",
    "induced_on_homology",
    "attaching_degree",
    "check_stably_regular",
    "compose_experiment",
]


@dataclass(frozen=True)
class ChainMap:
    """Degree-preserving map of integer chain complexes, checked to commute
    with the boundary operators exactly."""

    src: ChainComplex
    dst: ChainComplex
    blocks: tuple  # blocks[k]: len(dst.generators[k]) x len(src.generators[k])

    def __post_init__(self):
        top = self.src.top_degree
        mats = []
        for k in range(top + 1):
            rows = len(self.dst.generators[k]) if k <= self.dst.top_degree else 0
            cols = len(self.src.generators[k])
            mat = self.blocks[k] if k < len(self.blocks) else [[0] * cols for _ in range(rows)]
            mats.append(tuple(tuple(int(v) for v in r) for r in mat))
            if len(mats[-1]) != rows or any(len(r) != cols for r in mats[-1]):
                raise MorseflowError(f"chain map block {k} has the wrong shape")
        object.__setattr__(self, "blocks", tuple(mats))
        self._check_commutes()

    def block(self, k: int):
        if k < 0 or k >= len(self.blocks):
            return []
        return [list(r) for r in self.blocks[k]]

    def _check_commutes(self):
        def mul(a, b, rows, mid, cols):
            return [
                [sum(a[i][m] * b[m][j] for m in range(mid)) for j in range(cols)]
                for i in range(rows)
            ]

        for k in range(1, self.src.top_degree + 1):
            if k > self.dst.top_degree:
                continue
            rows = len(self.dst.generators[k - 1])
            cols = len(self.src.generators[k])
            lhs = mul(self.dst.boundary(k), self.block(k), rows, len(self.dst.generators[k]), cols)
            rhs = mul(self.block(k - 1), self.src.boundary(k), rows, len(self.src.generators[k - 1]), cols)
            if lhs != rhs:
                raise ChainMapError(
                    f"chain map fails to commute with the boundary in degree {k}: "
                    f"{lhs} vs {rhs}"
                )

    def to_dict(self) -> dict:
        return {"blocks": [self.block(k) for k in range(len(self.blocks))]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _build_blocks(phi, src_cps, dst_sys, dst_cps, entry_fn, src_cx, dst_cx):
    by_index_src = {}
    for c in src_cps:
        by_index_src.setdefault(c.index, []).append(c)
    by_index_dst = {}
    for c in dst_cps:
        by_index_dst.setdefault(c.index, []).append(c)
    top = src_cx.top_degree
    blocks = []
    for k in range(top + 1):
        rows = dst_cx.generators[k] if k <= dst_cx.top_degree else ()
        cols = src_cx.generators[k]
        src_by_id = {c.id: c for c in by_index_src.get(k, [])}
        dst_by_id = {c.id: c for c in by_index_dst.get(k, [])}
        mat = [[0] * len(cols) for _ in rows]
        for j, cid in enumerate(cols):
            for i, did in enumerate(rows):
                mat[i][j] = entry_fn(src_by_id[cid], dst_by_id[did])
        blocks.append(mat)
    return blocks


def chain_map_by_intersection(
    phi,
    src_cps,
    dst_cps,
    src_cx: ChainComplex,
    dst_cx: ChainComplex,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
) -> ChainMap:
    """Induced chain map with entries counting mapped-cell / stable-manifold
    intersections asymptotically."""
    from .invariants import map_cell_count

    dst_sys = phi.dst

    def entry(cell, x2):
        return map_cell_count(phi, cell, src_cps, dst_sys, x2, dst_cps, settings, tau=tau)

    blocks = _build_blocks(phi, src_cps, dst_sys, dst_cps, entry, src_cx, dst_cx)
    return ChainMap(src_cx, dst_cx, tuple(blocks))


def default_flow_time(dst_cps) -> float:
    """Fixed push time scaled to the fastest rate of the destination system.

    The time-T flow magnifies displacements by up to exp(rate * T); the count
    at time 2T must still resolve preimages against float64 roundoff, which
    caps rate * T near 15.
    """
    max_rate = max(abs(v) for c in dst_cps for v in c.eigenvalues)
    return 15.0 / max_rate


def chain_map_by_flow(
    phi,
    src_cps,
    dst_cps,
    src_cx: ChainComplex,
    dst_cx: ChainComplex,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    flow_time: float | None = None,
    check_stability: bool = True,
) -> ChainMap:
    """Induced chain map computed by pushing mapped cells with the flow for a
    fixed time; entries are checked to be stable when the time doubles."""
    from .invariants import map_cell_count

    dst_sys = phi.dst
    T = default_flow_time(dst_cps) if flow_time is None else float(flow_time)
    if T <= 0:
        raise MorseflowError("flow_time must be positive")

    def entry(cell, x2):
        v = map_cell_count(
            phi, cell, src_cps, dst_sys, x2, dst_cps, settings, tau=tau, flow_time=T
        )
        if check_stability:
            v2 = map_cell_count(
                phi, cell, src_cps, dst_sys, x2, dst_cps, settings, tau=tau, flow_time=2.0 * T
            )
            if v2 != v:
                raise ChainMapError(
                    f"flow-pushed count for {cell.id}->{x2.id} changed from {v} at "
                    f"t={T:.3g} to {v2} at t={2 * T:.3g}"
                )
        return v

    blocks = _build_blocks(phi, src_cps, dst_sys, dst_cps, entry, src_cx, dst_cx)
    return ChainMap(src_cx, dst_cx, tuple(blocks))


# --------------------------------------------------------------------------
# homology functor


def _kernel_quotient_data(cx: ChainComplex, k: int):
    """Presentation of H_k: (kernel basis V_k, coker transform U2, rank2, zdim)."""
    nk = len(cx.generators[k])
    bk = cx.boundary(k)
    if bk and bk[0]:
        _, D, V = smith_normal_form(bk)
        r = sum(1 for i in range(min(len(D), len(D[0]))) if D[i][i] != 0)
        K = Matrix(V)[:, r:]
    else:
        K = Matrix.eye(nk)
    z = K.shape[1]
    bnext = cx.boundary(k + 1)
    if bnext and bnext[0] and z:
        B = Matrix(bnext)
        C = K.solve(B) if K.shape[0] == K.shape[1] else (K.T * K).solve(K.T * B)
        if any(v.q != 1 for v in C):
            raise MorseflowError("boundary image does not lie in the computed kernel")
        C = C.applyfunc(lambda v: int(v))
        U2, D2, _ = smith_normal_form(C.tolist())
        r2 = sum(1 for i in range(min(len(D2), len(D2[0]))) if D2[i][i] != 0)
        U2 = Matrix(U2)
    else:
        U2 = Matrix.eye(z)
        r2 = 0
    return K, U2, r2, z


def induced_on_homology(cm: ChainMap) -> dict:
    """Matrices of the induced map on the free parts of homology, per degree.

    Classes are expressed in the canonical bases that the Smith-normal-form
    presentation of each homology group produces.
    """
    out = {}
    top = min(cm.src.top_degree, cm.dst.top_degree)
    for k in range(top + 1):
        Ks, U2s, r2s, zs = _kernel_quotient_data(cm.src, k)
        Kd, U2d, r2d, zd = _kernel_quotient_data(cm.dst, k)
        M = Matrix(cm.block(k))
        img = M * Ks
        # coordinates of the image in the destination kernel basis
        if zd:
            Cd = Kd.solve(img) if Kd.shape[0] == Kd.shape[1] else (Kd.T * Kd).solve(Kd.T * img)
            if any(v.q != 1 for v in Cd):
                raise ChainMapError(f"image of a degree-{k} cycle is not a cycle")
            Cd = Cd.applyfunc(lambda v: int(v))
        else:
            Cd = Matrix.zeros(0, zs)
        F = (U2d * Cd) if zd else Cd
        G = F * U2s.inv() if zs else F
        if any(v.q != 1 for v in G):
            raise ChainMapError(f"induced degree-{k} map is not integral")
        free = [[int(G[i, j]) for j in range(r2s, zs)] for i in range(r2d, zd)]
        out[k] = free
    return out


# --------------------------------------------------------------------------
# attaching degrees and regularity


def attaching_degree(
    sys: MorseSystem, x, y, cps, settings: FlowSettings = FlowSettings(), tau: float = 1e-6
) -> int:
    """Degree of the flowed boundary sphere of the cell of x over the cell of y,
    for an index gap of one.  Cross-checks the trajectory count."""
    from .invariants import flowed_sphere_degree

    return flowed_sphere_degree(sys, x, y, cps, settings, tau=tau)


def check_stably_regular(
    phi,
    src_cps,
    dst_cps,
    settings: FlowSettings = FlowSettings(),
    samples: int = 200,
    rng_seed: int = 11,
) -> None:
    """Raise RegularityError if any sampled cell point maps into the closure of
    a higher-index cell of the destination."""
    from .invariants import cell_samples

    dst_sys = phi.dst
    loose = settings.loosened()
    per_cell = max(2, samples // max(1, len(src_cps)))
    for cell in src_cps:
        for z in cell_samples(phi.src, cell, src_cps, settings, per_cell, rng_seed):
            img = phi.eval(z)
            lim = limit_point(dst_sys, img, dst_cps, loose)
            lim_cp = next(c for c in dst_cps if c.id == lim)
            if lim_cp.index > cell.index:
                raise RegularityError(
                    f"sample of cell {cell.id} (index {cell.index}) maps into the "
                    f"cell of {lim} (index {lim_cp.index})"
                )


def compose_experiment(
    outer,
    inner,
    inner_src_cps,
    mid_cps,
    outer_dst_cps,
    cx_src: ChainComplex,
    cx_mid: ChainComplex,
    cx_dst: ChainComplex,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    samples: int = 200,
) -> dict:
    """Chain maps of two stably regular maps and their composite, with the
    product identity checked degreewise."""
    from .maps import compose

    check_stably_regular(inner, inner_src_cps, mid_cps, settings, samples)
    check_stably_regular(outer, mid_cps, outer_dst_cps, settings, samples)
    m_inner = chain_map_by_intersection(inner, inner_src_cps, mid_cps, cx_src, cx_mid, settings, tau)
    m_outer = chain_map_by_intersection(outer, mid_cps, outer_dst_cps, cx_mid, cx_dst, settings, tau)
    comp = compose(outer, inner)
    check_stably_regular(comp, inner_src_cps, outer_dst_cps, settings, samples)
    m_comp = chain_map_by_intersection(comp, inner_src_cps, outer_dst_cps, cx_src, cx_dst, settings, tau)
    agree = True
    for k in range(cx_src.top_degree + 1):
        if k > cx_dst.top_degree:
            continue
        prod = Matrix(m_outer.block(k)) * Matrix(m_inner.block(k))
        if prod != Matrix(m_comp.block(k)):
            agree = False
    return {
        "inner": m_inner,
        "outer": m_outer,
        "composite": m_comp,
        "product_equals_composite": agree,
    }
