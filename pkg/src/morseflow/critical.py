"""Critical-point detection, classification, canonical frames and transversality reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateCriticalPointError,
    MorseflowError,
    NonConvergenceError,
    RegularityError,
)
from .exterior import CovectorFrame, OrientedFrame, induced_coorientation
from .geometry import MorseSystem, Point
from .dynamics import FlowSettings, limit_point

__all__ = [
    "CriticalPoint",
    "TransversalityReport",
    "find_critical_points",
    "canonical_frames",
    "check_morse_smale",
    "check_transverse_map",
    "euler_characteristic",
    "catalogue_to_json",
]


@dataclass(frozen=True)
class CriticalPoint:
    id: str
    point: Point
    value: float
    index: int
    eigenvalues: tuple[float, ...]
    # columns of `eigvecs` are metric-orthonormal eigenvectors of g^{-1} H in
    # ascending eigenvalue order, sign-normalized; `eigvecs_inv` maps chart
    # displacements to eigenbasis coefficients (unstable coefficients first).
    eigvecs: tuple = field(repr=False, default=())
    eigvecs_inv: tuple = field(repr=False, default=())

    def __post_init__(self):
        object.__setattr__(self, "eigvecs", np.asarray(self.eigvecs, dtype=float))
        object.__setattr__(self, "eigvecs_inv", np.asarray(self.eigvecs_inv, dtype=float))

    @property
    def dim(self) -> int:
        return len(self.point.coords)

    @property
    def unstable_frame(self) -> OrientedFrame:
        return OrientedFrame.from_matrix(self.eigvecs[:, : self.index])

    @property
    def stable_frame(self) -> np.ndarray:
        return self.eigvecs[:, self.index :]

    @property
    def stable_coframe(self) -> CovectorFrame:
        return induced_coorientation(self.unstable_frame, self.stable_frame)

    def with_flipped_orientation(self) -> "CriticalPoint":
        """Same point with the first unstable direction negated (for invariance tests)."""
        if self.index == 0:
            return self
        V = self.eigvecs.copy()
        V[:, 0] = -V[:, 0]
        return CriticalPoint(
            self.id,
            self.point,
            self.value,
            self.index,
            self.eigenvalues,
            V,
            np.linalg.inv(V),
        )


@dataclass(frozen=True)
class TransversalityReport:
    entries: tuple  # (description, margin, detail) triples
    threshold: float

    @property
    def min_margin(self) -> float:
        finite = [m for _, m, _ in self.entries if np.isfinite(m)]
        return min(finite) if finite else float("inf")

    @property
    def passed(self) -> bool:
        return all(m >= self.threshold for _, m, _ in self.entries)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "passed": self.passed,
            "entries": [
                {"pair": desc, "margin": m if np.isfinite(m) else "inf", "detail": det}
                for desc, m, det in self.entries
            ],
        }


def _newton_refine(sys, chart, u, crit_tol, max_iter=60):
    u = np.asarray(u, dtype=float).copy()
    for _ in range(max_iter):
        g = sys.grad(chart, u)
        gn = float(np.sqrt(g @ sys.metric_inv(chart, u) @ g))
        if gn <= crit_tol:
            return Point.of(chart, u)
        H = sys.hess(chart, u)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(step) > 0.5:
            step = 0.5 * step / np.linalg.norm(step)
        u = u - step
        if sys.manifold.ncharts > 1 and float(u @ u) > 4.0:
            return None
    return None


def _eigen_data(sys, p: Point, degeneracy_tol):
    H = sys.hess(p.chart, p.array)
    g = sys.metric(p.chart, p.array)
    vals, vecs = scipy.linalg.eigh(H, g)
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.min(np.abs(vals)) < degeneracy_tol:
        raise DegenerateCriticalPointError(
            f"eigenvalue {vals[np.argmin(np.abs(vals))]:.3e} within degeneracy tolerance at {p}"
        )
    # deterministic basis inside (numerically) repeated eigenspaces: Gram-Schmidt
    # of projected coordinate vectors, metric-orthonormalized
    groups = []
    start = 0
    for i in range(1, len(vals) + 1):
        if i == len(vals) or abs(vals[i] - vals[start]) > 1e-6 * scale:
            groups.append((start, i))
            start = i
    V = vecs.copy()
    for a, b in groups:
        if b - a > 1:
            P = vecs[:, a:b]
            # metric-orthogonal projector onto the eigenspace applied to e_0, e_1, ...
            cand = P @ (P.T @ g)
            basis = []
            for col in cand.T:
                w = col.copy()
                for prev in basis:
                    w = w - (prev @ g @ w) * prev
                nrm = float(np.sqrt(w @ g @ w))
                if nrm > 1e-8:
                    basis.append(w / nrm)
                if len(basis) == b - a:
                    break
            if len(basis) != b - a:
                basis = [vecs[:, j] for j in range(a, b)]
            V[:, a:b] = np.column_stack(basis)
    # sign normalization: first coordinate of magnitude > 1e-9 made positive
    for j in range(V.shape[1]):
        col = V[:, j]
        for x in col:
            if abs(x) > 1e-9:
                if x < 0:
                    V[:, j] = -col
                break
    return vals, V


def canonical_frames(
    sys: MorseSystem, p: Point, degeneracy_tol: float = 1e-8, ident: str = "c?"
) -> CriticalPoint:
    """Classify a refined critical point and attach the canonical frames.

    The unstable space is oriented by Hessian eigenvectors in ascending-eigenvalue
    order, each sign-normalized so its first nonzero chart coordinate is positive;
    the stable coorientation is the induced one, so the pairing against the
    unstable frame has determinant +1.
    """
    vals, V = _eigen_data(sys, p, degeneracy_tol)
    index = int(np.sum(vals < 0))
    return CriticalPoint(
        ident,
        p,
        float(sys.value(p.chart, p.array)),
        index,
        tuple(float(v) for v in vals),
        V,
        np.linalg.inv(V),
    )


def _seed_grid(sys, grid_density):
    seeds = []
    n = sys.dim
    if sys.manifold.ncharts == 1:
        axes = [np.linspace(0.0, 1.0, grid_density, endpoint=False) + 0.5 / grid_density] * n
        for idx in np.ndindex(*([grid_density] * n)):
            seeds.append((0, np.array([axes[d][idx[d]] for d in range(n)])))
    else:
        lin = np.linspace(-1.5, 1.5, grid_density)
        for chart in range(sys.manifold.ncharts):
            for a in lin:
                for b in lin:
                    if a * a + b * b <= 1.55**2:
                        seeds.append((chart, np.array([a, b])))
    return seeds


def find_critical_points(
    sys: MorseSystem,
    grid_density: int = 12,
    crit_tol: float = 1e-9,
    degeneracy_tol: float = 1e-8,
) -> list[CriticalPoint]:
    """Newton's method on dF = 0 from grid seeds, deduplicated, classified and framed.

    Ids are assigned in ascending (value, index, coordinates) order, so the
    catalogue is stable under grid refinement.
    """
    if grid_density < 8:
        raise MorseflowError("grid_density must be at least 8 per dimension")
    found: list[Point] = []
    for chart, u in _seed_grid(sys, grid_density):
        p = _newton_refine(sys, chart, u, crit_tol)
        if p is None:
            continue
        p = sys.normalize(p)
        if all(sys.distance(p, q) >= 1e-6 for q in found):
            found.append(p)
    cps = [canonical_frames(sys, p, degeneracy_tol) for p in found]
    cps.sort(
        key=lambda c: (round(c.value, 9), c.index, c.point.chart, tuple(round(x, 9) for x in c.point.coords))
    )
    return [
        CriticalPoint(f"c{i}", c.point, c.value, c.index, c.eigenvalues, c.eigvecs, c.eigvecs_inv)
        for i, c in enumerate(cps)
    ]


def euler_characteristic(cps) -> int:
    return int(sum((-1) ** cp.index for cp in cps))


def catalogue_to_json(cps) -> str:
    payload = [
        {
            "id": cp.id,
            "chart": cp.point.chart,
            "coords": list(cp.point.coords),
            "value": cp.value,
            "index": cp.index,
            "eigenvalues": list(cp.eigenvalues),
        }
        for cp in cps
    ]
    return json.dumps(payload, sort_keys=True, indent=2)


def check_morse_smale(
    sys: MorseSystem,
    cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
) -> TransversalityReport:
    """Transversality diagnostics for every ordered pair with ind x >= ind y, x != y.

    Index-gap-1 pairs report the margins of the located connecting trajectories;
    equal-index pairs are checked to have no connection; larger gaps record the
    margins at near approaches of the flowed unstable sphere.
    """
    from . import invariants  # local import to avoid a module cycle

    entries = []
    for x in cps:
        for y in cps:
            if x.id == y.id or x.index < y.index:
                continue
            desc = f"{x.id}(ind {x.index}) -> {y.id}(ind {y.index})"
            if x.index == 0:
                continue
            if x.index == y.index:
                near = invariants.equal_index_connection(sys, x, y, cps, settings)
                if near:
                    entries.append((desc, 0.0, "equal-index connection candidate"))
                else:
                    entries.append((desc, float("inf"), "no connection"))
                continue
            if x.index - y.index == 1:
                records = invariants.trajectory_records(sys, x, y, cps, settings, tau=tau)
                if records:
                    for rec in records:
                        entries.append((desc, rec.margin, f"trajectory at {rec.location.coords}"))
                else:
                    entries.append((desc, float("inf"), "no connecting trajectory"))
            else:
                margins = invariants.wide_gap_margins(sys, x, y, cps, settings)
                if margins:
                    for m in margins:
                        entries.append((desc, m, "sampled unstable-sphere approach"))
                else:
                    entries.append((desc, float("inf"), "no approach within sampling"))
    return TransversalityReport(tuple(entries), tau)


def check_transverse_map(
    phi,
    src_cps,
    dst_sys: MorseSystem,
    dst_cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    samples: int = 40,
) -> TransversalityReport:
    """Regularity and cell-vs-stable-manifold transversality diagnostics for a map.

    Regularity requires the forward limit of every k-cell sample to land on a
    critical point of index <= k; violations enter the report with margin 0.
    """
    from . import invariants

    entries = []
    scan = settings.loosened()
    src_sys = phi.src
    for cell in src_cps:
        k = cell.index
        for z in invariants.cell_samples(src_sys, cell, src_cps, settings, samples):
            img = phi.eval(z)
            try:
                lim = limit_point(dst_sys, img, dst_cps, scan)
            except NonConvergenceError:
                entries.append(
                    (f"cell {cell.id} regularity", 0.0, "no forward convergence of image sample")
                )
                continue
            lim_cp = next(c for c in dst_cps if c.id == lim)
            if lim_cp.index > k:
                entries.append(
                    (
                        f"cell {cell.id} regularity",
                        0.0,
                        f"sample limit {lim} has index {lim_cp.index} > {k}",
                    )
                )
        for x2 in dst_cps:
            if x2.index != k:
                continue
            try:
                records = invariants.map_cell_records(
                    phi, cell, src_cps, dst_sys, x2, dst_cps, settings, tau=tau
                )
            except (NonConvergenceError, RegularityError) as exc:
                entries.append((f"{cell.id} vs S^{x2.id}", 0.0, f"detection failed: {exc}"))
                continue
            for rec in records:
                entries.append((f"{cell.id} vs S^{x2.id}", rec.margin, "intersection"))
    return TransversalityReport(tuple(entries), tau)
