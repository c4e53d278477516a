"""Unstable-manifold cell families, signed intersections with stable manifolds,
trajectory counts and flowed-sphere degree counts.

A k-cell of a critical point x is parametrized in two kinds of pieces: a small
linear disk in the unstable eigenspace and cylinders obtained by flowing the
boundary sphere of that disk forward.  Intersections with stable manifolds are
found by scanning each piece for close approaches to the target critical point
and polishing with Newton's method on the unstable coefficients of the
displacement after a fixed flow time; signs come from determinant or
contraction pairings of the transported frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MorseflowError, NonConvergenceError, TransversalityError
from .exterior import (
    CovectorFrame,
    Multivector,
    OrientedFrame,
    contract,
    evaluation_margin,
)
from .geometry import MorseSystem, Point
from .dynamics import FlowSettings, flow, flow_with_jacobian, limit_point, scan_flow

__all__ = [
    "IntersectionRecord",
    "trajectory_records",
    "count_trajectories",
    "map_cell_records",
    "map_cell_count",
    "flowed_sphere_degree",
    "cell_samples",
    "equal_index_connection",
    "wide_gap_margins",
    "cup_records",
]

_SPHERE_EPS = 1e-3
_SEED_DISTANCE = 0.35
_RECORD_APPROACH = 1e-3
_PARAM_DEDUP = 1e-5
_LOCATION_DEDUP = 1e-6
_JACOBIAN_GUARD = 1e150


@dataclass(frozen=True)
class IntersectionRecord:
    """One transverse intersection point located on a cell family."""

    location: Point
    piece: str
    params: tuple[float, ...]
    sign: int
    margin: float
    residual: float
    flow_time: float


# --------------------------------------------------------------------------
# sphere parametrizations: patches of the unit (k-1)-sphere in R^k whose
# tangent frames satisfy the outward-first convention: (n, frame) is the
# standard orientation of R^k, up to the recorded patch sign.


@dataclass(frozen=True)
class _Patch:
    label: str
    sigma: int
    grid: tuple  # tuples of parameter values
    shape: tuple  # grid shape for neighbor detection ((), (m,), (m, m))

    def embed(self, s):
        raise NotImplementedError


class _PointPatch(_Patch):
    direction: float = 1.0

    def embed(self, s):
        return np.array([self.direction]), np.zeros((1, 0))


class _CirclePatch(_Patch):
    def embed(self, s):
        th = float(s[0])
        return (
            np.array([np.cos(th), np.sin(th)]),
            np.array([[-np.sin(th)], [np.cos(th)]]),
        )


class _TwoSpherePatch(_Patch):
    flip: float = 1.0

    def embed(self, s):
        p, q = float(s[0]), float(s[1])
        f = self.flip
        rho2 = p * p + q * q
        d = 1.0 + rho2
        n = np.array([2.0 * p, 2.0 * f * q, f * (1.0 - rho2)]) / d
        dn_dp = np.array([2.0 * d - 4.0 * p * p, -4.0 * f * p * q, -4.0 * f * p]) / d**2
        dn_dq = np.array([-4.0 * p * q, 2.0 * f * d - 4.0 * f * q * q, -4.0 * f * q]) / d**2
        return n, np.column_stack([dn_dp, dn_dq])


def _sphere_patches(k: int, density: int):
    if k == 1:
        plus = _PointPatch("s0+", +1, ((),), ())
        minus = _PointPatch("s0-", -1, ((),), ())
        object.__setattr__(minus, "direction", -1.0)
        return [plus, minus]
    if k == 2:
        thetas = np.linspace(0.0, 2.0 * np.pi, density, endpoint=False)
        return [_CirclePatch("s1", +1, tuple((float(t),) for t in thetas), (density,))]
    if k == 3:
        m = max(6, density // 6)
        lin = np.linspace(-1.05, 1.05, m)
        grid = tuple((float(a), float(b)) for a in lin for b in lin)
        north = _TwoSpherePatch("s2+", +1, grid, (m, m))
        south = _TwoSpherePatch("s2-", +1, grid, (m, m))
        object.__setattr__(south, "flip", -1.0)
        return [north, south]
    raise MorseflowError(f"sphere parametrizations implemented up to dimension 2, got {k - 1}")


def _local_minima(patch: _Patch, dists):
    """Indices of grid points that are local minima of the approach distance."""
    d = np.asarray(dists)
    if patch.shape == ():
        return [0]
    if len(patch.shape) == 1:
        m = patch.shape[0]
        return [
            i
            for i in range(m)
            if d[i] <= d[(i - 1) % m] and d[i] <= d[(i + 1) % m]
        ]
    m = patch.shape[0]
    d2 = d.reshape(m, m)
    out = []
    for i in range(m):
        for j in range(m):
            nb = []
            if i > 0:
                nb.append(d2[i - 1, j])
            if i < m - 1:
                nb.append(d2[i + 1, j])
            if j > 0:
                nb.append(d2[i, j - 1])
            if j < m - 1:
                nb.append(d2[i, j + 1])
            if all(d2[i, j] <= v for v in nb):
                out.append(i * m + j)
    return out


# --------------------------------------------------------------------------
# chart bookkeeping


def _frame_to_chart(sys, p: Point, J, chart: int):
    """Re-express a point and a frame (columns) in a requested chart."""
    if p.chart == chart:
        return p, J
    c2, u2, T = sys.switch_chart(p.chart, p.array)
    if c2 != chart:
        raise MorseflowError("point not representable in requested chart")
    return Point.of(c2, u2), T @ J


def _sphere_point(sys, x, n):
    """Point on the eps-sphere of the unstable eigenspace, with its chart."""
    z = x.point.array + _SPHERE_EPS * (x.eigvecs[:, : x.index] @ n)
    return sys.normalize(Point.of(x.point.chart, z))


# --------------------------------------------------------------------------
# cached sphere scans: one forward scan of the whole boundary sphere serves
# every target of the right index.

_SCAN_CACHE: dict = {}


def _scan_sphere(sys, x, cps, settings, density):
    key = (id(sys), x.id, settings, density)
    hit = _SCAN_CACHE.get(key)
    if hit is not None and hit[0] is sys:
        return hit[1]
    patches = _sphere_patches(x.index, density)
    targets = [c for c in cps if c.id != x.id]
    loose = settings.loosened()
    data = []
    for patch in patches:
        rows = []
        for s in patch.grid:
            n, _ = patch.embed(s)
            z = _sphere_point(sys, x, n)
            limit, approach = scan_flow(
                sys, z, cps, loose, targets=targets, samples_per_chunk=24
            )
            rows.append((s, limit, approach))
        data.append((patch, rows))
    _SCAN_CACHE[key] = (sys, data)
    return data


# --------------------------------------------------------------------------
# Newton polishing of stable-manifold crossings


def _residual_chain(dst_sys, x2, w: Point, A, T, settings):
    """Unstable coefficients (and their Jacobian against A) after flowing w for time T.

    Returns (r, Dr, p, J_total, dist) where p is the flowed point in the chart
    of x2 and J_total maps chart vectors at w to chart vectors at p.
    """
    k2 = x2.index
    if T > 0.0:
        p, J = flow_with_jacobian(dst_sys, w, T, settings)
    else:
        p, J = w, np.eye(dst_sys.dim)
    p, J = _frame_to_chart(dst_sys, p, J, x2.point.chart)
    if not np.all(np.isfinite(J)) or np.max(np.abs(J)) > _JACOBIAN_GUARD:
        raise NonConvergenceError("flow Jacobian overflow; reduce the flow time")
    delta = dst_sys.displacement(x2.point, p)
    coeffs = x2.eigvecs_inv @ delta
    r = coeffs[:k2]
    Dr = (x2.eigvecs_inv @ J @ A)[:k2]
    return r, Dr, p, J, float(np.linalg.norm(delta))


def _newton_on_piece(piece_fn, dst_sys, x2, s0, T, settings, domain, max_iter=30):
    """Solve for zero unstable coefficients over the parameters of a cell piece.

    piece_fn(s) -> (z, Dz, w, A) gives the source point, its oriented tangent
    columns, the mapped point and the full map differential at z.
    """
    s = np.asarray(s0, dtype=float).copy()
    for _ in range(max_iter):
        z, Dz, w, A = piece_fn(s)
        r, Dr, p, Jtot, dist = _residual_chain(dst_sys, x2, w, A @ Dz if A is not None else Dz, T, settings)
        if np.linalg.norm(r) <= 1e-11:
            return s, (z, Dz, w, A, r, p, Jtot, dist)
        try:
            step = np.linalg.solve(Dr, r)
        except np.linalg.LinAlgError:
            return None
        if float(np.linalg.norm(step)) <= 1e-12 * max(1.0, float(np.linalg.norm(s))):
            # residual is at the integrator's roundoff floor
            return s, (z, Dz, w, A, r, p, Jtot, dist)
        limit = 0.5
        nrm = float(np.linalg.norm(step))
        if nrm > limit:
            step *= limit / nrm
        s = s - step
        if not domain(s):
            return None
    return None


def _dedup(sys, records, keyed):
    out = []
    seen = []
    for rec, key in zip(records, keyed):
        if any(
            len(k) == len(key)
            and np.linalg.norm(np.asarray(key) - np.asarray(k)) < _PARAM_DEDUP
            for k in seen
        ):
            continue
        if any(sys.distance(rec.location, r.location) < _LOCATION_DEDUP for r in out):
            continue
        seen.append(key)
        out.append(rec)
    return out


# --------------------------------------------------------------------------
# trajectory counting between critical points of adjacent index


def _trajectory_sign_and_margin(sys, x, y, p: Point, Jtot, tau):
    """Orientation sign of a connecting trajectory at a point p near y.

    The unstable frame of x pushed along the flow is contracted with the
    coorientation of the stable manifold of y; the trajectory counts positively
    when the resulting vector points along the flow.
    """
    B = Jtot @ x.eigvecs[:, : x.index]
    norms = np.linalg.norm(B, axis=0)
    B = B / norms
    c = y.stable_coframe
    rows = c.matrix
    margin = evaluation_margin(B, rows)
    if margin < tau:
        return 0, margin
    if rows.shape[0]:
        rows = rows / np.linalg.norm(rows, axis=1, keepdims=True)
        cf = CovectorFrame.from_matrix(rows)
    else:
        cf = c
    v = contract(Multivector.from_frame(B), cf)
    f = sys.flow_field(p.chart, p.array)
    dot = float(np.dot(v.array, f))
    return (1 if dot > 0 else -1), margin


def trajectory_records(
    sys: MorseSystem,
    x,
    y,
    cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 160,
) -> list[IntersectionRecord]:
    """Connecting trajectories from x down to y when ind x = ind y + 1.

    Each record sits at a point of the trajectory close to y; the sign is the
    oriented-intersection sign of the unstable manifold of x with the stable
    manifold of y.
    """
    k = x.index
    if y.index != k - 1:
        raise MorseflowError("trajectory_records expects an index gap of one")
    data = _scan_sphere(sys, x, cps, settings, density)
    records = []
    keys = []
    for patch, rows in data:
        dists = [rows[i][2][y.id][0] for i in range(len(rows))]
        for i in _local_minima(patch, dists):
            s0, limit, approach = rows[i]
            d0, t0 = approach[y.id]
            if d0 > _SEED_DISTANCE:
                continue
            if k == 1:
                if limit != y.id:
                    continue
                sol = _polish_trajectory(sys, x, y, patch, np.zeros(0), t0, settings)
            else:
                sol = _polish_trajectory(sys, x, y, patch, np.asarray(s0), t0, settings)
            if sol is None:
                continue
            s_star, n_star, p, Jtot, T, res, dist = sol
            if dist > _RECORD_APPROACH:
                continue
            # the pushed unstable frame already encodes which branch of the
            # sphere the trajectory leaves from, so no patch sign is applied
            sign, margin = _trajectory_sign_and_margin(sys, x, y, p, Jtot, tau)
            z = _sphere_point(sys, x, n_star)
            records.append(
                IntersectionRecord(z, patch.label, tuple(float(v) for v in s_star), sign, margin, res, T)
            )
            keys.append(tuple(n_star))
    return _dedup(sys, records, keys)


def _polish_trajectory(sys, x, y, patch, s0, t0, settings):
    """Newton stages on the boundary sphere: returns (s, n, p, J, T, residual, dist)."""

    def piece_fn(s):
        n, Tn = patch.embed(s)
        z = _sphere_point(sys, x, n)
        Dz = _SPHERE_EPS * (x.eigvecs[:, : x.index] @ Tn)
        return z, Dz, z, None

    def domain(s):
        return bool(np.all(np.abs(s) < 50.0))

    T = max(t0, 0.0)
    s = np.asarray(s0, dtype=float)
    result = None
    for _ in range(3):
        sol = _newton_on_piece(piece_fn, sys, y, s, T, settings, domain)
        if sol is None:
            return None
        s, (z, Dz, _, _, r, p, Jtot, dist) = sol
        n, _ = patch.embed(s)
        result = (s, n, p, Jtot, T, float(np.linalg.norm(r)), dist)
        if dist <= 10.0 * settings.r_conv:
            break
        # flow the polished point again to approach the target more closely
        _, approach = scan_flow(
            sys, z, [y], settings.loosened(), targets=[y], samples_per_chunk=24
        )
        d1, t1 = approach[y.id]
        if t1 <= T + 1e-9 or d1 >= dist * 0.5:
            break
        T = t1
    return result


def count_trajectories(
    sys: MorseSystem,
    x,
    y,
    cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
) -> int:
    """Signed number of negative-gradient trajectories from x to y (index gap one)."""
    records = trajectory_records(sys, x, y, cps, settings, tau=tau)
    for rec in records:
        if rec.margin < tau:
            raise TransversalityError(
                f"trajectory {x.id}->{y.id} margin {rec.margin:.3e} below {tau:.3e}",
                margin=rec.margin,
            )
    return int(sum(rec.sign for rec in records))


# --------------------------------------------------------------------------
# cell pieces for mapped-cell intersections


@dataclass(frozen=True)
class _Piece:
    label: str
    sigma: int
    dim: int
    grid: tuple
    fn: object  # s -> (z, Dz) with Dz columns in the cell orientation
    domain: object
    pfn: object = None  # cheap point-only variant of fn for seeding passes
    scales: tuple = ()  # grid spacing per parameter axis, for seed clustering

    def point_at(self, s):
        if self.pfn is not None:
            return self.pfn(s)
        return self.fn(s)[0]


def _cell_pieces(sys, x, settings, density, t_count=16, rate_floor=None):
    """Disk-plus-cylinder parametrization of the open cell of x.

    The cylinder time horizon budgets for leaving x at its slowest unstable
    rate plus approaching the slowest critical point of the whole system, so
    the grid reaches every region of the open cell.
    """
    k = x.index
    V = x.eigvecs[:, :k]
    rate = min(abs(v) for v in x.eigenvalues[:k])
    if rate_floor is None:
        rate_floor = rate
    t_hi = 1.3 * np.log(1.0 / _SPHERE_EPS) * (1.0 / rate + 1.0 / rate_floor)
    pieces = []

    loose = settings.loosened(1e4)

    def disk_fn(a):
        z = sys.normalize(Point.of(x.point.chart, x.point.array + _SPHERE_EPS * (V @ a)))
        return z, _SPHERE_EPS * V

    def disk_pfn(a):
        return sys.normalize(Point.of(x.point.chart, x.point.array + _SPHERE_EPS * (V @ a)))

    if k == 1:
        grid = tuple((float(a),) for a in np.linspace(-1.0, 1.0, 9))
        spacing = 0.25
    elif k == 2:
        lin = np.linspace(-1.0, 1.0, 7)
        grid = tuple((float(a), float(b)) for a in lin for b in lin if a * a + b * b <= 1.1)
        spacing = float(lin[1] - lin[0])
    else:
        lin = np.linspace(-1.0, 1.0, 5)
        grid = tuple(
            (float(a), float(b), float(c))
            for a in lin
            for b in lin
            for c in lin
            if a * a + b * b + c * c <= 1.1
        )
        spacing = float(lin[1] - lin[0])
    pieces.append(
        _Piece("disk", +1, k, grid, disk_fn, lambda a: float(np.dot(a, a)) <= 1.44,
               disk_pfn, (spacing,) * k)
    )

    sph_density = density if k > 1 else 1
    for patch in _sphere_patches(k, max(8, sph_density)):

        def cyl_fn(s, patch=patch):
            t = float(s[0])
            n, Tn = patch.embed(s[1:])
            z0 = _sphere_point(sys, x, n)
            if t > 0.0:
                z, J = flow_with_jacobian(sys, z0, t, settings)
            else:
                z, J = z0, np.eye(sys.dim)
            f = sys.flow_field(z.chart, z.array)
            side = J @ (_SPHERE_EPS * (V @ Tn))
            Dz = np.column_stack([f] + [side[:, i] for i in range(side.shape[1])])
            return z, Dz

        def cyl_pfn(s, patch=patch):
            t = float(s[0])
            n, _ = patch.embed(s[1:])
            z0 = _sphere_point(sys, x, n)
            return flow(sys, z0, t, loose) if t > 0.0 else z0

        nt = max(t_count, int(np.ceil(1.2 * t_hi * rate)))
        ts = np.linspace(0.0, t_hi, min(nt, 40))
        grid = tuple((float(t),) + tuple(s) for t in ts for s in patch.grid)
        if k == 1:
            ang_scales = ()
        elif k == 2:
            ang_scales = (2.0 * np.pi / max(1, len(patch.grid)),)
        else:
            m = patch.shape[0]
            ang_scales = (2.1 / (m - 1),) * 2
        scales = (float(ts[1] - ts[0]),) + ang_scales

        def cyl_domain(s, t_hi=t_hi):
            return -1e-6 <= s[0] <= 3.0 * t_hi and bool(np.all(np.abs(s[1:]) < 50.0))

        pieces.append(
            _Piece("cyl-" + patch.label, patch.sigma, k, grid, cyl_fn, cyl_domain, cyl_pfn, scales)
        )
    return pieces


def _piece_local_minima(piece, dists):
    """Seed indices: local minima of the approach distance over the piece grid.

    Grids here are irregular (trimmed balls, products of a time axis with a
    sphere), so a greedy covering stands in for strict local minima: the best
    remaining grid point wins and neighbors within two grid spacings of it are
    suppressed, measured per axis.
    """
    d = np.asarray(dists)
    order = np.argsort(d)
    picked = []
    scales = np.asarray(piece.scales if piece.scales else (1.0,) * piece.dim)
    params = [np.asarray(piece.grid[i]) / scales for i in range(len(piece.grid))]
    for i in order:
        if d[i] > _SEED_DISTANCE:
            break
        if any(np.linalg.norm(params[i] - params[j]) < 2.2 for j in picked):
            continue
        picked.append(i)
    return picked


class _IdentityMap:
    def __init__(self, sys):
        self.src = sys
        self.dst = sys

    def eval(self, p):
        return self.dst.normalize(p)

    def jacobian(self, p):
        q = self.dst.normalize(p)
        if q.chart == p.chart:
            return np.eye(self.src.dim)
        _, _, T = self.src.switch_chart(p.chart, p.array)
        return T


def map_cell_records(
    phi,
    cell,
    src_cps,
    dst_sys: MorseSystem,
    x2,
    dst_cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 48,
    flow_time: float | None = None,
) -> list[IntersectionRecord]:
    """Signed intersections of the mapped open cell of `cell` with the stable
    manifold of x2 (equal index).

    With flow_time=None the stable manifold is detected asymptotically: each
    candidate is flowed until close to x2 before the unstable coefficients are
    zeroed.  A positive flow_time instead pushes the mapped cell by the flow
    for that fixed time and counts preimages of the local transversal at x2,
    which is the finite-time variant.
    """
    src_sys = phi.src
    k = cell.index
    if x2.index != k:
        raise MorseflowError("mapped-cell intersections need equal indices")
    if k == 0:
        raise MorseflowError("use basin membership for index-0 cells")
    rate_floor = min(abs(v) for c in src_cps for v in c.eigenvalues)
    piece_key = (id(phi), cell.id, density, settings)
    hit = _PIECE_CACHE.get(piece_key)
    if hit is not None and hit[0] is phi:
        pieces = hit[1]
    else:
        pieces = _cell_pieces(src_sys, cell, settings, density, rate_floor=rate_floor)
        _PIECE_CACHE[piece_key] = (phi, pieces)
    records = []
    for piece in pieces:

        def piece_fn(s, piece=piece):
            z, Dz = piece.fn(s)
            w = phi.eval(z)
            A = phi.jacobian(z)
            return z, Dz, w, A

        seeds = _map_seed_data(phi, piece, dst_sys, x2, dst_cps, settings)
        for s0, t0 in seeds:
            sol = _polish_map_cell(piece_fn, piece, dst_sys, x2, s0, t0, settings)
            if sol is None:
                continue
            s_star, z, Dz, A, p, Jtot, T, res, dist = sol
            if dist > _RECORD_APPROACH:
                continue
            if flow_time is not None:
                fixed = _refine_fixed_time(
                    piece_fn, piece, dst_sys, x2, s_star, flow_time, settings, tau
                )
                if fixed is not None:
                    records.append(fixed)
                continue
            B = Jtot @ (A @ Dz if A is not None else Dz)
            B = B / np.linalg.norm(B, axis=0)
            rows = x2.stable_coframe.matrix
            margin = evaluation_margin(B, rows)
            if margin < tau:
                sign = 0
            else:
                det = np.linalg.det(rows @ B)
                sign = piece.sigma * (1 if det > 0 else -1)
            records.append(
                IntersectionRecord(
                    z, piece.label, tuple(float(v) for v in s_star), sign, margin, res, T
                )
            )
    return _dedup_by_location(records, src_sys)


_PIECE_CACHE: dict = {}
_MAP_SCAN_CACHE: dict = {}


def _map_seed_data(phi, piece, dst_sys, x2, dst_cps, settings):
    """Seed parameters and approach times for one piece against one target.

    The forward scans of the mapped grid points are shared between all targets
    of the same index through a cache keyed by the map and the piece.
    """
    key = (id(phi), id(dst_sys), id(piece), settings)
    hit = _MAP_SCAN_CACHE.get(key)
    if hit is None or hit[0] is not phi:
        loose = settings.loosened(1e4)
        targets = [c for c in dst_cps if c.index == x2.index]
        rows = []
        for s in piece.grid:
            z = piece.point_at(np.asarray(s))
            w = phi.eval(z)
            _, approach = scan_flow(
                dst_sys, w, dst_cps, loose, targets=targets, samples_per_chunk=24
            )
            rows.append(approach)
        _MAP_SCAN_CACHE[key] = (phi, rows)
    else:
        rows = hit[1]
    if x2.id not in rows[0]:
        # cached scan was made for a different index; redo without the cache
        _MAP_SCAN_CACHE.pop(key, None)
        return _map_seed_data(phi, piece, dst_sys, x2, dst_cps, settings)
    dists = [r[x2.id][0] for r in rows]
    return [
        (np.asarray(piece.grid[i], dtype=float), rows[i][x2.id][1])
        for i in _piece_local_minima(piece, dists)
    ]


def _refine_fixed_time(piece_fn, piece, dst_sys, x2, s0, T, settings, tau, max_iter=25):
    """Finite-time count: preimage of a regular value inside the cell of x2.

    The regular value sits at fixed unstable coordinates c_target; the flow for
    time T pulls it exponentially close to x2, so the refined solution is an
    honest preimage under the time-T pushed map.
    """
    k = x2.index
    c_target = 0.05 * _fixed_direction(k)
    s = np.asarray(s0, dtype=float).copy()
    for _ in range(max_iter):
        z, Dz, w, A = piece_fn(s)
        AD = A @ Dz if A is not None else Dz
        r, Dr, p, J, dist = _residual_chain(dst_sys, x2, w, AD, T, settings)
        r = r - c_target
        if np.linalg.norm(r) <= 1e-9:
            break
        try:
            step = np.linalg.solve(Dr, r)
        except np.linalg.LinAlgError:
            return None
        if float(np.linalg.norm(step)) <= 1e-13 * max(1.0, float(np.linalg.norm(s))):
            break
        nrm = float(np.linalg.norm(step))
        if nrm > 0.2:
            step *= 0.2 / nrm
        s = s - step
        if not piece.domain(s):
            return None
    else:
        return None
    stable = (x2.eigvecs_inv @ dst_sys.displacement(x2.point, p))[k:]
    if float(np.linalg.norm(stable)) > 0.2:
        return None
    B = J @ AD
    Bn = B / np.linalg.norm(B, axis=0)
    rows = x2.eigvecs_inv[:k]
    margin = evaluation_margin(Bn, rows)
    if margin < tau:
        sign = 0
    else:
        det = np.linalg.det(rows @ B)
        sign = piece.sigma * (1 if det > 0 else -1)
    return IntersectionRecord(
        z, piece.label, tuple(float(v) for v in s), sign, margin,
        float(np.linalg.norm(r)), T,
    )


def _fixed_direction(k: int) -> np.ndarray:
    v = np.array([1.0, 0.7, 0.4][:k])
    return v / np.linalg.norm(v)


def _dedup_by_location(records, src_sys):
    out = []
    for rec in sorted(records, key=lambda r: r.params):
        if any(src_sys.distance(rec.location, r.location) < 1e-6 for r in out):
            continue
        out.append(rec)
    return out


def _polish_map_cell(piece_fn, piece, dst_sys, x2, s0, t0, settings, fixed_time=False):
    T = max(float(t0), 0.0)
    s = np.asarray(s0, dtype=float)
    result = None
    for _ in range(3):
        sol = _newton_on_piece(piece_fn, dst_sys, x2, s, T, settings, piece.domain)
        if sol is None:
            return None
        s, (z, Dz, w, A, r, p, Jtot, dist) = sol
        result = (s, z, Dz, A, p, Jtot, T, float(np.linalg.norm(r)), dist)
        if fixed_time or dist <= 10.0 * settings.r_conv:
            break
        _, approach = scan_flow(
            dst_sys, w, [x2], settings.loosened(), targets=[x2], samples_per_chunk=24
        )
        d1, t1 = approach[x2.id]
        if t1 <= T + 1e-9 or d1 >= dist * 0.5:
            break
        T = t1
    return result


def map_cell_count(
    phi, cell, src_cps, dst_sys, x2, dst_cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    flow_time: float | None = None,
) -> int:
    """Signed intersection count behind one matrix entry of an induced chain map."""
    if cell.index == 0:
        from .dynamics import limit_point

        # basin membership of the mapped point; pushing by a finite flow time
        # never changes the basin, so both methods share this entry
        w = phi.eval(cell.point)
        return 1 if limit_point(dst_sys, w, dst_cps, settings) == x2.id else 0
    records = map_cell_records(
        phi, cell, src_cps, dst_sys, x2, dst_cps, settings, tau=tau, flow_time=flow_time
    )
    for rec in records:
        if rec.margin < tau:
            raise TransversalityError(
                f"mapped cell {cell.id} meets S^{x2.id} with margin {rec.margin:.3e}",
                margin=rec.margin,
            )
    return int(sum(rec.sign for rec in records))


def flowed_sphere_degree(
    sys: MorseSystem,
    x,
    y,
    cps,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
) -> int:
    """Degree of the flowed boundary sphere of x over the cell of y (index gap one).

    The boundary sphere of the cell of x is pushed forward by the flow for a
    fixed time chosen from the decay rates, after which it lies near the
    skeleton of lower cells; the degree is the signed number of times it passes
    through the small transversal slice at y.
    """
    k = x.index
    if y.index != k - 1:
        raise MorseflowError("flowed_sphere_degree expects an index gap of one")
    max_rate = max(abs(v) for c in cps for v in c.eigenvalues)
    # exp(rate * T) amplification of roundoff caps the usable fixed time
    T = 30.0 / max_rate

    if k == 1:
        total = 0
        for sigma in (+1, -1):
            z = _sphere_point(sys, x, np.array([float(sigma)]))
            if limit_point(sys, z, cps, settings.loosened()) == y.id:
                total += sigma
        return total

    patches = _sphere_patches(k, 64)
    records = []
    keys = []
    for patch in patches:

        def piece_fn(s, patch=patch):
            n, Tn = patch.embed(s)
            z = _sphere_point(sys, x, n)
            Dz = _SPHERE_EPS * (x.eigvecs[:, : x.index] @ Tn)
            return z, Dz, z, None

        dists = []
        for s in patch.grid:
            n, _ = patch.embed(s)
            z = _sphere_point(sys, x, n)
            q = flow(sys, z, T, settings.loosened())
            dists.append(sys.distance(q, y.point))
        for i in _local_minima(patch, dists):
            if dists[i] > _SEED_DISTANCE:
                continue
            sol = _newton_on_piece(
                piece_fn, sys, y, np.asarray(patch.grid[i], dtype=float), T, settings,
                lambda s: bool(np.all(np.abs(s) < 50.0)),
            )
            if sol is None:
                continue
            s_star, (z, Dz, _, _, r, p, Jtot, dist) = sol
            stable = (y.eigvecs_inv @ sys.displacement(y.point, p))[y.index :]
            if float(np.linalg.norm(stable)) > 0.2:
                continue
            B = Jtot @ Dz
            B = B / np.linalg.norm(B, axis=0)
            rows = y.stable_coframe.matrix
            margin = evaluation_margin(B, rows)
            if margin < tau:
                raise TransversalityError(
                    f"flowed sphere of {x.id} meets the slice at {y.id} with margin {margin:.3e}",
                    margin=margin,
                )
            det = np.linalg.det(rows @ B)
            # the cell orientation at the crossing is (flow direction, pushed
            # sphere frame); moving the flow column to the front past the k-1
            # sphere columns contributes (-1)^(k-1)
            sign = patch.sigma * (-1) ** (k - 1) * (1 if det > 0 else -1)
            n_star, _ = patch.embed(s_star)
            records.append(
                IntersectionRecord(z, patch.label, tuple(map(float, s_star)), sign, margin,
                                   float(np.linalg.norm(r)), T)
            )
            keys.append(tuple(n_star))
    deduped = _dedup(sys, records, keys)
    return int(sum(r.sign for r in deduped))


# --------------------------------------------------------------------------
# sampling and diagnostics


def cell_samples(sys, cell, cps, settings, samples=40, rng_seed=7):
    """Deterministic points spread over the open cell of a critical point."""
    k = cell.index
    pts = [cell.point]
    if k == 0 or samples <= 1:
        return pts
    rng = np.random.default_rng(rng_seed)
    rate = min(abs(v) for v in cell.eigenvalues[:k])
    t_hi = np.log(0.4 / _SPHERE_EPS) / rate
    loose = settings.loosened()
    while len(pts) < samples:
        n = rng.normal(size=k)
        n /= np.linalg.norm(n)
        t = float(rng.uniform(0.0, t_hi))
        z = _sphere_point(sys, cell, n)
        pts.append(flow(sys, z, t, loose) if t > 0 else z)
    return pts


def equal_index_connection(sys, x, y, cps, settings, density=32, threshold=1e-3):
    """Whether the flowed boundary sphere of x comes suspiciously close to y."""
    if x.index == 0:
        return False
    loose = settings.loosened()
    patches = _sphere_patches(x.index, density)
    for patch in patches:
        for s in patch.grid:
            n, _ = patch.embed(s)
            z = _sphere_point(sys, x, n)
            _, approach = scan_flow(sys, z, cps, loose, targets=[y], samples_per_chunk=24)
            if approach[y.id][0] < threshold:
                return True
    return False


def wide_gap_margins(sys, x, y, cps, settings, density=24, max_checks=8):
    """Transversality margins of the unstable family of x against the stable
    manifold of y when the index gap exceeds one (positive-dimensional
    intersections), sampled at close approaches."""
    data = _scan_sphere(sys, x, cps, settings, density if x.index > 1 else 2)
    margins = []
    for patch, rows in data:
        for s, limit, approach in rows:
            d, t = approach[y.id]
            if d > 0.05 or t <= 0.0:
                continue
            n, Tn = patch.embed(s)
            z = _sphere_point(sys, x, n)
            try:
                p, J = flow_with_jacobian(sys, z, t, settings)
                p, J = _frame_to_chart(sys, p, J, y.point.chart)
            except (NonConvergenceError, MorseflowError):
                continue
            if x.index > 1:
                side = J @ (_SPHERE_EPS * (x.eigvecs[:, : x.index] @ Tn))
                B = np.column_stack([sys.flow_field(p.chart, p.array), side])
            else:
                B = J @ x.eigvecs[:, :1]
            B = B / np.linalg.norm(B, axis=0)
            margins.append(evaluation_margin(B, y.stable_coframe.matrix))
            if len(margins) >= max_checks:
                return margins
    return margins


# --------------------------------------------------------------------------
# triple intersections for cup products


_CUP_SCAN_CACHE: dict = {}


def _cup_scan(sys_aux, cps_aux, piece, settings):
    """Approach data of the flowed piece grid in one auxiliary system.

    One forward scan per grid point records closest approaches to every
    critical point of the auxiliary system, so all saddle pairs share it.
    """
    key = (id(sys_aux), id(piece), settings)
    hit = _CUP_SCAN_CACHE.get(key)
    if hit is not None and hit[0] is sys_aux and hit[1] is piece:
        return hit[2]
    loose = settings.loosened(1e4)
    rows = []
    for s in piece.grid:
        z = piece.point_at(np.asarray(s))
        _, approach = scan_flow(sys_aux, z, cps_aux, loose, targets=cps_aux,
                                samples_per_chunk=24)
        rows.append(approach)
    _CUP_SCAN_CACHE[key] = (sys_aux, piece, rows)
    return rows


def cup_records(
    sys0: MorseSystem,
    x3,
    cps0,
    pairs,
    settings: FlowSettings = FlowSettings(),
    tau: float = 1e-6,
    density: int = 32,
):
    """Points of the cell of x3 lying on two stable manifolds from auxiliary systems.

    `pairs` is ((sys1, x1, cps1), (sys2, x2, cps2)); the systems must share the
    manifold of sys0 and cps_i catalogue each auxiliary system.  Returns records
    whose sign is the iterated-contraction sign of the cell orientation against
    the two transported coorientations, first x1 then x2.
    """
    (sys1, x1, cps1), (sys2, x2, cps2) = pairs
    if x3.index != x1.index + x2.index:
        raise MorseflowError("cup-product indices must add up")
    rate_floor = min(abs(v) for c in cps0 for v in c.eigenvalues)
    piece_key = (id(sys0), x3.id, density, settings)
    hit = _PIECE_CACHE.get(piece_key)
    if hit is not None and hit[0] is sys0:
        pieces = hit[1]
    else:
        pieces = _cell_pieces(sys0, x3, settings, density, rate_floor=rate_floor)
        _PIECE_CACHE[piece_key] = (sys0, pieces)
    records = []
    for piece in pieces:
        app1 = _cup_scan(sys1, cps1, piece, settings)
        app2 = _cup_scan(sys2, cps2, piece, settings)
        dists = [max(r1[x1.id][0], r2[x2.id][0]) for r1, r2 in zip(app1, app2)]
        seeds_t = [(r1[x1.id][1], r2[x2.id][1]) for r1, r2 in zip(app1, app2)]
        for i in _piece_local_minima(piece, dists):
            if dists[i] > _SEED_DISTANCE:
                continue
            sol = _polish_cup(piece, sys1, x1, sys2, x2, np.asarray(piece.grid[i], dtype=float),
                              seeds_t[i], settings)
            if sol is None:
                continue
            s_star, z, Dz, parts, res = sol
            (p1, J1, d1, T1), (p2, J2, d2, T2) = parts
            if max(d1, d2) > _RECORD_APPROACH:
                continue
            rows1 = x1.stable_coframe.matrix @ J1
            rows2 = x2.stable_coframe.matrix @ J2
            stacked = np.vstack([rows1, rows2])
            Bn = Dz / np.linalg.norm(Dz, axis=0)
            margin = evaluation_margin(Bn, stacked)
            if margin < tau:
                sign = 0
            else:
                o = Multivector.from_frame(Bn)
                c1 = CovectorFrame.from_matrix(rows1 / np.linalg.norm(rows1, axis=1, keepdims=True))
                c2 = CovectorFrame.from_matrix(rows2 / np.linalg.norm(rows2, axis=1, keepdims=True))
                scalar = contract(contract(o, c1), c2).coeffs[0]
                sign = piece.sigma * (1 if scalar > 0 else -1)
            records.append(
                IntersectionRecord(z, piece.label, tuple(map(float, s_star)), sign, margin,
                                   res, max(T1, T2))
            )
    return _dedup_by_location(records, sys0)


def _polish_cup(piece, sys1, x1, sys2, x2, s0, t0, settings, max_iter=30):
    """Newton on the stacked unstable coefficients of the two target systems.

    Returns (s, z, Dz, ((p1, J1, d1, T1), (p2, J2, d2, T2)), residual_norm)
    where J_i transports chart vectors at z to the chart of x_i along the flow
    of the respective system.
    """
    T1, T2 = max(t0[0], 0.0), max(t0[1], 0.0)
    s = np.asarray(s0, dtype=float).copy()
    eye = None
    result = None
    for _stage in range(3):
        converged = None
        for _ in range(max_iter):
            z, Dz = piece.fn(s)
            if eye is None:
                eye = np.eye(Dz.shape[0])
            r1, Dr1, p1, J1, d1 = _residual_chain(sys1, x1, z, eye, T1, settings)
            r2, Dr2, p2, J2, d2 = _residual_chain(sys2, x2, z, eye, T2, settings)
            r = np.concatenate([r1, r2])
            Dr = np.vstack([Dr1 @ Dz, Dr2 @ Dz])
            if np.linalg.norm(r) <= 1e-11:
                converged = (z, Dz, ((p1, J1, d1, T1), (p2, J2, d2, T2)),
                             float(np.linalg.norm(r)))
                break
            try:
                step = np.linalg.solve(Dr, r)
            except np.linalg.LinAlgError:
                return None
            if float(np.linalg.norm(step)) <= 1e-12 * max(1.0, float(np.linalg.norm(s))):
                converged = (z, Dz, ((p1, J1, d1, T1), (p2, J2, d2, T2)),
                             float(np.linalg.norm(r)))
                break
            nrm = float(np.linalg.norm(step))
            if nrm > 0.5:
                step *= 0.5 / nrm
            s = s - step
            if not piece.domain(s):
                return None
        if converged is None:
            return None
        z, Dz, parts, res = converged
        result = (s, z, Dz, parts, res)
        (_, _, d1, _), (_, _, d2, _) = parts
        if max(d1, d2) <= 10.0 * settings.r_conv:
            return result
        loose = settings.loosened()
        _, a1 = scan_flow(sys1, z, [x1], loose, targets=[x1], samples_per_chunk=24)
        _, a2 = scan_flow(sys2, z, [x2], loose, targets=[x2], samples_per_chunk=24)
        improved = False
        if a1[x1.id][1] > T1 + 1e-9 and a1[x1.id][0] < d1 * 0.5:
            T1 = a1[x1.id][1]
            improved = True
        if a2[x2.id][1] > T2 + 1e-9 and a2[x2.id][0] < d2 * 0.5:
            T2 = a2[x2.id][1]
            improved = True
        if not improved:
            return result
    return result
