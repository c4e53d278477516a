"""Negative gradient flow: integration, variational Jacobians and forward limits.

Integration uses the adaptive 8th-order DOP853 pair from scipy with step-doubling
error control below the configured tolerances.  Chart hand-off happens through
solve_ivp events when a trajectory leaves the preferred region of a sphere chart;
flat tori integrate unwrapped and wrap on exit.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

from .errors import MorseflowError, NonConvergenceError
from .geometry import MorseSystem, Point

__all__ = [
    "FlowSettings",
    "TrajectorySample",
    "flow",
    "flow_with_jacobian",
    "flow_trajectory",
    "limit_point",
    "scan_flow",
    "trajectory_to_csv",
]


@dataclass(frozen=True)
class FlowSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    t_max: float = 200.0
    r_conv: float = 1e-4
    backward_cap: float = 50.0

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "max_step", "t_max", "r_conv", "backward_cap"):
            if getattr(self, name) <= 0:
                raise MorseflowError(f"flow setting {name} must be positive")

    def loosened(self, factor: float = 100.0) -> "FlowSettings":
        """Cheaper tolerances for scanning/seeding passes; final answers never use these."""
        return replace(self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor)


@dataclass(frozen=True)
class TrajectorySample:
    times: tuple[float, ...]
    points: tuple[Point, ...]
    values: tuple[float, ...]
    limit: str | None = None


def _segment(sys, chart, u, t_span, settings, jac=False, sign=1.0, dense=False):
    """Integrate one chart segment; returns (t_reached, x, J, switched, dense_sol)."""
    n = sys.dim

    if jac:

        def rhs(t, state):
            x = state[:n]
            J = state[n:].reshape(n, n)
            f = sign * sys.flow_field(chart, x)
            A = sign * sys.flow_field_jacobian(chart, x)
            return np.concatenate([f, (A @ J).ravel()])

        state0 = np.concatenate([u, np.eye(n).ravel()])
    else:

        def rhs(t, state):
            return sign * sys.flow_field(chart, state)

        state0 = np.array(u, dtype=float)

    events = []
    if sys.manifold.ncharts > 1:

        def leave(t, state):
            x = state[:n]
            return float(x @ x) - 1.5**2

        leave.terminal = True
        leave.direction = 1.0
        events.append(leave)
    if jac:
        # restart the variational matrix before roundoff from its largest
        # entries (|J| * eps) outgrows the absolute tolerance on its smallest,
        # which would stall the step-size control; the caller accumulates the
        # product of per-segment matrices
        def jac_cap(t, state):
            return float(np.abs(state[n:]).max()) - 1e4

        jac_cap.terminal = True
        jac_cap.direction = 1.0
        events.append(jac_cap)
    events = events or None

    sol = solve_ivp(
        rhs,
        t_span,
        state0,
        method="DOP853",
        rtol=settings.rel_tol,
        atol=settings.abs_tol,
        max_step=settings.max_step,
        events=events,
        dense_output=dense,
    )
    if not sol.success:
        raise NonConvergenceError(f"integrator failed near chart {chart}, coords {u}: {sol.message}")
    t_reached = sol.t[-1]
    state = sol.y[:, -1]
    x = state[:n]
    J = state[n:].reshape(n, n) if jac else None
    switched = bool(sys.manifold.ncharts > 1 and events and sol.t_events[0].size > 0)
    capped = bool(jac and events and sol.t_events[-1].size > 0 and not switched)
    return t_reached, x, J, switched, capped, (sol.sol if dense else None)


def _integrate(sys, p: Point, t: float, settings: FlowSettings, jac: bool):
    """Flow for time |t| (backward if t < 0), handling chart switches."""
    if t < 0 and -t > settings.backward_cap + 1e-12:
        raise MorseflowError(
            f"backward flow time {-t} exceeds the cap {settings.backward_cap}"
        )
    sign = 1.0 if t >= 0 else -1.0
    total = abs(t)
    chart, u = p.chart, p.array.copy()
    J = np.eye(sys.dim)
    elapsed = 0.0
    guard = 0
    while elapsed < total - 1e-14:
        t_r, u, Jseg, switched, capped, _ = _segment(
            sys, chart, u, (elapsed, total), settings, jac=jac, sign=sign
        )
        if jac:
            J = Jseg @ J
        elapsed = t_r
        if switched:
            chart, u, T = sys.switch_chart(chart, u)
            if jac:
                J = T @ J
        elif not capped and elapsed < total - 1e-14:
            raise NonConvergenceError(
                f"integrator stalled at t={elapsed} (chart {chart}, coords {u})"
            )
        if switched or capped:
            guard += 1
            if guard > 10000:
                raise NonConvergenceError("excessive chart switching; step-size underflow suspected")
    q = sys.normalize(Point.of(chart, u))
    if q.chart != chart and jac:
        # normalize may re-chart spheres; carry the frame through the transition
        _, _, T = sys.switch_chart(chart, u)
        J = T @ J
    return q, J


def flow(sys: MorseSystem, p: Point, t: float, settings: FlowSettings = FlowSettings()) -> Point:
    """Time-t point of the negative gradient flow through p (t < 0 flows backward)."""
    if t == 0.0:
        return sys.normalize(p)
    q, _ = _integrate(sys, p, t, settings, jac=False)
    return q


def flow_with_jacobian(
    sys: MorseSystem, p: Point, t: float, settings: FlowSettings = FlowSettings()
):
    """Flow together with the chart-coordinate differential of the time-t flow map,
    obtained from the variational equation dJ/dt = A(x(t)) J."""
    if t == 0.0:
        return sys.normalize(p), np.eye(sys.dim)
    return _integrate(sys, p, t, settings, jac=True)


def flow_trajectory(
    sys: MorseSystem,
    p: Point,
    t: float,
    settings: FlowSettings = FlowSettings(),
    samples: int = 200,
) -> TrajectorySample:
    """Sampled trajectory for export/plotting; F decreases along the samples."""
    times = np.linspace(0.0, t, samples)
    pts = []
    vals = []
    q = sys.normalize(p)
    prev_t = 0.0
    for tk in times:
        if tk > prev_t:
            q = flow(sys, q, tk - prev_t, settings)
            prev_t = tk
        pts.append(q)
        vals.append(sys.value(q.chart, q.array))
    return TrajectorySample(tuple(float(x) for x in times), tuple(pts), tuple(vals))


def trajectory_to_csv(sample: TrajectorySample) -> str:
    buf = io.StringIO()
    dim = len(sample.points[0].coords)
    writer = csv.writer(buf)
    writer.writerow(["t", "chart"] + [f"x{i}" for i in range(dim)] + ["F"])
    for t, p, v in zip(sample.times, sample.points, sample.values):
        writer.writerow([repr(t), p.chart] + [repr(c) for c in p.coords] + [repr(v)])
    return buf.getvalue()


def _near_target(sys, cp, q: Point, r_conv: float):
    """(distance, unstable coefficients) of q relative to a catalogued critical point."""
    d = sys.distance(q, cp.point)
    if d > r_conv:
        return d, None
    try:
        delta = sys.displacement(cp.point, q)
    except MorseflowError:
        return d, None
    coeffs = cp.eigvecs_inv @ delta
    return d, coeffs[: cp.index]


def _accepts(sys, cp, q: Point, r_conv: float) -> bool:
    """Basin membership: radius r_conv plus the linear Lyapunov (decrease-region) test.

    Radius alone misclassifies near saddles, so the unstable component of the
    displacement must be dominated by the total displacement.
    """
    d, ucomp = _near_target(sys, cp, q, r_conv)
    if ucomp is None:
        return False
    if d <= 1e-9:
        return True
    return float(np.linalg.norm(ucomp)) <= 0.1 * d


def limit_point(
    sys: MorseSystem,
    p: Point,
    cps,
    settings: FlowSettings = FlowSettings(),
) -> str:
    """Id of the critical point the forward flow through p converges to.

    Raises NonConvergenceError if no basin is entered within the horizon, which
    signals proximity to a stable-manifold boundary.
    """
    limit, _ = scan_flow(sys, p, cps, settings, targets=())
    if limit is None:
        raise NonConvergenceError(
            f"no convergence within t_max={settings.t_max} from chart {p.chart} {p.coords}"
        )
    return limit


def scan_flow(
    sys: MorseSystem,
    p: Point,
    cps,
    settings: FlowSettings,
    targets=(),
    chunk: float = 1.0,
    samples_per_chunk: int = 8,
):
    """Forward scan recording the basin limit and closest approaches to chosen targets.

    Returns (limit_id_or_None, {target_id: (min_distance, time_of_min)}).
    The scan stops as soon as a basin test passes; approach minima recorded up to
    that moment are final because trajectories never leave a basin.
    """
    approach = {cp.id: (np.inf, 0.0) for cp in targets}
    q = sys.normalize(p)

    def record(qq, tt):
        for cp in targets:
            d = sys.distance(qq, cp.point)
            if d < approach[cp.id][0]:
                approach[cp.id] = (d, tt)

    record(q, 0.0)
    for cp in cps:
        if _accepts(sys, cp, q, settings.r_conv):
            return cp.id, approach

    chart, u = q.chart, q.array.copy()
    t_now = 0.0
    while t_now < settings.t_max:
        t_end = min(t_now + chunk, settings.t_max)
        t_r, u_end, _, switched, _, interp = _segment(
            sys, chart, u, (t_now, t_end), settings, dense=True
        )
        n_samples = max(2, int(np.ceil((t_r - t_now) * samples_per_chunk)))
        for tt in np.linspace(t_now, t_r, n_samples + 1)[1:]:
            qq = sys.normalize(Point.of(chart, interp(tt)))
            record(qq, tt)
            for cp in cps:
                if _accepts(sys, cp, qq, settings.r_conv):
                    return cp.id, approach
        t_now = t_r
        u = u_end
        if switched:
            chart, u, _ = sys.switch_chart(chart, u)
    return None, approach
