"""Built-in closed manifolds, metrics and Morse-function families.

Supported models:

* flat n-tori (single periodic chart with wrap-around arithmetic), covering the
  circle, the square torus and flat products such as the 3-torus;
* the unit sphere in R^3 with the induced round metric, carried by two
  stereographic charts (projection from the north and south poles) plus the
  ambient embedding for distances.

Function families are analytic, so every evaluation (value, differential,
coordinate second derivative, flow-field Jacobian) is exact up to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, MorseflowError

__all__ = [
    "Point",
    "ManifoldModel",
    "ScalarField",
    "MorseSystem",
    "TorusSystem",
    "SphereSystem",
    "builtin_system",
    "gradient",
    "hessian",
    "distance",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Point:
    """A chart id together with coordinates inside that chart's box."""

    chart: int
    coords: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(float(c) for c in self.coords))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float)

    @staticmethod
    def of(chart: int, coords) -> "Point":
        return Point(chart, tuple(np.asarray(coords, dtype=float)))


@dataclass(frozen=True)
class ManifoldModel:
    kind: str
    dim: int
    ncharts: int
    euler_characteristic: int


@dataclass(frozen=True)
class ScalarField:
    family: str
    params: dict = field(default_factory=dict)


class MorseSystem:
    """A manifold model, scalar field and metric bundled with their chart routines.

    Immutable after construction; every evaluation is pure.
    """

    manifold: ManifoldModel
    fieldinfo: ScalarField
    dim: int

    # -- chart-wise analytic routines -------------------------------------
    def value(self, chart: int, u: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, chart: int, u: np.ndarray) -> np.ndarray:
        """Coordinate differential dF as a length-dim array."""
        raise NotImplementedError

    def hess(self, chart: int, u: np.ndarray) -> np.ndarray:
        """Coordinate second-derivative matrix of F in the chart."""
        raise NotImplementedError

    def metric(self, chart: int, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def metric_inv(self, chart: int, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def flow_field(self, chart: int, u: np.ndarray) -> np.ndarray:
        """The negative metric gradient -g^{-1} dF evaluated in chart coordinates."""
        return -self.metric_inv(chart, u) @ self.grad(chart, u)

    def flow_field_jacobian(self, chart: int, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # -- atlas plumbing ----------------------------------------------------
    def normalize(self, point: Point) -> Point:
        """Canonical representative (wrap tori, prefer the chart with small radius)."""
        return point

    def needs_switch(self, chart: int, u: np.ndarray) -> bool:
        return False

    def switch_chart(self, chart: int, u: np.ndarray):
        """Return (new_chart, new_coords, transition_jacobian)."""
        raise MorseflowError("system has a single chart")

    def to_chart(self, point: Point, chart: int) -> np.ndarray:
        if point.chart == chart:
            return point.array
        new_chart, coords, _ = self.switch_chart(point.chart, point.array)
        if new_chart != chart:
            raise MorseflowError("point not representable in requested chart")
        return coords

    def displacement(self, base: Point, other: Point) -> np.ndarray:
        """Coordinates of `other` minus `base` in the chart of `base`."""
        return self.to_chart(other, base.chart) - base.array

    def distance(self, p: Point, q: Point) -> float:
        raise NotImplementedError

    def random_point(self, rng: np.random.Generator) -> Point:
        raise NotImplementedError

    def grad_norm(self, point: Point) -> float:
        """Riemannian norm of the gradient at a point."""
        g = self.grad(point.chart, point.array)
        return float(np.sqrt(g @ self.metric_inv(point.chart, point.array) @ g))

    def describe(self) -> dict:
        return {
            "manifold": self.manifold.kind,
            "dim": self.manifold.dim,
            "family": self.fieldinfo.family,
            "params": {k: v for k, v in sorted(self.fieldinfo.params.items())},
        }


class TorusSystem(MorseSystem):
    """Flat torus R^n / Z^n with F = sum_i w_i cos 2 pi (theta_i - a_i)."""

    def __init__(self, offsets, weights=None, kind=None):
        offsets = np.asarray(offsets, dtype=float)
        n = len(offsets)
        if weights is None:
            weights = np.ones(n)
        weights = np.asarray(weights, dtype=float)
        if len(weights) != n:
            raise ConfigError("weights length must match offsets length")
        if np.any(np.abs(weights) < 1e-6):
            raise ConfigError("torus weights must be bounded away from zero")
        self.offsets = offsets
        self.weights = weights
        self.dim = n
        self.manifold = ManifoldModel(kind or f"torus{n}", n, 1, 0)
        self.fieldinfo = ScalarField(
            "torus_cosines",
            {"offsets": tuple(offsets), "weights": tuple(weights)},
        )

    def _phase(self, u):
        return TWO_PI * (np.asarray(u, dtype=float) - self.offsets)

    def value(self, chart, u):
        return float(np.sum(self.weights * np.cos(self._phase(u))))

    def grad(self, chart, u):
        return -TWO_PI * self.weights * np.sin(self._phase(u))

    def hess(self, chart, u):
        return np.diag(-TWO_PI**2 * self.weights * np.cos(self._phase(u)))

    def metric(self, chart, u):
        return np.eye(self.dim)

    def metric_inv(self, chart, u):
        return np.eye(self.dim)

    def flow_field(self, chart, u):
        return TWO_PI * self.weights * np.sin(self._phase(u))

    def flow_field_jacobian(self, chart, u):
        return np.diag(TWO_PI**2 * self.weights * np.cos(self._phase(u)))

    def normalize(self, point):
        u = np.mod(point.array, 1.0)
        u[u > 1.0 - 1e-9] = 0.0
        return Point.of(0, u)

    def to_chart(self, point, chart):
        return point.array

    def displacement(self, base, other):
        d = np.mod(other.array - base.array + 0.5, 1.0) - 0.5
        return d

    def distance(self, p, q):
        return float(np.linalg.norm(self.displacement(p, q)))

    def random_point(self, rng):
        return Point.of(0, rng.uniform(0.0, 1.0, size=self.dim))


# Stereographic charts: chart 0 projects from the north pole (covers z < 1 and
# hosts the south pole at the origin), chart 1 from the south pole.  Both carry
# the conformal round metric 4/(1+|w|^2)^2 * I.  Charts are valid for |w| <= 2
# with the preferred region |w| <= 1.5; the flow integrator switches charts when
# leaving the preferred region.

_CHART_SWITCH_RADIUS = 1.5
_CHART_MAX_RADIUS = 2.0


def _embed(chart, u):
    u = np.asarray(u, dtype=float)
    r2 = float(u @ u)
    s = 1.0 + r2
    zeta = 1.0 if chart == 0 else -1.0
    return np.array([2.0 * u[0] / s, 2.0 * u[1] / s, zeta * (r2 - 1.0) / s])


def _embed_jac(chart, u):
    u = np.asarray(u, dtype=float)
    a, b = u
    r2 = a * a + b * b
    s = 1.0 + r2
    zeta = 1.0 if chart == 0 else -1.0
    J = np.array(
        [
            [2.0 * (s - 2.0 * a * a) / s**2, -4.0 * a * b / s**2],
            [-4.0 * a * b / s**2, 2.0 * (s - 2.0 * b * b) / s**2],
            [zeta * 4.0 * a / s**2, zeta * 4.0 * b / s**2],
        ]
    )
    return J


def _embed_hess(chart, u):
    """Second derivatives of the three embedding components: list of 2x2 matrices."""
    a, b = np.asarray(u, dtype=float)
    r2 = a * a + b * b
    s = 1.0 + r2
    zeta = 1.0 if chart == 0 else -1.0
    s3 = s**3
    # Closed forms from differentiating the Jacobian entries of (2a/s, 2b/s, zeta(r^2-1)/s).
    x_aa = (-12.0 * a * s + 16.0 * a**3) / s3
    x_ab = (-4.0 * b * s + 16.0 * a * a * b) / s3
    x_bb = (-4.0 * a * s + 16.0 * a * b * b) / s3
    y_aa = (-4.0 * b * s + 16.0 * a * a * b) / s3
    y_ab = (-4.0 * a * s + 16.0 * a * b * b) / s3
    y_bb = (-12.0 * b * s + 16.0 * b**3) / s3
    z_aa = zeta * (4.0 * s - 16.0 * a * a) / s3
    z_ab = zeta * (-16.0 * a * b) / s3
    z_bb = zeta * (4.0 * s - 16.0 * b * b) / s3
    return [
        np.array([[x_aa, x_ab], [x_ab, x_bb]]),
        np.array([[y_aa, y_ab], [y_ab, y_bb]]),
        np.array([[z_aa, z_ab], [z_ab, z_bb]]),
    ]


class SphereSystem(MorseSystem):
    """Unit sphere in R^3 with the round metric and a height-type function.

    `height` is F = z; `peanut` is F = z + lam * (x cos gamma + y sin gamma)^2.
    """

    def __init__(self, family: str, lam: float = 1.0, gamma: float = 0.0):
        if family not in ("height", "peanut"):
            raise ConfigError(f"unknown sphere family {family!r}")
        if family == "peanut":
            if abs(lam - 0.5) < 0.05:
                raise ConfigError("peanut lam inside the degeneracy window around 0.5")
            if abs(lam) < 0.05:
                raise ConfigError("peanut lam inside the degeneracy window around 0")
        self.family = family
        self.lam = float(lam)
        self.gamma = float(gamma)
        self.dim = 2
        self.manifold = ManifoldModel("sphere", 2, 2, 2)
        params = {} if family == "height" else {"lam": self.lam, "gamma": self.gamma}
        self.fieldinfo = ScalarField(f"sphere_{family}", params)
        self._dir = np.array([np.cos(self.gamma), np.sin(self.gamma), 0.0])

    # ambient F and derivatives
    def _amb_value(self, x):
        if self.family == "height":
            return float(x[2])
        return float(x[2] + self.lam * (self._dir @ x) ** 2)

    def _amb_grad(self, x):
        g = np.array([0.0, 0.0, 1.0])
        if self.family == "peanut":
            g = g + 2.0 * self.lam * (self._dir @ x) * self._dir
        return g

    def _amb_hess(self, x):
        if self.family == "height":
            return np.zeros((3, 3))
        return 2.0 * self.lam * np.outer(self._dir, self._dir)

    def value(self, chart, u):
        return self._amb_value(_embed(chart, u))

    def grad(self, chart, u):
        return _embed_jac(chart, u).T @ self._amb_grad(_embed(chart, u))

    def hess(self, chart, u):
        x = _embed(chart, u)
        J = _embed_jac(chart, u)
        H = J.T @ self._amb_hess(x) @ J
        g = self._amb_grad(x)
        for gi, Ei in zip(g, _embed_hess(chart, u)):
            H = H + gi * Ei
        return H

    def _conformal(self, u):
        r2 = float(np.asarray(u) @ np.asarray(u))
        return 4.0 / (1.0 + r2) ** 2

    def metric(self, chart, u):
        return self._conformal(u) * np.eye(2)

    def metric_inv(self, chart, u):
        return (1.0 / self._conformal(u)) * np.eye(2)

    def flow_field(self, chart, u):
        return -(1.0 / self._conformal(u)) * self.grad(chart, u)

    def flow_field_jacobian(self, chart, u):
        u = np.asarray(u, dtype=float)
        s = 1.0 + float(u @ u)
        lam_inv = s * s / 4.0
        dlam_inv = s * u  # gradient of (1+r^2)^2/4
        g = self.grad(chart, u)
        H = self.hess(chart, u)
        return -lam_inv * H - np.outer(g, dlam_inv)

    def needs_switch(self, chart, u):
        return float(np.asarray(u) @ np.asarray(u)) > _CHART_SWITCH_RADIUS**2

    def switch_chart(self, chart, u):
        u = np.asarray(u, dtype=float)
        r2 = float(u @ u)
        if r2 < 1e-12:
            raise MorseflowError("cannot switch chart at the chart origin")
        v = u / r2
        T = (np.eye(2) * r2 - 2.0 * np.outer(u, u)) / r2**2
        return 1 - chart, v, T

    def normalize(self, point):
        u = point.array
        if float(u @ u) > 1.0:
            chart, v, _ = self.switch_chart(point.chart, u)
            return Point.of(chart, v)
        return point

    def ambient(self, point: Point) -> np.ndarray:
        # scans compare millions of samples against a handful of fixed targets;
        # keep the first few embeddings (the targets) instead of re-embedding
        cache = getattr(self, "_ambient_cache", None)
        if cache is None:
            cache = {}
            self._ambient_cache = cache
        hit = cache.get(id(point))
        if hit is not None and hit[0] is point:
            return hit[1]
        x = _embed(point.chart, point.array)
        if len(cache) < 64:
            cache[id(point)] = (point, x)
        return x

    def from_ambient(self, x) -> Point:
        x = np.asarray(x, dtype=float)
        x = x / np.linalg.norm(x)
        if x[2] <= 0.0:
            return Point.of(0, np.array([x[0], x[1]]) / (1.0 - x[2]))
        return Point.of(1, np.array([x[0], x[1]]) / (1.0 + x[2]))

    def distance(self, p, q):
        return float(np.linalg.norm(self.ambient(p) - self.ambient(q)))

    def random_point(self, rng):
        x = rng.normal(size=3)
        return self.from_ambient(x)


_PRODUCT_FLAT = ("circle", "torus", "torus3")


def builtin_system(family: str, **params) -> MorseSystem:
    """Construct a fully wired built-in Morse system.

    Families: circle(a), torus(a, b, w1, w2), torus3(a, b, c),
    sphere_height(), peanut(lam, gamma), product(factors=[...]).
    """
    family = family.lower()
    if family == "circle":
        a = float(params.pop("a", 0.0))
        w = float(params.pop("w", 1.0))
        _reject_extra(family, params)
        return TorusSystem([a], [w], kind="circle")
    if family == "torus":
        a = float(params.pop("a", 0.0))
        b = float(params.pop("b", 0.0))
        w1 = float(params.pop("w1", 1.0))
        w2 = float(params.pop("w2", 1.0))
        _reject_extra(family, params)
        return TorusSystem([a, b], [w1, w2], kind="torus")
    if family == "torus3":
        a = float(params.pop("a", 0.0))
        b = float(params.pop("b", 0.0))
        c = float(params.pop("c", 0.0))
        w = [float(params.pop(k, 1.0)) for k in ("w1", "w2", "w3")]
        _reject_extra(family, params)
        return TorusSystem([a, b, c], w, kind="torus3")
    if family in ("sphere_height", "height"):
        _reject_extra(family, params)
        return SphereSystem("height")
    if family == "peanut":
        lam = float(params.pop("lam", 1.0))
        gamma = float(params.pop("gamma", 0.0))
        _reject_extra(family, params)
        return SphereSystem("peanut", lam=lam, gamma=gamma)
    if family == "product":
        factors = params.pop("factors", None)
        _reject_extra(family, params)
        if not factors:
            raise ConfigError("product family needs a non-empty factors list")
        offsets, weights = [], []
        for fac in factors:
            fac = dict(fac)
            name = fac.pop("family")
            if name not in _PRODUCT_FLAT:
                raise ConfigError(
                    f"product supports flat factors only ({_PRODUCT_FLAT}), got {name!r}"
                )
            sub = builtin_system(name, **fac)
            offsets.extend(sub.offsets)
            weights.extend(sub.weights)
        return TorusSystem(offsets, weights, kind=f"torus{len(offsets)}")
    raise ConfigError(f"unknown system family {family!r}")


def _reject_extra(family, params):
    if params:
        raise ConfigError(f"unknown parameters for family {family!r}: {sorted(params)}")


def gradient(sys: MorseSystem, p: Point) -> np.ndarray:
    """The metric gradient of F at p in chart coordinates; the flow field is its negation."""
    return sys.metric_inv(p.chart, p.array) @ sys.grad(p.chart, p.array)


def hessian(sys: MorseSystem, p: Point, crit_tol: float = 1e-9) -> np.ndarray:
    """Coordinate second-derivative matrix at a (numerically) critical point."""
    if sys.grad_norm(p) > crit_tol:
        raise MorseflowError(
            f"hessian requested at a non-critical point (|grad| = {sys.grad_norm(p):.3e})"
        )
    return sys.hess(p.chart, p.array)


def distance(sys: MorseSystem, p: Point, q: Point) -> float:
    return sys.distance(p, q)
