"""Connections on a trivialized principal bundle ``P = U x G`` and horizontal lifts.

A point of P is a pair ``(x, g)`` with ``x`` in the base chart U and ``g``
an n x n matrix in the structure group; G acts on the right, ``(x, g).h =
(x, gh)``.  A connection is given by its pullback ``A`` along the identity
section, and the connection form on P is

    theta_(x, g)(v, gdot) = Ad_{g^-1} A_x(v) + g^{-1} gdot.

Horizontality ``theta = 0`` along ``(gamma(t), g(t))`` reads
``g^{-1} g' = -Ad_{g^-1} A(gamma')``, i.e. ``g' g^{-1} = -A(gamma')``, which
is the right logarithmic derivative equation solved by
:func:`holab.liealg.product_integral`.  The lift is therefore
right-equivariant: starting at ``g0 h`` gives the lift from ``g0`` times h.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import liealg
from .liealg import GAUSS_NODES, adjoint, magnus_generators, propagate
from .paths import SmoothPath, as_path

MIN_STEPS = 8


class DomainError(ValueError):
    pass


class IntegratorError(ArithmeticError):
    pass


@dataclass(frozen=True)
class Exclusion:
    """Removes the solid cylinder ``|x[coords]| < radius`` from a chart box."""

    coords: tuple
    radius: float


@dataclass(frozen=True)
class BaseChart:
    dim: int
    lower: np.ndarray
    upper: np.ndarray
    name: str = "chart"
    embedding: Optional[Callable] = None
    exclusions: tuple = ()

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(self.dim)
        hi = np.asarray(self.upper, dtype=float).reshape(self.dim)
        if np.any(hi <= lo):
            raise DomainError(f"chart {self.name!r}: empty domain")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, bounds, name="chart", **kw):
        b = np.asarray(bounds, dtype=float)
        return cls(len(b), b[:, 0], b[:, 1], name, **kw)

    @property
    def scale(self):
        return float(np.max(self.upper - self.lower))

    def margin(self, x):
        """Signed distance-like margin to the boundary (positive inside)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        m = np.minimum(np.min(x - self.lower, axis=1), np.min(self.upper - x, axis=1))
        for ex in self.exclusions:
            r = np.linalg.norm(x[:, list(ex.coords)], axis=1)
            m = np.minimum(m, r - ex.radius)
        return m

    def contains(self, x):
        return self.margin(x) > 0

    def check(self, x, what="point"):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        bad = ~self.contains(x)
        if np.any(bad):
            raise DomainError(f"{what} leaves chart {self.name!r} at {x[np.argmax(bad)]}")


@dataclass
class ConnectionData:
    """Local connection form ``A = sum_i A_i(x) dx_i`` on a chart.

    ``components(x)`` maps ``(..., d)`` points to ``(..., d, n, n)``: the
    algebra element ``A_i(x)`` for each coordinate direction.  The optional
    ``jacobian(x)`` returns ``(..., d, d, n, n)`` with ``[k, i] = d_k A_i``
    and enables the exact exterior derivative.
    """

    components: Callable[[np.ndarray], np.ndarray]
    chart: BaseChart
    matrix_size: int
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    algebra_tag: str = "gl"
    label: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def base_dim(self):
        return self.chart.dim

    @property
    def group_tag(self):
        return liealg.group_tag_for(self.algebra_tag)

    def local_form(self, x, v):
        """``A_x(v)``; broadcasts over leading axes of x and v."""
        comps = self.components(np.asarray(x, dtype=float))
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return np.tensordot(v, comps, axes=([0], [-3]))
        return np.einsum("...i,...ijk->...jk", v, comps)

    @property
    def has_exact_dA(self):
        return self.jacobian is not None

    def exact_dA(self, x, v, w):
        """``dA_x(v, w) = D_v A(w) - D_w A(v)`` from the analytic Jacobian."""
        if self.jacobian is None:
            raise AttributeError("connection carries no analytic Jacobian")
        jac = self.jacobian(np.asarray(x, dtype=float))
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        anti = jac - np.swapaxes(jac, -4, -3)
        if v.ndim == 1 and w.ndim == 1:
            vw = np.outer(v, w)
            return np.tensordot(vw, anti, axes=([0, 1], [-4, -3]))
        return np.einsum("...k,...i,...kiab->...ab", v, w, anti, optimize=True)

    def linearity_residual(self, rng=None, count=16):
        rng = np.random.default_rng(0) if rng is None else rng
        x = sample_points(self.chart, count, rng)
        v, w = rng.normal(size=(2, count, self.base_dim))
        a, b = rng.normal(size=(2, count, 1, 1))
        lhs = self.local_form(x, a[..., 0] * v + b[..., 0] * w)
        rhs = a * self.local_form(x, v) + b * self.local_form(x, w)
        return float(np.max(np.abs(lhs - rhs)))

    @classmethod
    def zero(cls, chart, matrix_size, algebra_tag="gl", label="zero"):
        d = chart.dim

        def comps(x):
            return np.zeros(np.shape(x)[:-1] + (d, matrix_size, matrix_size))

        def jac(x):
            return np.zeros(np.shape(x)[:-1] + (d, d, matrix_size, matrix_size))

        return cls(comps, chart, matrix_size, jac, algebra_tag, label)


def sample_points(chart, count, rng, shrink=0.9):
    """Uniform points in the (shrunken) chart box that avoid the exclusions."""
    centre = 0.5 * (chart.lower + chart.upper)
    half = 0.5 * shrink * (chart.upper - chart.lower)
    out = []
    while len(out) < count:
        x = centre + half * rng.uniform(-1, 1, size=(count, chart.dim))
        out.extend(x[chart.contains(x)])
    return np.array(out[:count])


def vertical_tangent(g, xi):
    """Fiber velocity ``d/dt (g exp(t xi))`` at t = 0, i.e. ``g xi``."""
    return np.asarray(g) @ np.asarray(xi)


def theta_eval(conn, x, g, v, fiber_velocity=None):
    """Connection form at ``(x, g)`` on the tangent ``(v, fiber_velocity)``."""
    conn.chart.check(x)
    g = np.asarray(g, dtype=float)
    out = adjoint(np.linalg.inv(g), conn.local_form(x, v))
    if fiber_velocity is not None:
        out = out + np.linalg.solve(g, np.asarray(fiber_velocity, dtype=float))
    return out


def right_invariance_residual(conn, probes):
    """Max residual of ``theta_(x, gh)(v, gdot h) = Ad_{h^-1} theta_(x, g)(v, gdot)``.

    ``probes`` is an iterable of ``(x, g, h, v, gdot)`` tuples.
    """
    worst = 0.0
    for x, g, h, v, gdot in probes:
        g, h, gdot = (np.asarray(a, dtype=float) for a in (g, h, gdot))
        lhs = theta_eval(conn, x, g @ h, v, gdot @ h)
        rhs = adjoint(np.linalg.inv(h), theta_eval(conn, x, g, v, gdot))
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


@dataclass
class LiftedPath:
    """Horizontal lift ``t -> (base(t), fiber(t))`` sampled at uniform nodes."""

    base: SmoothPath
    fiber: np.ndarray
    start_fiber: np.ndarray
    conn: ConnectionData
    steps: int

    @property
    def times(self):
        return np.linspace(0.0, 1.0, self.steps + 1)

    @property
    def end(self):
        return self.fiber[-1]

    def at(self, t):
        """Fiber at arbitrary times via a partial Magnus step from the previous node."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        h = 1.0 / self.steps
        k = np.clip(np.floor(t / h).astype(int), 0, self.steps)
        dt = t - k * h
        out = self.fiber[k].copy()
        part = dt > 1e-15
        if np.any(part):
            tk, dtk = k[part] * h, dt[part]
            ts = np.concatenate([tk + GAUSS_NODES[0] * dtk, tk + GAUSS_NODES[1] * dtk])
            vals = _velocity_field(self.conn, self.base, ts, self.steps)
            m = int(part.sum())
            om = magnus_generators(vals[:m], vals[m:], dtk[:, None, None])
            out[part] = liealg.exp_matrix(om) @ out[part]
        return out

    def group_residual(self, tag=None):
        tag = tag or self.conn.group_tag
        return liealg.relation_residual(self.fiber, tag)


def _velocity_field(conn, path, t, steps):
    x = path(t)
    v = path.velocity(t, steps)
    return -conn.local_form(x, v)


def horizontal_lift(conn, path, start=None, steps=1000):
    """Solve ``g' g^{-1} = -A(gamma')`` from ``g(0) = start`` with 4th-order Magnus steps."""
    path = as_path(path)
    if steps < MIN_STEPS:
        raise ValueError(f"horizontal_lift needs steps >= {MIN_STEPS}")
    n = conn.matrix_size
    g0 = np.eye(n) if start is None else np.asarray(start, dtype=float)
    h = 1.0 / steps
    t0 = np.arange(steps) * h
    ts = np.concatenate([t0 + GAUSS_NODES[0] * h, t0 + GAUSS_NODES[1] * h])
    pts = path(np.concatenate([ts, np.linspace(0.0, 1.0, steps + 1)]))
    conn.chart.check(pts, what=f"path {path.label!r}")
    vals = -conn.local_form(pts[: 2 * steps], path.velocity(ts, steps))
    fiber = propagate(magnus_generators(vals[:steps], vals[steps:], h), g0)
    if not np.all(np.isfinite(fiber)):
        raise IntegratorError("horizontal lift produced non-finite values")
    return LiftedPath(path, fiber, g0, conn, steps)


def parallel_transport(conn, path, t=1.0, start=None, steps=1000):
    """Fiber value of the horizontal lift at time(s) ``t``."""
    lift = horizontal_lift(conn, path, start, steps)
    out = lift.at(t)
    return out[0] if np.ndim(t) == 0 else out


def horizontality_residual(lift, h=1e-4):
    """Max ``|theta(lift')|`` at interior nodes, with g' from central differences."""
    t = lift.times[1:-1:max(1, lift.steps // 64)]
    g_plus, g_minus = lift.at(t + h), lift.at(t - h)
    gdot = (g_plus - g_minus) / (2 * h)
    g = lift.at(t)
    x = lift.base(t)
    v = lift.base.velocity(t)
    th = adjoint(np.linalg.inv(g), lift.conn.local_form(x, v)) + np.linalg.solve(g, gdot)
    return float(np.max(np.abs(th)))
