"""Curvature, the small-loop oracle, the ray-transport identity, and reduction checks.

Sign convention.  With the lift ``g' g^-1 = -A(gamma')`` the holonomy of a
small counter-clockwise ``(v, w)`` parallelogram of side eps is
``exp(-eps^2 F(v, w) + O(eps^3))`` with

    F(v, w) = dA(v, w) + [A(v), A(w)].

That is ``convention="oracle"`` (the default).  ``convention="paper"`` uses
``dA(v, w) - [A(v), A(w)]``; it agrees with the oracle only where the
commutator vanishes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import DomainError, horizontal_lift
from .holonomy import holonomy_element, parallel_map
from .liealg import (
    DEFAULT_RANK_TOL,
    SubalgebraSpan,
    ad_stability_check,
    adjoint,
    bracket,
    bracket_closure,
    exp_probes,
    log_matrix,
)
from .paths import SmoothPath, polygon_path

CONVENTIONS = ("oracle", "paper")


class PreconditionError(ValueError):
    pass


def _fd_dA(conn, x, v, w, h):
    """``D_v A(w) - D_w A(v)`` with a 4th-order central stencil."""
    def D(direction, arg):
        f = lambda s: conn.local_form(x + s * direction, arg)
        return (-f(2 * h) + 8 * f(h) - 8 * f(-h) + f(-2 * h)) / (12 * h)

    return D(v, w) - D(w, v)


def default_fd_step(conn):
    return 1e-4 * conn.chart.scale


def curvature_at(conn, x, v, w, fd_step=None, convention="oracle", exact=True):
    """Local curvature ``F_x(v, w)``; x, v, w broadcast over leading axes."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown sign convention {convention!r}")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    h = default_fd_step(conn) if fd_step is None else fd_step
    if np.any(conn.chart.margin(x.reshape(-1, conn.base_dim)) <= 2 * h * max(
            np.max(np.abs(v), initial=0.0), np.max(np.abs(w), initial=0.0), 1.0)):
        raise DomainError("curvature_at: point too close to the chart boundary")
    if exact and conn.has_exact_dA:
        dA = conn.exact_dA(x, v, w)
    else:
        dA = _fd_dA(conn, x, v, w, h)
    comm = bracket(conn.local_form(x, v), conn.local_form(x, w))
    return dA + comm if convention == "oracle" else dA - comm


def parallelogram_loop(x, v, w, eps):
    """Counter-clockwise smooth ``(v, w)`` parallelogram of side eps at x."""
    x = np.asarray(x, dtype=float)
    a, b = eps * np.asarray(v, dtype=float), eps * np.asarray(w, dtype=float)
    return polygon_path([x, x + a, x + a + b, x + b, x], "parallelogram")


def small_loop_value(conn, x, v, w, eps, steps=400):
    """``-log(holonomy)/eps^2`` of the eps-parallelogram; tends to F(v, w) as eps -> 0."""
    loop = parallelogram_loop(x, v, w, eps)
    lift = horizontal_lift(conn, loop, None, steps)
    lg, ok = log_matrix(lift.end)
    if not ok:
        raise DomainError("small loop holonomy outside the principal log domain")
    return -lg / eps**2


def richardson(values, ratio=2.0, powers=(1, 2)):
    """Eliminate error terms ``eps^p`` for the given powers from a refinement sequence."""
    vals = [np.asarray(v, dtype=float) for v in values]
    for p in powers:
        if len(vals) < 2:
            break
        f = ratio**p
        vals = [(f * vals[i + 1] - vals[i]) / (f - 1) for i in range(len(vals) - 1)]
    return vals[-1]


def small_loop_oracle(conn, x, v, w, eps=0.1, steps=400, levels=3):
    """Richardson limit of :func:`small_loop_value` over eps, eps/2, eps/4."""
    vals = [small_loop_value(conn, x, v, w, eps / 2**k, steps) for k in range(levels)]
    return richardson(vals)


def sign_oracle_error(conn, x, v, w, convention="oracle", eps=0.1, steps=400):
    """Relative Frobenius mismatch between curvature_at and the small-loop limit."""
    lim = small_loop_oracle(conn, x, v, w, eps, steps)
    F = curvature_at(conn, x, v, w, convention=convention)
    scale = max(np.linalg.norm(lim), np.linalg.norm(F))
    err = np.linalg.norm(lim - F)
    return float(err / scale) if scale > 1e-8 else float(err)


# ---------------------------------------------------------------------------
# ray transport identity


def affine_plot(center):
    """The plot ``u -> center + u`` with its (constant) Jacobian."""
    center = np.asarray(center, dtype=float)
    d = len(center)
    return (lambda u: center + u,
            lambda u: np.broadcast_to(np.eye(d), np.shape(u) + (d,)))


def ray(plot, u):
    """``t -> plot(t u)`` as a smooth path; ``plot = (f, jacobian)``."""
    f, jac = plot
    u = np.asarray(u, dtype=float)

    def func(t):
        return f(t[:, None] * u)

    def deriv(t):
        return np.einsum("nij,j->ni", jac(t[:, None] * u), u)

    return SmoothPath(func, len(u), deriv, label="ray")


def plaques_sides(conn, plot, c, dc, s, steps, convention="oracle"):
    """Both sides of the ray-transport identity at parameter s.

    ``psi(u) = Pt(t -> plot(t u), 1, (plot(0), e)) = (plot(u), G(u))``.
    Left: ``theta(d/ds psi(c(s))) = Ad_{G^-1} A(Dplot c') + G^-1 dG/ds``
    with the s-derivative of G from a second-order central difference of
    step ``1/steps``.  Right: ``int_0^1 Omega(h_t, h_s) dt`` along
    ``h(t, s) = plot(t c(s))`` with ``Omega = Ad_{g^-1} F`` at the lifted
    point, by the trapezoid rule on the lift nodes.
    """
    f, jac = plot
    ds = 1.0 / steps
    g_p = horizontal_lift(conn, ray(plot, c(s + ds)), None, steps).end
    g_m = horizontal_lift(conn, ray(plot, c(s - ds)), None, steps).end
    cs, dcs = np.asarray(c(s), dtype=float), np.asarray(dc(s), dtype=float)
    lift = horizontal_lift(conn, ray(plot, cs), None, steps)
    G = lift.end
    dG = (g_p - g_m) / (2 * ds)
    x1 = f(cs[None])[0]
    v1 = jac(cs[None])[0] @ dcs
    lhs = adjoint(np.linalg.inv(G), conn.local_form(x1, v1)) + np.linalg.solve(G, dG)

    t = lift.times
    u = t[:, None] * cs
    J = jac(u)
    pts = f(u)
    h_t = J @ cs
    h_s = t[:, None] * (J @ dcs)
    F = curvature_at(conn, pts, h_t, h_s, convention=convention)
    omega = adjoint(np.linalg.inv(lift.fiber), F)
    dt = np.diff(t)[:, None, None]
    rhs = np.sum(0.5 * dt * (omega[1:] + omega[:-1]), axis=0)
    return lhs, rhs


def plaques_identity_residual(conn, plot, c, dc, steps=1000, s_values=None, convention="oracle"):
    """Max-abs difference of the two sides of the ray-transport identity over s.

    ``plot`` is ``(f, jacobian)`` for a star-shaped plot about 0, or a base
    point (shorthand for the affine plot centred there).  ``c``/``dc`` give
    the path in the plot domain and its derivative.
    """
    if not isinstance(plot, tuple):
        plot = affine_plot(plot)
    s_values = np.linspace(0.1, 0.9, 5) if s_values is None else s_values
    worst = 0.0
    for s in s_values:
        lhs, rhs = plaques_sides(conn, plot, c, dc, float(s), steps, convention=convention)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


# ---------------------------------------------------------------------------
# curvature samples and reduced algebra


@dataclass
class CurvatureSample:
    point: np.ndarray
    v: np.ndarray
    w: np.ndarray
    value: np.ndarray
    provenance: tuple = ()


def sample_curvature_along_horizontal(conn, family, X, Y, s_grid, t_grid, steps=400,
                                      start=None, convention="oracle"):
    """Bundle curvature ``Ad_{g^-1} F(X, Y)`` along horizontal lifts of a path family.

    ``family(t)`` returns the path ``c_t``; ``X`` and ``Y`` map ``(N, d)``
    points to ``(N, d)`` vectors.
    """
    def one(t):
        path = family(t)
        lift = horizontal_lift(conn, path, start, steps)
        s = np.asarray(s_grid, dtype=float)
        pts = path(s)
        vx, vy = X(pts), Y(pts)
        F = curvature_at(conn, pts, vx, vy, convention=convention)
        vals = adjoint(np.linalg.inv(lift.at(s)), F)
        return [CurvatureSample(pts[i], vx[i], vy[i], vals[i], (float(s[i]), float(t)))
                for i in range(len(s))]

    out = []
    for chunk in parallel_map(one, list(t_grid)):
        out.extend(chunk)
    return out


def coordinate_field(dim, i):
    def field(x):
        out = np.zeros(np.shape(x))
        out[..., i] = 1.0
        return out

    return field


def reduced_algebra(samples, rank_tolerance=DEFAULT_RANK_TOL):
    """Bracket closure of the curvature sample values."""
    if not samples:
        raise ValueError("reduced_algebra: no samples")
    return bracket_closure([s.value for s in samples], rank_tolerance)


@dataclass
class ReductionReport:
    span: SubalgebraSpan
    loop_residuals: list
    curvature_residuals: list
    ad_residual: float
    verdict: bool
    tol: float
    flagged: list = field(default_factory=list)
    embedding: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "rank": self.span.rank,
            "span_basis": self.span.basis.tolist(),
            "loop_residuals": self.loop_residuals,
            "curvature_residuals": self.curvature_residuals,
            "ad_residual": self.ad_residual,
            "flagged_loops": self.flagged,
            "verdict": self.verdict,
            "tol": self.tol,
            "embedding": self.embedding,
            **self.extra,
        }


def _loop_log_residuals(conn, span, loops, start, steps):
    recs = parallel_map(lambda lp: holonomy_element(conn, lp, start, steps), loops)
    residuals, flagged = [], []
    for i, rec in enumerate(recs):
        if rec.log_ok:
            residuals.append(float(span.distance(rec.log)))
        else:
            residuals.append(float("nan"))
            flagged.append(i)
    return recs, residuals, flagged


def ambrose_singer_verify(conn, loops, samples, tol=1e-6, steps=1000, start=None,
                          max_flagged_fraction=0.1, rank_tolerance=DEFAULT_RANK_TOL):
    """Holonomy logs must lie in the bracket closure of the curvature samples."""
    span = reduced_algebra(samples, rank_tolerance)
    recs, residuals, flagged = _loop_log_residuals(conn, span, loops, start, steps)
    ad = ad_stability_check(span, exp_probes(span)).max_residual
    good = [r for r in residuals if r == r]
    verdict = (all(r <= tol for r in good) and ad <= tol
               and len(flagged) <= max_flagged_fraction * max(len(loops), 1))
    curv = [float(span.distance(s.value)) for s in samples]
    return ReductionReport(span, residuals, curv, ad, verdict, tol, flagged,
                           extra={"holonomy_distance_to_identity":
                                  [r.distance_to_identity() for r in recs]})


@dataclass(frozen=True)
class BlockEmbedding:
    """Injection of a smaller matrix group as a diagonal block of the identity."""

    size: int
    indices: tuple

    def embed(self, m):
        out = np.eye(self.size)
        idx = np.array(self.indices)
        out[np.ix_(idx, idx)] = m
        return out

    def embed_algebra(self, X):
        out = np.zeros((self.size, self.size))
        idx = np.array(self.indices)
        out[np.ix_(idx, idx)] = X
        return out

    def group_distance(self, g):
        """Distance from g to the embedded special orthogonal block group."""
        idx = np.array(self.indices)
        block = np.asarray(g)[np.ix_(idx, idx)]
        u, _, vt = np.linalg.svd(block)
        q = u @ vt
        if np.linalg.det(q) < 0:
            u[:, -1] *= -1
            q = u @ vt
        return float(np.linalg.norm(np.asarray(g) - self.embed(q)))

    def to_dict(self):
        return {"kind": "block", "size": self.size, "indices": list(self.indices)}


def transported_form(conn, center, x, direction, steps=1000, h=1e-3):
    """``theta(D psi . direction)`` at x, with ``psi(y)`` the transport along the ray center -> y.

    In the gauge given by ``psi`` this is the connection itself:
    ``Ad_{G^-1} A_x(v) + G^-1 D_v G`` with ``G = psi(x)``; the derivative of
    G uses a 4th-order central difference of step h.
    """
    plot = affine_plot(center)
    center = np.asarray(center, dtype=float)

    def psi(y):
        return horizontal_lift(conn, ray(plot, y - center), None, steps).end

    x = np.asarray(x, dtype=float)
    v = np.asarray(direction, dtype=float)
    G = psi(x)
    dG = (-psi(x + 2 * h * v) + 8 * psi(x + h * v) - 8 * psi(x - h * v) + psi(x - 2 * h * v)) / (12 * h)
    return adjoint(np.linalg.inv(G), conn.local_form(x, v)) + np.linalg.solve(G, dG)


def reduction_check(conn, span, embedding, loops, tol=1e-6, steps=1000, start=None,
                    frame_points=5, frame_loops=10, max_flagged_fraction=0.1):
    """Check that holonomy and the connection reduce to the subgroup generated by ``span``.

    (a) every holonomy log lies in the span (and, with an embedding, every
    holonomy element lies in the embedded subgroup); (b) in the radial gauge
    ``psi`` about the basepoint, the connection ``theta o D psi`` takes values
    in the span at points along the first ``frame_loops`` loops.  Points whose
    ray from the basepoint leaves the chart are skipped and counted.  Loops
    whose holonomy log is ambiguous (rotation angle near pi) are flagged and
    tolerated up to ``max_flagged_fraction``.
    """
    ad = ad_stability_check(span, exp_probes(span)).max_residual
    if ad > tol:
        raise PreconditionError(f"span is not Ad-stable (residual {ad:.3e})")
    recs, residuals, flagged = _loop_log_residuals(conn, span, loops, start, steps)
    d = conn.base_dim
    curv, skipped = [], 0
    for lp in loops[:frame_loops]:
        center = np.asarray(lp.basepoint, dtype=float)
        worst = 0.0
        for x in lp.path(np.linspace(0.0, 1.0, frame_points)):
            try:
                vals = [transported_form(conn, center, x, e, steps) for e in np.eye(d)]
            except DomainError:
                skipped += 1
                continue
            worst = max([worst] + [float(span.distance(v)) for v in vals])
        curv.append(worst)
    group_dist = []
    if embedding is not None:
        group_dist = [embedding.group_distance(r.element) for r in recs]
    good = [r for r in residuals if r == r]
    verdict = (all(r <= tol for r in good) and all(c <= tol for c in curv)
               and all(gd <= tol for gd in group_dist)
               and len(flagged) <= max_flagged_fraction * max(len(loops), 1))
    return ReductionReport(span, residuals, curv, ad, verdict, tol, flagged,
                           embedding.to_dict() if embedding is not None else {},
                           extra={"group_distance": group_dist, "skipped_frame_points": skipped})
