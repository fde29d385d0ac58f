"""Plot-based smooth structures on subsets of R^d, tested on sample grids.

A :class:`Plot` is a parametrization of an open box of R^p into a model
space R^d.  A :class:`Diffeology` decides (semi-decides) whether a candidate
plot belongs to it.  Acceptance is sound relative to the finite-difference
probes; rejection only means that no witness was found, so membership is
incomplete on reject.

Acceptance routes, tried in order by :func:`is_plot`:

1. constant plots are always plots;
2. an explicit witness ``(generator, test_map)`` with
   ``candidate = generator o test_map`` and a probe-smooth ``test_map``;
3. a generator carrying a left inverse, which produces the test map
   ``inverse o candidate`` directly (this is how the standard structure of
   R^d accepts every probe-smooth map);
4. gluing from an explicit finite cover of accepted restrictions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

GRID = 257
PROBE_TOL = 1e-6
# e2/e1 for a second-order stencil is 4 on smooth data; a C^k function probed
# at order k still shows first-order convergence (ratio 2), hence 1.6
RATIO_FLOOR = 1.6
AGREE_TOL = 1e-8
DEFAULT_ORDER = 3
DEFAULT_BUDGET = 64


class DiffeologyError(ValueError):
    pass


class ShapeError(DiffeologyError):
    pass


class ProbeInputError(DiffeologyError):
    pass


class ConsistencyError(DiffeologyError):
    pass


class PreconditionError(DiffeologyError):
    pass


# ---------------------------------------------------------------------------
# smoothness probe


def _central_weights(m):
    """Second-order central weights for the m-th derivative on offsets -r..r."""
    r = (m + 1) // 2 if m % 2 else m // 2
    offs = np.arange(-r, r + 1, dtype=float)
    V = np.vander(offs, increasing=True).T
    rhs = np.zeros(len(offs))
    rhs[m] = math.factorial(m)
    return r, np.linalg.solve(V, rhs)


@dataclass
class ProbeResult:
    passed: bool
    order: int
    failing_order: Optional[int] = None
    e1: float = 0.0
    e2: float = 0.0
    location: Optional[int] = None

    def __bool__(self):
        return self.passed


def smoothness_probe(samples, order, tol=PROBE_TOL, spacing=None, detail=False):
    """Heuristic smoothness test of a uniformly sampled scalar function.

    For each derivative order m <= ``order`` the central difference is taken
    with steps h, 2h and 4h on the common interior points.  With
    ``e1 = max|D_h - D_2h|`` and ``e2 = max|D_2h - D_4h|`` order m passes if
    ``e1 <= tol * max(1, max|D_h|)`` (converged) or ``e2 / e1 >= 1.6``
    (consistent refinement).  A kink makes the differences grow under
    refinement and fails both.
    """
    f = np.asarray(samples, dtype=float).ravel()
    n = len(f)
    if n < 2 * order + 2:
        raise ProbeInputError(f"smoothness_probe needs >= {2 * order + 2} samples, got {n}")
    if not np.all(np.isfinite(f)):
        res = ProbeResult(False, order, 0, np.inf, np.inf)
        return res if detail else False
    h = 1.0 / (n - 1) if spacing is None else float(spacing)
    for m in range(1, order + 1):
        r, w = _central_weights(m)
        levels = [s for s in (1, 2, 4) if 2 * r * s < n]
        R = r * levels[-1]
        idx = np.arange(R, n - R)
        D = []
        for s in levels:
            est = sum(w[j] * f[idx + (j - r) * s] for j in range(2 * r + 1))
            D.append(est / (s * h) ** m)
        scale = max(1.0, float(np.max(np.abs(D[0]))))
        if len(D) < 3:
            # too short to refine twice: settle for agreement of what we have
            e1 = float(np.max(np.abs(D[0] - D[-1]))) if len(D) > 1 else 0.0
            if e1 > tol * scale and len(D) > 1:
                res = ProbeResult(False, order, m, e1, 0.0)
                return res if detail else False
            continue
        d1, d2 = np.abs(D[0] - D[1]), np.abs(D[1] - D[2])
        e1, e2 = float(np.max(d1)), float(np.max(d2))
        if e1 <= tol * scale:
            continue
        if e2 >= RATIO_FLOOR * e1:
            continue
        res = ProbeResult(False, order, m, e1, e2, int(idx[np.argmax(d1)]))
        return res if detail else False
    res = ProbeResult(True, order)
    return res if detail else True


# ---------------------------------------------------------------------------
# plots


@dataclass
class Plot:
    """A map from the open box ``lower < u < upper`` in R^p into R^d.

    ``evaluator`` maps ``(N, p)`` to ``(N, d)``.  ``witness`` optionally names
    how the plot was built: a pair ``(generator, test_map)``, a lift plot
    (for push-forwards) or a tuple of per-factor witnesses (for products).
    ``cover`` is an optional list of restrictions to sub-boxes for gluing.
    """

    lower: np.ndarray
    upper: np.ndarray
    evaluator: Callable[[np.ndarray], np.ndarray]
    codim: int
    label: str = "plot"
    witness: object = None
    cover: Optional[list] = None
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(self.upper <= self.lower):
            raise ShapeError(f"plot {self.label!r}: empty or malformed domain")

    @classmethod
    def make(cls, domain, evaluator, codim, label="plot", **kw):
        """``domain`` is a list of ``(lo, hi)`` intervals (empty for p = 0)."""
        dom = np.asarray(domain, dtype=float).reshape(-1, 2)
        if len(dom) == 0:
            return cls(np.array([-1.0]), np.array([1.0]),
                       lambda u: evaluator(np.zeros((len(u), 0))), codim, label, **kw)
        return cls(dom[:, 0], dom[:, 1], evaluator, codim, label, **kw)

    @property
    def dim(self):
        return len(self.lower)

    def __call__(self, u):
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        return np.asarray(self.evaluator(u), dtype=float).reshape(len(u), self.codim)

    def contains(self, u):
        u = np.asarray(u, dtype=float).reshape(-1, self.dim)
        return np.all((u > self.lower) & (u < self.upper), axis=1)

    def grid_line(self, axis, through, n=GRID):
        """``n`` midpoint samples along ``axis`` through the point ``through``."""
        s = (np.arange(n) + 0.5) / n
        pts = np.repeat(np.asarray(through, dtype=float)[None], n, axis=0)
        pts[:, axis] = self.lower[axis] + s * (self.upper[axis] - self.lower[axis])
        spacing = (self.upper[axis] - self.lower[axis]) / n
        return pts, spacing

    def probe_points(self, count, seed=0):
        rng = np.random.default_rng(seed)
        centre = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower)
        pts = centre + half * rng.uniform(-0.98, 0.98, size=(count, self.dim))
        return np.vstack([centre[None], pts])

    def line_anchors(self, count=3, seed=0):
        return self.probe_points(count - 1, seed)

    def compose(self, g, label=None):
        """``self o g`` for a plot ``g`` landing in this plot's domain."""
        return Plot(g.lower, g.upper, lambda u: self(g(u)), self.codim,
                    label or f"{self.label}o{g.label}", witness=(self, g))

    def restrict(self, lower, upper, label=None):
        return Plot(lower, upper, self.evaluator, self.codim, label or f"{self.label}|",
                    witness=self.witness)

    def with_witness(self, witness):
        return Plot(self.lower, self.upper, self.evaluator, self.codim, self.label, witness,
                    self.cover, self.inverse, self.jacobian)


def probe_plot(plot, order=DEFAULT_ORDER, tol=PROBE_TOL, anchors=3):
    """Run the smoothness probe on every component along axis lines; first failure or None."""
    for a in plot.line_anchors(anchors):
        for ax in range(plot.dim):
            pts, h = plot.grid_line(ax, a)
            vals = plot(pts)
            for c in range(plot.codim):
                res = smoothness_probe(vals[:, c], order, tol, spacing=h, detail=True)
                if not res.passed:
                    return {"axis": ax, "component": c, "anchor": a.tolist(),
                            "failing_order": res.failing_order, "e1": res.e1, "e2": res.e2,
                            "at": pts[res.location].tolist() if res.location is not None else None}
    return None


def constant_plot(point, p=0, label="const"):
    pt = np.asarray(point, dtype=float)
    return Plot.make([(-1.0, 1.0)] * p, lambda u: np.broadcast_to(pt, (len(u), len(pt))).copy(),
                     len(pt), label)


def _sample_values(plot, count=64):
    pts = plot.probe_points(count)
    lines = [plot.grid_line(ax, plot.line_anchors(1)[0])[0] for ax in range(plot.dim)]
    return np.vstack([pts] + lines)


def agree(p, q, pts=None, tol=AGREE_TOL):
    pts = _sample_values(p) if pts is None else pts
    a, b = p(pts), q(pts)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    return float(np.max(np.abs(a - b), initial=0.0)) <= tol * scale


# ---------------------------------------------------------------------------
# membership


@dataclass
class Membership:
    accepted: bool
    route: str
    witness: object = None
    failing_probe: Optional[dict] = None

    def __bool__(self):
        return self.accepted


class _Budget:
    def __init__(self, n):
        if n < 1:
            raise DiffeologyError("probe_budget must be >= 1")
        self.left = n

    def spend(self):
        self.left -= 1
        return self.left >= 0


class Diffeology:
    """Base class; subclasses implement :meth:`_accepts`."""

    space_dim: int
    closure_policy = {"constants": "always", "chain_rule": "witness or generator inverse",
                      "gluing": "explicit finite cover"}

    def generators(self):
        return []

    def _accepts(self, plot, budget, order):
        raise NotImplementedError

    def accepts(self, plot, probe_budget=DEFAULT_BUDGET, order=DEFAULT_ORDER):
        return is_plot(plot, self, probe_budget, order)


def _is_constant(plot):
    vals = plot(_sample_values(plot))
    spread = np.max(np.abs(vals - vals[0]), initial=0.0)
    return spread <= 1e-12 * max(1.0, float(np.max(np.abs(vals), initial=0.0)))


def is_plot(candidate, diff, probe_budget=DEFAULT_BUDGET, order=DEFAULT_ORDER):
    """Semi-decide whether ``candidate`` is a plot of ``diff``; see the module docstring."""
    if candidate.codim != diff.space_dim:
        raise ShapeError(f"candidate lands in R^{candidate.codim}, space is R^{diff.space_dim}")
    return _is_plot(candidate, diff, _Budget(probe_budget), order)


def _is_plot(candidate, diff, budget, order):
    if _is_constant(candidate):
        return Membership(True, "constant")
    res = diff._accepts(candidate, budget, order)
    if res.accepted or not candidate.cover:
        return res
    # gluing: every piece accepted, pieces agree with the candidate, pieces cover the samples
    pts = candidate.probe_points(128)
    covered = np.zeros(len(pts), dtype=bool)
    for piece in candidate.cover:
        if not agree(piece, candidate, _sample_values(piece)):
            return Membership(False, "gluing", failing_probe={"piece": piece.label,
                                                              "reason": "restriction mismatch"})
        sub = _is_plot(piece, diff, budget, order)
        if not sub.accepted:
            return Membership(False, "gluing", failing_probe={"piece": piece.label,
                                                              **(sub.failing_probe or {})})
        covered |= piece.contains(pts)
    if not np.all(covered):
        return Membership(False, "gluing", failing_probe={"reason": "cover leaves samples out"})
    return Membership(True, "gluing", [p.label for p in candidate.cover])


def _test_map_ok(test_map, gen, candidate, order):
    """The test map must stay in the generator domain, be smooth, and factor the candidate."""
    pts = _sample_values(candidate)
    img = test_map(pts)
    if not np.all(gen.contains(img)):
        return {"reason": f"test map leaves the domain of {gen.label}"}
    fail = probe_plot(test_map, order)
    if fail is not None:
        return {"reason": "test map not smooth", **fail}
    if not agree(gen.compose(test_map), candidate, pts):
        return {"reason": f"candidate != {gen.label} o test map"}
    return None


class Generated(Diffeology):
    """The diffeology generated by a list of plots (closed under constants, chain rule, gluing)."""

    def __init__(self, generators, space_dim, label="generated"):
        self._generators = list(generators)
        self.space_dim = int(space_dim)
        self.label = label
        for g in self._generators:
            if g.codim != self.space_dim:
                raise ShapeError(f"generator {g.label!r} does not land in R^{self.space_dim}")

    def generators(self):
        return list(self._generators)

    def with_generators(self, extra):
        return Generated(self._generators + list(extra), self.space_dim, self.label)

    def _accepts(self, cand, budget, order):
        last = None
        w = cand.witness
        if isinstance(w, tuple) and len(w) == 2 and isinstance(w[0], Plot) \
                and any(w[0] is g or w[0].label == g.label for g in self._generators):
            if budget.spend():
                fail = _test_map_ok(w[1], w[0], cand, order)
                if fail is None:
                    return Membership(True, "witness", (w[0].label, w[1].label))
                last = fail
        for gen in self._generators:
            if gen.inverse is None:
                continue
            if not budget.spend():
                return Membership(False, "budget", failing_probe={"reason": "probe budget exhausted"})
            inv = gen.inverse
            test = Plot(cand.lower, cand.upper, lambda u, inv=inv: inv(cand(u)), gen.dim,
                        f"inv({gen.label})o{cand.label}")
            fail = _test_map_ok(test, gen, cand, order)
            if fail is None:
                return Membership(True, "generator inverse", (gen.label, test.label))
            last = fail
        return Membership(False, "rejected", failing_probe=last or {"reason": "no witness found"})


def standard(d, bound=1e6):
    """Standard diffeology of R^d: generated by the identity chart (with itself as inverse)."""
    ident = Plot(np.full(d, -bound), np.full(d, bound), lambda u: u, d, f"id_R{d}",
                 inverse=lambda x: x)
    return Generated([ident], d, f"R^{d}")


class Pushforward(Diffeology):
    """Push-forward of ``source`` along ``f``: plots are locally ``f o q`` with q a source plot.

    A candidate is accepted when it carries a lift (its ``witness`` is a plot
    into the root source space, or into the immediate source) or when a
    ``section`` of f is supplied.  Nested push-forwards compose their maps,
    so a lift into the root space works at any depth.
    """

    def __init__(self, source, f, space_dim, section=None, label="pushforward"):
        self.source = source
        self.f = f
        self.space_dim = int(space_dim)
        self.section = section
        self.label = label

    def root(self):
        if isinstance(self.source, Pushforward):
            base, g = self.source.root()
            return base, (lambda x, g=g: self.f(g(x)))
        return self.source, self.f

    def generators(self):
        f = self.f
        return [Plot(g.lower, g.upper, lambda u, g=g: f(g(u)), self.space_dim, f"f o {g.label}")
                for g in self.source.generators()]

    def _accepts(self, cand, budget, order):
        base, F = self.root()
        lifts = []
        if isinstance(cand.witness, Plot):
            lifts.append(cand.witness)
        if self.section is not None:
            sec = self.section
            lifts.append(Plot(cand.lower, cand.upper, lambda u: sec(cand(u)),
                              self.source.space_dim, f"section o {cand.label}"))
        for q in lifts:
            if not budget.spend():
                break
            if q.codim == base.space_dim:
                space, mapping = base, F
            elif q.codim == self.source.space_dim:
                space, mapping = self.source, self.f
            else:
                continue
            pts = _sample_values(cand)
            img = Plot(q.lower, q.upper, lambda u, q=q, m=mapping: m(q(u)), self.space_dim)
            if not agree(img, cand, pts):
                continue
            sub = _is_plot(q, space, budget, order)
            if sub.accepted:
                return Membership(True, "lift", (q.label, sub.route))
        return Membership(False, "rejected", failing_probe={"reason": "no lift through f found"})


def pushforward(diff, f, space_dim, section=None):
    return Pushforward(diff, f, space_dim, section)


def _project(plot, lo, hi, sub_witness=None):
    return Plot(plot.lower, plot.upper, lambda u: plot(u)[:, lo:hi], hi - lo,
                f"pr[{lo}:{hi}]{plot.label}", witness=sub_witness)


class Product(Diffeology):
    """Product diffeology: a plot is accepted iff both projections are."""

    def __init__(self, first, second):
        self.first, self.second = first, second
        self.space_dim = first.space_dim + second.space_dim

    def generators(self):
        out = []
        for a in self.first.generators():
            for b in self.second.generators():
                pa, pb = a.dim, b.dim
                out.append(Plot(np.concatenate([a.lower, b.lower]), np.concatenate([a.upper, b.upper]),
                                lambda u, a=a, b=b, pa=pa: np.hstack([a(u[:, :pa]), b(u[:, pa:])]),
                                self.space_dim, f"{a.label}x{b.label}"))
        return out

    def _accepts(self, cand, budget, order):
        w = cand.witness if isinstance(cand.witness, tuple) and len(cand.witness) == 2 \
            and not isinstance(cand.witness[0], Plot) else (None, None)
        d1 = self.first.space_dim
        r1 = _is_plot(_project(cand, 0, d1, w[0]), self.first, budget, order)
        if not r1.accepted:
            return Membership(False, "product", failing_probe={"factor": 0, **(r1.failing_probe or {})})
        r2 = _is_plot(_project(cand, d1, self.space_dim, w[1]), self.second, budget, order)
        if not r2.accepted:
            return Membership(False, "product", failing_probe={"factor": 1, **(r2.failing_probe or {})})
        return Membership(True, "product", (r1.route, r2.route))


def product_diffeology(d1, d2):
    return Product(d1, d2)


class Trace(Diffeology):
    """Subset diffeology: accepted plots of ``parent`` whose image satisfies ``predicate``."""

    def __init__(self, parent, predicate, label="trace"):
        self.parent, self.predicate = parent, predicate
        self.space_dim = parent.space_dim
        self.label = label

    def generators(self):
        return self.parent.generators()

    def _accepts(self, cand, budget, order):
        pts = np.vstack([_sample_values(cand),
                         *(cand.grid_line(ax, a)[0] for a in cand.line_anchors()
                           for ax in range(cand.dim))])
        ok = np.asarray(self.predicate(cand(pts)), dtype=bool)
        if not np.all(ok):
            return Membership(False, "trace", failing_probe={
                "reason": "image leaves the subset", "at": pts[np.argmin(ok)].tolist()})
        return _is_plot(cand, self.parent, budget, order)


def trace_diffeology(diff, predicate):
    return Trace(diff, predicate)


class ProjectiveLimit(Diffeology):
    """Finite projective system ``X_0 <- X_1 <- ...`` realized on a common model space.

    ``projections[i]`` maps the limit model space to factor i and
    ``connecting[i]`` maps factor i+1 to factor i; consistency
    ``connecting[i] o projections[i+1] = projections[i]`` is checked on samples.
    """

    def __init__(self, factors, projections, connecting, space_dim, sample_points=None):
        if not factors or len(projections) != len(factors) or len(connecting) != len(factors) - 1:
            raise DiffeologyError("need one projection per factor and one connecting map per step")
        self.factors, self.projections, self.connecting = list(factors), list(projections), list(connecting)
        self.space_dim = int(space_dim)
        pts = sample_points
        if pts is None:
            pts = np.random.default_rng(0).uniform(-1, 1, size=(64, self.space_dim))
        for i, phi in enumerate(self.connecting):
            err = np.max(np.abs(phi(self.projections[i + 1](pts)) - self.projections[i](pts)))
            if err > AGREE_TOL:
                raise ConsistencyError(f"connecting map {i} inconsistent with projections ({err:.2e})")

    def _accepts(self, cand, budget, order):
        for i, (fac, pr) in enumerate(zip(self.factors, self.projections)):
            comp = Plot(cand.lower, cand.upper, lambda u, pr=pr: pr(cand(u)), fac.space_dim,
                        f"pr{i}o{cand.label}", witness=cand.witness)
            res = _is_plot(comp, fac, budget, order)
            if not res.accepted:
                return Membership(False, "projective limit",
                                  failing_probe={"factor": i, **(res.failing_probe or {})})
        return Membership(True, "projective limit")


def projective_limit_diffeology(factors, projections, connecting, space_dim, sample_points=None):
    return ProjectiveLimit(factors, projections, connecting, space_dim, sample_points)


# ---------------------------------------------------------------------------
# Froelicher structures


def line_contour(point, direction, half_length=1.0, label="line"):
    p = np.asarray(point, dtype=float)
    v = np.asarray(direction, dtype=float)
    return Plot([-half_length], [half_length], lambda u: p + u[:, :1] * v, len(p), label)


@dataclass
class FroelicherStructure:
    """Contours and functions generated by ``functions`` (scalar maps ``(N, d) -> (N,)``).

    ``contour_test(c)``: every generating function composed with c passes
    the probe.  ``function_test(h)``: h composed with every stored witness
    contour passes.  Witness contours are filtered through ``contour_test``
    when the structure is built, so every generating function passes
    ``function_test``.
    """

    functions: list
    space_dim: int
    witnesses: list = field(default_factory=list)
    order: int = DEFAULT_ORDER
    tol: float = PROBE_TOL

    def _probe(self, values, h):
        return smoothness_probe(values, self.order, self.tol, spacing=h)

    def contour_test(self, c):
        if c.dim != 1:
            raise ShapeError("contours are 1-plots")
        pts, h = c.grid_line(0, [0.0])
        x = c(pts)
        return all(self._probe(np.asarray(f(x), dtype=float), h) for f in self.functions)

    def function_test(self, h_fn):
        for c in self.witnesses:
            pts, h = c.grid_line(0, [0.0])
            if not self._probe(np.asarray(h_fn(c(pts)), dtype=float), h):
                return False
        return True


def froelicher_generate(functions, space_dim, extra_contours=(), lines=8, seed=0,
                        order=DEFAULT_ORDER, tol=PROBE_TOL):
    """Froelicher structure generated by ``functions``.

    The witness family is ``lines`` seeded straight lines plus any
    ``extra_contours`` (e.g. level curves of the generating functions), kept
    only if they pass the contour test.
    """
    fs = FroelicherStructure(list(functions), int(space_dim), [], order, tol)
    rng = np.random.default_rng(seed)
    cands = [line_contour(rng.uniform(-1, 1, space_dim), rng.normal(size=space_dim), label=f"line{i}")
             for i in range(lines)]
    cands += list(extra_contours)
    fs.witnesses = [c for c in cands if fs.contour_test(c)]
    return fs


# ---------------------------------------------------------------------------
# per-plot forms


def _fd_jacobian(plot, u, h=1e-3):
    """``(N, d, p)`` Jacobian by 4th-order central differences (analytic if provided)."""
    u = np.asarray(u, dtype=float).reshape(-1, plot.dim)
    if plot.jacobian is not None:
        return np.asarray(plot.jacobian(u), dtype=float)
    cols = []
    for k in range(plot.dim):
        e = np.zeros(plot.dim)
        e[k] = h
        cols.append((-plot(u + 2 * e) + 8 * plot(u + e) - 8 * plot(u - e) + plot(u - 2 * e)) / (12 * h))
    return np.stack(cols, axis=-1)


@dataclass
class PlotForm:
    """An n-form given plot by plot: ``evaluator(plot, u, vectors)`` with vectors ``(N, n, p)``."""

    degree: int
    evaluator: Callable

    def __call__(self, plot, u, vectors):
        return np.asarray(self.evaluator(plot, u, vectors), dtype=float)

    @classmethod
    def from_chart_form(cls, omega, degree):
        """Pull back ``omega(x, vectors)`` (vectors ``(N, n, d)``) along every plot."""
        def ev(plot, u, vectors):
            J = _fd_jacobian(plot, u)
            pushed = np.einsum("ndp,nkp->nkd", J, np.asarray(vectors, dtype=float))
            return omega(plot(u), pushed)

        return cls(degree, ev)


def pullback_value(form, p2, g, u, vectors):
    """``(g^* form_{p2})_u(vectors)``."""
    J = _fd_jacobian(g, u)
    pushed = np.einsum("nqp,nkp->nkq", J, np.asarray(vectors, dtype=float))
    return form(p2, g(u), pushed)


def form_compatibility_residual(form, p, p2, g, points, rng=None, frames=4):
    """Max ``|form_p(Y) - (g^* form_{p2})(Y)|`` over sample points and random frames."""
    rng = np.random.default_rng(0) if rng is None else rng
    u = np.asarray(points, dtype=float).reshape(-1, p.dim)
    mismatch = float(np.max(np.abs(p2(g(u)) - p(u))))
    if mismatch > AGREE_TOL * max(1.0, float(np.max(np.abs(p(u))))):
        raise PreconditionError(f"p2 o g differs from p by {mismatch:.2e}")
    worst = 0.0
    for _ in range(frames):
        Y = rng.normal(size=(len(u), form.degree, p.dim))
        a = form(p, u, Y)
        b = pullback_value(form, p2, g, u, Y)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


def alternation_residual(form, plot, points, rng=None):
    """Max ``|form(.., Y_i, .., Y_j, ..) + form(.., Y_j, .., Y_i, ..)|`` for i = 0, j = 1."""
    if form.degree < 2:
        return 0.0
    rng = np.random.default_rng(0) if rng is None else rng
    u = np.asarray(points, dtype=float).reshape(-1, plot.dim)
    Y = rng.normal(size=(len(u), form.degree, plot.dim))
    Ys = Y.copy()
    Ys[:, [0, 1]] = Y[:, [1, 0]]
    return float(np.max(np.abs(form(plot, u, Y) + form(plot, u, Ys))))


# ---------------------------------------------------------------------------
# JSON registry


def _poly(coeffs):
    c = np.asarray(coeffs, dtype=float)  # (d, degree + 1), increasing powers
    return lambda u: np.stack([np.polynomial.polynomial.polyval(u[:, 0], row) for row in c], axis=-1)


REGISTRY = {
    "identity": lambda dim: (lambda u: u, dim, lambda x: x),
    "polynomial": lambda coeffs: (_poly(coeffs), len(coeffs), None),
    "circle": lambda freq=1.0: (lambda u: np.stack([np.cos(freq * u[:, 0]), np.sin(freq * u[:, 0])], -1),
                                2, None),
    "polar": lambda: (lambda u: np.stack([u[:, 0] * np.cos(u[:, 1]), u[:, 0] * np.sin(u[:, 1])], -1),
                      2, lambda x: np.stack([np.hypot(x[:, 0], x[:, 1]),
                                             np.arctan2(x[:, 1], x[:, 0])], -1)),
}


def load_diffeology(data):
    """Build a :class:`Generated` diffeology from ``{"space_dim", "generators": [...]}``.

    Each generator is ``{"map": name, "domain": [[lo, hi], ...], "params": {...}}``
    with ``name`` one of :data:`REGISTRY`.
    """
    import json

    if isinstance(data, str):
        data = json.loads(data)
    gens = []
    for k, g in enumerate(data["generators"]):
        if g["map"] not in REGISTRY:
            raise DiffeologyError(f"generators/{k}/map: unknown map {g['map']!r}")
        fn, codim, inv = REGISTRY[g["map"]](**g.get("params", {}))
        dom = np.asarray(g["domain"], dtype=float)
        gens.append(Plot(dom[:, 0], dom[:, 1], fn, codim, g.get("label", g["map"]), inverse=inv))
    return Generated(gens, data["space_dim"], data.get("label", "json"))
