"""Holonomy of loops, the path-lifting axiom suite, loop equivalence and flatness.

Composition convention: ``concat(second, first)`` runs ``first`` and then
``second``, and with the lift started at the identity,

    holonomy(second v first) = holonomy(second) @ holonomy(first).

A holonomy element ``h`` is defined by ``fiber(1) = fiber(0) h``, so
starting the lift at ``g`` instead of ``e`` conjugates it to ``g^-1 h g``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bundle import horizontal_lift
from .liealg import log_matrix
from .paths import (
    JoinError,
    Loop,
    SmoothPath,
    as_path,
    concat,
    concat_loops,
    reparametrize,
    reverse,
    reverse_loop,
)

IDENTITY_TOL = 1e-6

__all__ = [
    "HolonomyRecord",
    "holonomy_element",
    "loops_equivalent",
    "axiom_suite",
    "flatness_check",
    "reverse",
    "concat",
    "reverse_loop",
    "concat_loops",
]


def parallel_map(fn, items):
    """Map preserving order; ``HOLAB_THREADS`` caps the fan-out (default 1)."""
    items = list(items)
    threads = max(1, int(os.environ.get("HOLAB_THREADS", "1") or 1))
    if threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class HolonomyRecord:
    loop_id: str
    element: np.ndarray
    log: np.ndarray
    log_ok: bool
    steps: int
    residuals: dict = field(default_factory=dict)

    def distance_to_identity(self):
        return float(np.linalg.norm(self.element - np.eye(len(self.element))))


def holonomy_element(conn, loop, start=None, steps=1000):
    """Holonomy ``h = start^-1 fiber(1)`` of a loop from the lift at ``start``."""
    path = as_path(loop)
    lift = horizontal_lift(conn, path, start, steps)
    h = np.linalg.solve(lift.start_fiber, lift.end)
    lg, ok = log_matrix(h)
    label = loop.label if isinstance(loop, Loop) else path.label
    return HolonomyRecord(
        label, h, lg, ok, steps,
        {"group": lift.group_residual(), "closure": as_path(loop).closure_gap()},
    )


def loops_equivalent(conn, loop, other, tol=IDENTITY_TOL, steps=1000, start=None):
    """``loop ~ other`` iff ``rev(other) v loop`` has trivial holonomy.

    Also compares the two end fibers directly; returns ``(verdict, details)``
    where ``details["agree"]`` says whether both criteria gave the same answer.
    """
    if np.linalg.norm(np.asarray(loop.basepoint) - np.asarray(other.basepoint)) > 1e-10:
        raise ValueError("loops_equivalent: loops have different basepoints")
    combo = concat_loops(reverse_loop(other), loop)
    rec = holonomy_element(conn, combo, start, steps)
    via_concat = rec.distance_to_identity()
    end_a = horizontal_lift(conn, loop.path, start, steps).end
    end_b = horizontal_lift(conn, other.path, start, steps).end
    direct = float(np.linalg.norm(end_a - end_b))
    verdict = via_concat <= tol
    return verdict, {"concat_residual": via_concat, "direct_residual": direct,
                     "agree": verdict == (direct <= tol)}


# ---------------------------------------------------------------------------
# path-lifting axioms


def _monotone_map(t, a=0.35):
    """A smooth increasing bijection of [0, 1] used to test reparametrization equivariance."""
    return t + a * np.sin(np.pi * t) * t * (1 - t) * 4 / np.pi


def _monotone_map_derivative(t, a=0.35):
    return 1 + a * 4 / np.pi * (np.pi * np.cos(np.pi * t) * t * (1 - t) + np.sin(np.pi * t) * (1 - 2 * t))


@dataclass
class AxiomCase:
    """One case of the suite: a path, a second path starting at its end, and fiber starts."""

    path: SmoothPath
    follow: SmoothPath
    starts: list


@dataclass
class AxiomReport:
    residuals: dict
    triviality_verdicts: list
    tol: float

    @property
    def passed(self):
        consistent = all(len(set(v)) == 1 for v in self.triviality_verdicts)
        return consistent and all(r <= self.tol for r in self.residuals.values())

    def table(self):
        return [{"axiom": k, "max_residual": v, "pass": v <= self.tol}
                for k, v in self.residuals.items()]


def _case_residuals(conn, case, steps):
    p, q = as_path(case.path), as_path(case.follow)
    starts = case.starts
    x = starts[0]
    res = {}
    lift = horizontal_lift(conn, p, x, steps)
    grid = np.linspace(0.0, 1.0, 33)

    # (i) projection: the lift's base is the input path, node by node
    res["i_projection"] = float(np.max(np.abs(lift.base(lift.times) - p(lift.times))))

    # (ii) splitting along q v p
    joined = horizontal_lift(conn, concat(q, p), x, steps)
    second = horizontal_lift(conn, q, lift.end, steps)
    mid = joined.at(0.5)[0]
    res["ii_concatenation"] = float(max(np.max(np.abs(mid - lift.end)),
                                        np.max(np.abs(joined.end - second.end))))

    # (iii) L(p o g) = L(p) o g for a monotone g
    rep = reparametrize(p, _monotone_map, _monotone_map_derivative)
    lift_rep = horizontal_lift(conn, rep, x, steps)
    res["iii_reparametrization"] = float(np.max(np.abs(lift_rep.at(grid) - lift.at(_monotone_map(grid)))))

    # (iv) backtracking cancels
    back = horizontal_lift(conn, concat(reverse(p), p), x, steps)
    res["iv_backtrack"] = float(np.max(np.abs(back.end - x)))

    # (v) initial condition
    res["v_initial"] = float(np.max(np.abs(lift.fiber[0] - x)))

    # (vi) loop triviality does not depend on the start; on loops only
    verdicts = []
    eq = 0.0
    loops = [p] if p.closure_gap() <= 1e-10 else []
    loops.append(concat(reverse(p), p))
    ref_hol = None
    for lp in loops:
        vs = []
        for k, g in enumerate(starts):
            end = horizontal_lift(conn, lp, g, steps).end
            vs.append(bool(np.linalg.norm(end - g) <= IDENTITY_TOL))
            if k == 0:
                ref_hol = np.linalg.solve(g, end)
                ref_start = g
            else:
                # equivariance: end(g) = end(g0) g0^-1 g
                pred = ref_start @ ref_hol @ np.linalg.solve(ref_start, g)
                eq = max(eq, float(np.max(np.abs(end - pred))))
        verdicts.append(vs)
    res["vi_start_independence"] = eq
    return res, verdicts


def axiom_suite(conn, cases, tol=1e-6, steps=1000):
    """Check the six path-lifting axioms on each case; per-axiom max residuals."""
    results = parallel_map(lambda c: _case_residuals(conn, c, steps), cases)
    residuals = {}
    verdicts = []
    for res, vs in results:
        for k, v in res.items():
            residuals[k] = max(residuals.get(k, 0.0), v)
        verdicts.extend(vs)
    return AxiomReport(residuals, verdicts, tol)


# ---------------------------------------------------------------------------
# flatness


@dataclass
class FlatnessReport:
    verdict: str
    max_variation: float
    max_from_identity: float
    holonomies: list

    @property
    def flat(self):
        return self.verdict in ("flat", "totally flat")


def flatness_check(conn, families, tol=1e-7, steps=1000, start=None):
    """Classify a connection on user-supplied deformation families of loops.

    ``families`` is a list of loop lists; each inner list samples one smooth
    homotopy ``s -> H(s, .)``.  "flat" means the holonomy is constant along
    every family, "totally flat" that in addition every holonomy is the
    identity.  Verdicts are relative to the tested families only.
    """
    hols = []
    variation = 0.0
    from_id = 0.0
    for fam in families:
        recs = parallel_map(lambda lp: holonomy_element(conn, lp, start, steps).element, fam)
        hols.append(recs)
        ref = recs[0]
        for h in recs:
            variation = max(variation, float(np.linalg.norm(h - ref)))
            from_id = max(from_id, float(np.linalg.norm(h - np.eye(len(h)))))
    if variation > tol:
        verdict = "not flat"
    elif from_id > tol:
        verdict = "flat"
    else:
        verdict = "totally flat"
    return FlatnessReport(verdict, variation, from_id, hols)


def group_law_residuals(conn, a, b, c, steps=1000):
    """Composition, inverse and associativity residuals for three loops at one basepoint."""
    ha = holonomy_element(conn, a, None, steps).element
    hb = holonomy_element(conn, b, None, steps).element
    hc = holonomy_element(conn, c, None, steps).element
    comp = holonomy_element(conn, concat_loops(b, a), None, steps).element
    inv = holonomy_element(conn, reverse_loop(a), None, steps).element
    left = holonomy_element(conn, concat_loops(concat_loops(c, b), a), None, steps).element
    right = holonomy_element(conn, concat_loops(c, concat_loops(b, a)), None, steps).element
    return {
        "composition": float(np.max(np.abs(comp - hb @ ha))),
        "inverse": float(np.max(np.abs(inv @ ha - np.eye(len(ha))))),
        "associativity": float(max(np.max(np.abs(left - right)),
                                   np.max(np.abs(left - hc @ hb @ ha)))),
    }


__all__ += ["AxiomCase", "AxiomReport", "FlatnessReport", "group_law_residuals", "JoinError"]
