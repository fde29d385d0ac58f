"""Scenario registry: validated JSON descriptions of a chart, a group and a connection.

A scenario file (``"schema_version": 1``) declares the base chart, the
structure group, the connection as a list of terms ``coeff(x) dx_i (x) b_j``,
named loop templates, homotopy families and the expected values used by the
command line checks.  Six scenarios ship with the package; see
:data:`BUILTINS`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import sympy as sp

from .bundle import BaseChart, ConnectionData, Exclusion
from .curvature import BlockEmbedding
from .expr import compile_expr, derivative, parse_expr
from .liealg import AlgebraBasis, algebra_tag_for, exp_matrix, parse_tag
from .paths import (
    Loop,
    SmoothPath,
    fourier_loop,
    polygon_path,
    random_fourier_loops,
)

SCHEMA_VERSION = 1
BUILTINS = ("flat-plane", "flat-torus", "magnetic-u1", "sphere-lc", "so3-generic", "so3-reducible")

_NUM = {"type": "number"}
_EXPR = {"type": ["string", "number"]}
_PARAMS = {"type": "object", "additionalProperties": _NUM}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "name", "base", "group", "basepoint", "A"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "base": {
            "type": "object",
            "required": ["dim", "domain"],
            "additionalProperties": False,
            "properties": {
                "dim": {"type": "integer", "minimum": 1},
                "coords": {"type": "array", "items": {"type": "string"}},
                "domain": {"type": "array", "items": {"type": "array", "items": _NUM,
                                                      "minItems": 2, "maxItems": 2}},
                "exclude": {"type": "array", "items": {
                    "type": "object", "required": ["coords", "radius"],
                    "properties": {"coords": {"type": "array", "items": {"type": "integer"}},
                                   "radius": _NUM}}},
                "embedding": {"type": "array", "items": _EXPR},
            },
        },
        "group": {"type": "string", "pattern": r"^(SO|GL)\(\d+\)$"},
        "params": _PARAMS,
        "basepoint": {"type": "array", "items": _NUM},
        "A": {"type": "array", "items": {
            "type": "object", "required": ["coeff", "dx", "basis"],
            "additionalProperties": False,
            "properties": {
                "coeff": _EXPR,
                "dx": {"type": ["string", "integer"]},
                "basis": {"oneOf": [{"type": "integer", "minimum": 0},
                                    {"type": "array", "items": {"type": "array", "items": _NUM}}]},
            }}},
        "loops": {"type": "array", "items": {
            "type": "object", "required": ["name"],
            "properties": {
                "name": {"type": "string"},
                "x": {"type": "array", "items": _EXPR},
                "vertices": {"type": "array", "items": {"type": "array", "items": _NUM}},
                "params": _PARAMS,
                "note": {"type": "string"},
            },
            "oneOf": [{"required": ["x"]}, {"required": ["vertices"]}]}},
        "homotopies": {"type": "array", "items": {
            "type": "object", "required": ["name", "x"],
            "properties": {
                "name": {"type": "string"},
                "x": {"type": "array", "items": _EXPR},
                "params": _PARAMS,
                "samples": {"type": "integer", "minimum": 2},
            }}},
        "random_loops": {"type": "object", "properties": {
            "radius": {"type": "number", "exclusiveMinimum": 0},
            "modes": {"type": "integer", "minimum": 1}}},
        "properties": {"type": "object", "properties": {
            "flat": {"type": "boolean"},
            "abelian": {"type": "boolean"},
            "simply_connected": {"type": "boolean"},
            "reducible_to": {"type": "object", "required": ["kind", "indices"],
                             "properties": {"kind": {"const": "block"},
                                            "indices": {"type": "array",
                                                        "items": {"type": "integer"}}}}}},
        "expected": {"type": "object"},
    },
}


class ScenarioError(ValueError):
    pass


class ValidationError(ScenarioError):
    """Schema violation; ``field_path`` locates the offending entry."""

    def __init__(self, message, field_path):
        super().__init__(f"{'/'.join(map(str, field_path)) or '<root>'}: {message}")
        self.field_path = list(field_path)


def validate(data):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        if err.validator == "required" and not err.absolute_path:
            # name the missing top-level field itself
            missing = [k for k in SCHEMA["required"] if k not in data]
            raise ValidationError(err.message, missing[:1])
        raise ValidationError(err.message, list(err.absolute_path))


# ---------------------------------------------------------------------------
# building blocks


def _basis_names(basis):
    fam, n = parse_tag(basis.name)
    if fam == "so" and n == 2:
        return ["J"]
    if fam == "so" and n == 3:
        return ["Lx", "Ly", "Lz"]
    return [f"E{k}" for k in range(basis.dim)]


def _coord_index(coords, dx, where):
    if isinstance(dx, int):
        if not 0 <= dx < len(coords):
            raise ValidationError(f"coordinate index {dx} out of range", where)
        return dx
    if dx not in coords:
        raise ValidationError(f"unknown coordinate {dx!r}", where)
    return coords.index(dx)


def build_connection(data, chart, basis, coords, params, label):
    """``ConnectionData`` with exact Jacobian from the symbolic term list."""
    d, n = chart.dim, basis.matrix_size
    terms = []
    for k, term in enumerate(data):
        where = ["A", k]
        i = _coord_index(coords, term["dx"], where + ["dx"])
        b = term["basis"]
        if isinstance(b, int):
            if b >= basis.dim:
                raise ValidationError(f"basis index {b} >= {basis.dim}", where + ["basis"])
            mat = basis.elements[b]
        else:
            mat = np.asarray(b, dtype=float)
            if mat.shape != (n, n):
                raise ValidationError(f"basis matrix must be {n}x{n}", where + ["basis"])
        try:
            expr = parse_expr(term["coeff"], coords, params)
        except ValueError as exc:
            raise ValidationError(str(exc), where + ["coeff"]) from None
        f = compile_expr(expr, coords)
        grads = [compile_expr(derivative(expr, c), coords) for c in coords]
        terms.append((i, mat, f, grads))

    def components(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (d, n, n))
        cols = [x[..., j] for j in range(d)]
        for i, mat, f, _ in terms:
            out[..., i, :, :] += f(*cols)[..., None, None] * mat
        return out

    def jacobian(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (d, d, n, n))
        cols = [x[..., j] for j in range(d)]
        for i, mat, _, grads in terms:
            for kk, g in enumerate(grads):
                out[..., kk, i, :, :] += g(*cols)[..., None, None] * mat
        return out

    return ConnectionData(components, chart, n, jacobian, basis.name, label,
                          {"terms": len(terms)})


def compile_path(exprs, variables, params):
    """Compile coordinate expressions and their t-derivatives; ``variables[0]`` is ``t``."""
    parsed = [parse_expr(e, variables, params) for e in exprs]
    fs = [compile_expr(e, variables) for e in parsed]
    dfs = [compile_expr(derivative(e, "t"), variables) for e in parsed]
    return fs, dfs


def expression_path(exprs, variables, params, label="path", fixed=None, compiled=None):
    """Smooth path from coordinate expressions in ``t`` (and other fixed variables).

    ``fixed`` maps the remaining variables (e.g. a homotopy parameter ``s``)
    to numbers; ``compiled`` reuses the output of :func:`compile_path`.
    """
    fixed = fixed or {}
    syms = ["t"] + [v for v in variables if v != "t"]
    fs, dfs = compiled or compile_path(exprs, syms, params)
    extra = [fixed[v] for v in syms[1:]]

    def func(t):
        return np.stack([f(t, *extra) for f in fs], axis=-1)

    def deriv(t):
        return np.stack([f(t, *extra) for f in dfs], axis=-1)

    return SmoothPath(func, len(exprs), deriv, label=label)


def polygon_loop(vertices, label="polygon"):
    """Closed polygon through ``vertices`` with flat-ended straight sides."""
    v = [np.asarray(p, dtype=float) for p in vertices]
    return Loop(polygon_path(v + [v[0]], label), v[0], label)


def stokes_flux(conn, loop, generator, samples=2001, radial=8):
    """Flux of the curvature coefficient along ``generator`` through a planar loop.

    The enclosed region is swept by the cone ``(rho, t) -> b + rho (gamma(t) - b)``
    from the basepoint b, whose area element is the continuous shoelace
    weight ``rho * cross(gamma(t) - b, gamma'(t))``; orientation is
    respected.  Gauss-Legendre in rho, trapezoid in t (spectrally accurate
    for the flat-ended periodic integrand).  For an abelian connection with
    values in ``R generator`` the holonomy is ``exp(-flux * generator)``.
    """
    from .curvature import curvature_at

    if conn.base_dim != 2:
        raise ValueError("stokes_flux needs a 2-D chart")
    gen = np.asarray(generator, dtype=float)
    b = np.asarray(loop.basepoint, dtype=float)
    t = np.linspace(0.0, 1.0, samples)[:-1]
    rel = loop.path(t) - b
    vel = loop.path.velocity(t)
    cross = rel[:, 0] * vel[:, 1] - rel[:, 1] * vel[:, 0]
    nodes, weights = np.polynomial.legendre.leggauss(radial)
    rho = 0.5 * (nodes + 1)
    w = 0.5 * weights
    x = (b + rho[:, None, None] * rel[None]).reshape(-1, 2)
    F = curvature_at(conn, x, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    dens = (np.einsum("nij,ij->n", F, gen) / np.sum(gen * gen)).reshape(radial, -1)
    return float(np.sum(w[:, None] * rho[:, None] * dens * cross[None]) / (samples - 1))


# ---------------------------------------------------------------------------
# the scenario object


@dataclass
class Scenario:
    name: str
    chart: BaseChart
    group_tag: str
    basis: AlgebraBasis
    conn: ConnectionData
    basepoint: np.ndarray
    params: dict
    coords: list
    loop_specs: dict
    homotopy_specs: dict
    properties: dict
    expected: dict
    random_spec: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def matrix_size(self):
        return self.basis.matrix_size

    @property
    def abelian(self):
        return bool(self.properties.get("abelian", False))

    def loop(self, name, **params):
        """Instantiate the named loop template with parameter overrides."""
        if name not in self.loop_specs:
            raise ScenarioError(f"scenario {self.name!r} has no loop {name!r}")
        spec = self.loop_specs[name]
        if "vertices" in spec:
            return polygon_loop(spec["vertices"], name)
        p = {**self.params, **spec.get("params", {}), **params}
        label = name + "".join(f",{k}={v:g}" for k, v in sorted(params.items()))
        path = expression_path(spec["x"], ["t"], p, label)
        return Loop.from_path(path, label, tol=1e-10)

    def homotopy(self, name, samples=None, **params):
        """Loops ``H(s, .)`` for ``samples`` equally spaced s in [0, 1]."""
        if name not in self.homotopy_specs:
            raise ScenarioError(f"scenario {self.name!r} has no homotopy {name!r}")
        spec = self.homotopy_specs[name]
        p = {**self.params, **spec.get("params", {}), **params}
        n = samples or spec.get("samples", 10)
        compiled = compile_path(spec["x"], ["t", "s"], p)
        out = []
        for s in np.linspace(0.0, 1.0, n):
            path = expression_path(spec["x"], ["t", "s"], p, f"{name}(s={s:.3f})", {"s": s},
                                   compiled)
            out.append(Loop.from_path(path, tol=1e-10))
        return out

    def inside(self, pts, margin=0.05):
        return self.chart.margin(pts) > margin * self.chart.scale

    def random_loops(self, count, seed, radius=None):
        r = radius or self.random_spec.get("radius", 0.5)
        return random_fourier_loops(self.basepoint, count, seed, r,
                                    self.random_spec.get("modes", 3), self.inside)

    def random_starts(self, count, rng):
        """Fiber elements ``exp(X)`` with X a random algebra element (first one is e)."""
        out = [np.eye(self.matrix_size)]
        for _ in range(count - 1):
            out.append(exp_matrix(self.basis.element(rng.normal(size=self.basis.dim))))
        return out

    def random_open_path(self, start, rng, radius=None, label="open"):
        """A smooth non-closed path from ``start`` that stays in the chart."""
        r = radius or self.random_spec.get("radius", 0.5)
        start = np.asarray(start, dtype=float)
        d = len(start)
        for _ in range(200):
            a = rng.normal(size=d)
            a *= r * rng.uniform(0.3, 0.8) / np.linalg.norm(a)
            b = rng.normal(size=(2, d)) * 0.3 * r

            def func(t, a=a, b=b):
                k = np.pi * np.arange(1, 3)
                return start + t[:, None] * a + np.sin(np.outer(t, k)) @ b

            def deriv(t, a=a, b=b):
                k = np.pi * np.arange(1, 3)
                return a + (np.cos(np.outer(t, k)) * k) @ b

            path = SmoothPath(func, d, deriv, label=label)
            if np.all(self.inside(path.samples(257))):
                return path
        raise ScenarioError("could not draw an open path inside the chart")

    def expected_curvature(self):
        """``(point, v, w, matrix)`` from the ``expected.curvature`` entry, if any."""
        spec = self.expected.get("curvature")
        if spec is None:
            return None
        val = spec["value"]
        if isinstance(val, str):
            names = _basis_names(self.basis)
            e = sp.expand(parse_expr(val, names, self.params))
            mat = np.zeros((self.matrix_size, self.matrix_size))
            for k, nm in enumerate(names):
                mat += float(e.coeff(sp.Symbol(nm, real=True))) * self.basis.elements[k]
        else:
            mat = np.asarray(val, dtype=float)
        return (np.asarray(spec["point"], float), np.asarray(spec["v"], float),
                np.asarray(spec["w"], float), mat)

    def expected_angle(self, entry):
        p = {**self.params, **self.loop_specs[entry["loop"]].get("params", {}),
             **entry.get("params", {})}
        return float(parse_expr(entry["angle"], [], p).evalf())

    def embedding(self):
        if self.properties.get("reducible_to") is None:
            return None
        return BlockEmbedding(self.matrix_size, tuple(self.properties["reducible_to"]["indices"]))

    def check_grid(self):
        """Evaluate the connection on a sample grid; raises if anything is non-finite."""
        rng = np.random.default_rng(0)
        from .bundle import sample_points

        x = sample_points(self.chart, 64, rng)
        with np.errstate(all="ignore"):
            vals = self.conn.components(x)
        if not np.all(np.isfinite(vals)):
            raise ScenarioError(f"connection of {self.name!r} is not finite on the chart grid")


def _from_dict(data, source="<dict>"):
    validate(data)
    base = data["base"]
    d = base["dim"]
    coords = base.get("coords") or [f"x{i}" for i in range(d)]
    if len(coords) != d or len(base["domain"]) != d:
        raise ValidationError(f"expected {d} coordinates and domain intervals", ["base"])
    if len(data["basepoint"]) != d:
        raise ValidationError(f"basepoint must have {d} entries", ["basepoint"])
    params = data.get("params", {})
    excl = tuple(Exclusion(tuple(e["coords"]), float(e["radius"])) for e in base.get("exclude", []))
    embedding = None
    if base.get("embedding"):
        fs = [compile_expr(parse_expr(e, coords, params), coords) for e in base["embedding"]]

        def embedding(x, fs=fs):
            x = np.asarray(x, dtype=float)
            return np.stack([f(*(x[..., j] for j in range(d))) for f in fs], axis=-1)

    chart = BaseChart.box(base["domain"], data["name"], embedding=embedding, exclusions=excl)
    basis = AlgebraBasis.standard(algebra_tag_for(data["group"]))
    conn = build_connection(data["A"], chart, basis, coords, params, data["name"])
    bp = np.asarray(data["basepoint"], dtype=float)
    if not chart.contains(bp)[0]:
        raise ValidationError("basepoint lies outside the chart", ["basepoint"])
    loops = {lp["name"]: lp for lp in data.get("loops", [])}
    homs = {h["name"]: h for h in data.get("homotopies", [])}
    props = data.get("properties", {})
    red = props.get("reducible_to")
    if red and max(red["indices"]) >= basis.matrix_size:
        raise ValidationError("block index out of range", ["properties", "reducible_to", "indices"])
    sc = Scenario(data["name"], chart, data["group"], basis, conn, bp, params, coords,
                  loops, homs, props, data.get("expected", {}), data.get("random_loops", {}), data)
    sc.check_grid()
    return sc


def builtin_path(name):
    return resources.files("holab") / "data" / "scenarios" / f"{name}.json"


def load_scenario(source):
    """Load a built-in scenario by name, a JSON file path, or an already-parsed dict."""
    if isinstance(source, dict):
        return _from_dict(source)
    if source in BUILTINS:
        text = builtin_path(source).read_text()
        where = f"builtin:{source}"
    else:
        p = Path(source)
        if not p.exists():
            raise ScenarioError(f"no built-in scenario or file named {source!r}")
        text = p.read_text()
        where = str(p)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON ({exc.msg} at line {exc.lineno})", []) from None
    return _from_dict(data, where)


__all__ = [
    "BUILTINS",
    "SCHEMA",
    "Scenario",
    "ScenarioError",
    "ValidationError",
    "load_scenario",
    "stokes_flux",
    "polygon_loop",
    "expression_path",
    "fourier_loop",
]
