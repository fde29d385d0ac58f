"""Matrix Lie group / Lie algebra kernel.

Everything here works on plain ``numpy`` arrays.  The thin
:class:`AlgebraElement` / :class:`GroupElement` wrappers only add a tag
(``"so3"``, ``"SO(3)"``, ...) so that membership residuals can be checked at
module boundaries; every operation accepts either a wrapper or a raw array
and returns the same kind it was given.

The regular-group exponential follows the right logarithmic derivative
convention ``g'(t) g(t)^{-1} = v(t)``, ``g(0) = e``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

MEMBERSHIP_TOL = 1e-8
DET_FLOOR = 1e-12
DEFAULT_RANK_TOL = 1e-8
ABS_RANK_FLOOR = 1e-10


class LieAlgebraError(ValueError):
    """Raised for malformed algebra/group input (shapes, non-finite entries)."""


class ShapeError(LieAlgebraError):
    pass


class NumericError(LieAlgebraError):
    pass


# ---------------------------------------------------------------------------
# tags and defining relations


def _so_relation(m):
    return np.max(np.abs(m + np.swapaxes(m, -1, -2)), initial=0.0)


def _SO_relation(m):
    n = m.shape[-1]
    ortho = np.max(np.abs(np.swapaxes(m, -1, -2) @ m - np.eye(n)), initial=0.0)
    return max(ortho, float(np.max(np.abs(np.linalg.det(m) - 1.0), initial=0.0)))


def parse_tag(tag):
    """Split a tag like ``"so3"``, ``"so(3)"`` or ``"SO(3)"`` into (family, n)."""
    t = tag.replace("(", "").replace(")", "").replace(" ", "")
    for fam in ("so", "SO", "gl", "GL"):
        if t.startswith(fam) and t[len(fam):].isdigit():
            return fam, int(t[len(fam):])
    return t, None


def relation_residual(matrix, tag):
    """Max-abs residual of the defining relation of ``tag`` (0 if it has none)."""
    fam, _ = parse_tag(tag)
    m = np.asarray(matrix, dtype=float)
    if fam == "so":
        return float(_so_relation(m))
    if fam == "SO":
        return float(_SO_relation(m))
    return 0.0


def group_tag_for(algebra_tag):
    fam, n = parse_tag(algebra_tag)
    if n is None:
        return algebra_tag
    return f"{fam.upper()}({n})"


def algebra_tag_for(group_tag):
    fam, n = parse_tag(group_tag)
    if n is None:
        return group_tag
    return f"{fam.lower()}{n}"


@dataclass(frozen=True)
class AlgebraElement:
    matrix: np.ndarray
    algebra_tag: str = "gl"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"algebra element must be square, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)
        _, n = parse_tag(self.algebra_tag)
        if n is not None and n != m.shape[0]:
            raise ShapeError(f"{self.algebra_tag} expects {n}x{n}, got {m.shape}")

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def residual(self):
        return relation_residual(self.matrix, self.algebra_tag)

    def is_member(self, tol=MEMBERSHIP_TOL):
        return self.residual() <= tol


@dataclass(frozen=True)
class GroupElement:
    matrix: np.ndarray
    group_tag: str = "GL"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"group element must be square, got shape {m.shape}")
        if abs(np.linalg.det(m)) <= DET_FLOOR:
            raise NumericError("group element is singular")
        object.__setattr__(self, "matrix", m)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def residual(self):
        return relation_residual(self.matrix, self.group_tag)

    def is_member(self, tol=MEMBERSHIP_TOL):
        return self.residual() <= tol

    def inverse(self):
        return GroupElement(np.linalg.inv(self.matrix), self.group_tag)

    def __matmul__(self, other):
        return GroupElement(self.matrix @ np.asarray(other), self.group_tag)


def _unwrap(x):
    if isinstance(x, (AlgebraElement, GroupElement)):
        return x.matrix
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# standard bases


def so_basis(n):
    """Basis of so(n): E_ij - E_ji for i < j, ordered so that so(3) gives L_x, L_y, L_z."""
    if n == 3:
        lx = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
        ly = np.array([[0, 0, 1], [0, 0, 0], [-1, 0, 0]], dtype=float)
        lz = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 0]], dtype=float)
        return np.stack([lx, ly, lz])
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n))
            e[j, i] = 1.0
            e[i, j] = -1.0
            out.append(e)
    return np.array(out).reshape(-1, n, n)


def gl_basis(n):
    return np.eye(n * n).reshape(n * n, n, n)


@dataclass
class AlgebraBasis:
    """An ordered basis of a matrix Lie algebra with its structure constants.

    ``structure_constants[i, j, k]`` is the coefficient of ``elements[k]`` in
    ``[elements[i], elements[j]]``.
    """

    name: str
    elements: np.ndarray
    structure_constants: np.ndarray = field(default=None)

    def __post_init__(self):
        e = np.asarray(self.elements, dtype=float)
        if e.ndim != 3 or e.shape[1] != e.shape[2]:
            raise ShapeError(f"basis must have shape (k, n, n), got {e.shape}")
        self.elements = e
        flat = e.reshape(len(e), -1)
        if len(e):
            smin = np.linalg.svd(flat, compute_uv=False).min()
            if smin <= ABS_RANK_FLOOR:
                raise LieAlgebraError(f"basis of {self.name} is linearly dependent")
        if self.structure_constants is None:
            self.structure_constants = self._compute_structure_constants()

    @property
    def matrix_size(self):
        return self.elements.shape[1]

    @property
    def dim(self):
        return self.elements.shape[0]

    def _compute_structure_constants(self):
        k = self.dim
        flat = self.elements.reshape(k, -1)
        br = bracket(self.elements[:, None], self.elements[None, :]).reshape(k * k, -1)
        coef, *_ = np.linalg.lstsq(flat.T, br.T, rcond=None)
        return coef.T.reshape(k, k, k)

    def structure_residual(self):
        """How well the structure constants reproduce the brackets; nonzero when not closed."""
        br = bracket(self.elements[:, None], self.elements[None, :])
        recon = np.einsum("ijk,kab->ijab", self.structure_constants, self.elements)
        return float(np.max(np.abs(br - recon), initial=0.0))

    def element(self, coefficients):
        return np.tensordot(np.asarray(coefficients, dtype=float), self.elements, axes=1)

    @classmethod
    def standard(cls, tag):
        fam, n = parse_tag(tag)
        if fam in ("so", "SO"):
            return cls(f"so{n}", so_basis(n))
        if fam in ("gl", "GL"):
            return cls(f"gl{n}", gl_basis(n))
        raise LieAlgebraError(f"unknown algebra tag {tag!r}")

    @classmethod
    def from_json(cls, source):
        """Load ``{"name", "matrix_size", "basis": [[row-major entries], ...]}``."""
        if isinstance(source, (str, Path)) and Path(source).exists():
            data = json.loads(Path(source).read_text())
        elif isinstance(source, str):
            data = json.loads(source)
        else:
            data = source
        n = int(data["matrix_size"])
        rows = np.asarray(data["basis"], dtype=float)
        if rows.ndim != 2 or rows.shape[1] != n * n:
            raise ShapeError(f"each basis entry must hold {n * n} row-major entries")
        return cls(data["name"], rows.reshape(-1, n, n))

    def to_json(self):
        return {
            "name": self.name,
            "matrix_size": self.matrix_size,
            "basis": self.elements.reshape(self.dim, -1).tolist(),
        }


# ---------------------------------------------------------------------------
# core operations


def bracket(X, Y):
    """Commutator ``XY - YX``; broadcasts over leading axes."""
    if isinstance(X, AlgebraElement) and isinstance(Y, AlgebraElement):
        if X.algebra_tag != Y.algebra_tag:
            raise ShapeError(f"bracket of {X.algebra_tag} with {Y.algebra_tag}")
        return AlgebraElement(bracket(X.matrix, Y.matrix), X.algebra_tag)
    x, y = _unwrap(X), _unwrap(Y)
    if x.shape[-2:] != y.shape[-2:]:
        raise ShapeError(f"bracket of shapes {x.shape} and {y.shape}")
    return x @ y - y @ x


def adjoint(g, X):
    """``Ad_g X = g X g^{-1}``."""
    gm, xm = _unwrap(g), _unwrap(X)
    if gm.shape[-1] != xm.shape[-1]:
        raise ShapeError(f"adjoint of {xm.shape} by {gm.shape}")
    if np.any(np.abs(np.linalg.det(gm)) <= DET_FLOOR):
        raise NumericError("adjoint by a singular matrix")
    out = gm @ np.linalg.solve(np.swapaxes(gm, -1, -2), np.swapaxes(xm, -1, -2)).swapaxes(-1, -2)
    if isinstance(X, AlgebraElement):
        return AlgebraElement(out, X.algebra_tag)
    return out


# Pade(13) coefficients and theta thresholds from Higham (2005).
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
])
_PADE13 = _PADE13 / _PADE13[0]  # so that exp(0) is exactly e
_THETA13 = 5.371920351148152


def exp_matrix(X):
    """Matrix exponential by scaling and squaring around a [13/13] Pade core.

    Accepts a single matrix or a stack ``(..., n, n)``; one common scaling
    exponent is used for the whole stack.
    """
    wrapped = isinstance(X, AlgebraElement)
    a = _unwrap(X)
    if not np.all(np.isfinite(a)):
        raise NumericError("exp_matrix: non-finite entries")
    n = a.shape[-1]
    norm1 = np.max(np.sum(np.abs(a), axis=-2), initial=0.0) if a.size else 0.0
    s = 0
    if norm1 > _THETA13:
        s = int(np.ceil(np.log2(norm1 / _THETA13)))
        a = a / 2.0**s
    b = _PADE13
    ident = np.broadcast_to(np.eye(n), a.shape)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    if wrapped:
        return GroupElement(r, group_tag_for(X.algebra_tag))
    return r


# Two-point Gauss-Legendre nodes on [0, 1].
GAUSS_NODES = np.array([0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6])


def magnus_generators(v1, v2, h):
    """Fourth-order Magnus generator for ``g' = v g`` over one step of size h.

    ``v1, v2`` are ``v`` at the two Gauss points of the step (stacks allowed).
    """
    return 0.5 * h * (v1 + v2) + (np.sqrt(3) / 12.0) * h * h * bracket(v2, v1)


def propagate(omegas, start):
    """Accumulate ``g_{k+1} = exp(omega_k) g_k`` from ``start``; returns all nodes."""
    steps = len(omegas)
    n = start.shape[-1]
    expo = exp_matrix(omegas) if steps else np.empty((0, n, n))
    out = np.empty((steps + 1, n, n))
    out[0] = start
    g = start
    for k in range(steps):
        g = expo[k] @ g
        out[k + 1] = g
    return out


def _as_callable(v, steps):
    if callable(v):
        return v
    samples = np.asarray(v, dtype=float)
    if samples.ndim != 3 or len(samples) == 0:
        raise LieAlgebraError("product_integral: need a non-empty (N, n, n) sample array")
    if len(samples) < steps + 1:
        raise LieAlgebraError(f"product_integral: {len(samples)} samples for {steps} steps")
    if len(samples) == 1:
        return lambda t: np.broadcast_to(samples[0], np.shape(t) + samples.shape[1:])
    grid = np.linspace(0.0, 1.0, len(samples))
    kind = "not-a-knot" if len(samples) >= 4 else "natural"
    return CubicSpline(grid, samples, axis=0, bc_type=kind)


def product_integral(v, steps, start=None):
    """Solve ``g'(t) g(t)^{-1} = v(t)`` on [0, 1] with ``g(0) = start`` (default e).

    ``v`` is either a vectorized callable ``t -> (len(t), n, n)`` or uniform
    samples ``(N, n, n)`` on [0, 1] with ``N >= steps + 1`` (interpolated by a
    cubic spline).  Returns the group path at the ``steps + 1`` uniform nodes.
    """
    if steps < 1:
        raise LieAlgebraError("product_integral: steps must be >= 1")
    f = _as_callable(v, steps)
    h = 1.0 / steps
    t0 = np.arange(steps) * h
    vals = np.asarray(f(np.concatenate([t0 + GAUSS_NODES[0] * h, t0 + GAUSS_NODES[1] * h])))
    n = vals.shape[-1]
    omegas = magnus_generators(vals[:steps], vals[steps:], h)
    g0 = np.eye(n) if start is None else _unwrap(start)
    return propagate(omegas, g0)


# ---------------------------------------------------------------------------
# subalgebras


@dataclass
class SubalgebraSpan:
    """Frobenius-orthonormal basis of a bracket-closed subalgebra."""

    basis: np.ndarray
    generation_log: list
    rank_tolerance: float = DEFAULT_RANK_TOL
    matrix_size: int = 0

    @property
    def rank(self):
        return len(self.basis)

    def _flat(self):
        return self.basis.reshape(self.rank, -1)

    def project(self, X):
        x = _unwrap(X)
        if self.rank == 0:
            return np.zeros_like(x)
        flat = x.reshape(x.shape[:-2] + (-1,))
        coef = flat @ self._flat().T
        return (coef @ self._flat()).reshape(x.shape)

    def distance(self, X):
        """Frobenius norm of the component of X orthogonal to the span."""
        x = _unwrap(X)
        return np.linalg.norm((x - self.project(x)).reshape(x.shape[:-2] + (-1,)), axis=-1)

    def orthonormality_residual(self):
        if self.rank == 0:
            return 0.0
        f = self._flat()
        return float(np.max(np.abs(f @ f.T - np.eye(self.rank))))

    def closure_residual(self):
        if self.rank == 0:
            return 0.0
        br = bracket(self.basis[:, None], self.basis[None, :])
        return float(np.max(self.distance(br)))


def _orthonormal_rows(mat, thresh):
    if mat.shape[0] == 0:
        return mat[:0], np.zeros((0, 0)), np.zeros(0)
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    keep = s > thresh
    return vt[keep], u[:, keep], s[keep]


def bracket_closure(generators, rank_tolerance=DEFAULT_RANK_TOL, abs_tolerance=ABS_RANK_FLOOR):
    """Smallest bracket-closed subspace containing ``generators``.

    Generators are orthonormalized by singular-value thresholding at
    ``max(rank_tolerance * s_max, abs_tolerance)``.  Each round brackets all
    basis pairs, projects out the current span and keeps the singular
    directions of the residual above ``rank_tolerance`` (the basis has unit
    scale by then).  Stops when a round adds nothing.
    """
    gens = [_unwrap(g) for g in generators]
    if not gens:
        raise LieAlgebraError("bracket_closure: empty generator list")
    n = gens[0].shape[-1]
    G = np.stack(gens).reshape(len(gens), -1)
    smax = np.linalg.svd(G, compute_uv=False).max(initial=0.0)
    thresh0 = max(rank_tolerance * smax, abs_tolerance)
    basis, u, s = _orthonormal_rows(G, thresh0)
    log = []
    for k in range(len(basis)):
        parent = int(np.argmax(np.abs(u[:, k])))
        log.append(((parent,), 0))
    depth = 0
    while 0 < len(basis) < n * n:
        depth += 1
        B = basis.reshape(-1, n, n)
        pairs = [(i, j) for i in range(len(B)) for j in range(i + 1, len(B))]
        if not pairs:
            break
        cand = np.stack([bracket(B[i], B[j]).ravel() for i, j in pairs])
        resid = cand - (cand @ basis.T) @ basis
        new, u, s = _orthonormal_rows(resid, rank_tolerance)
        if len(new) == 0:
            break
        # re-orthogonalize against the existing basis once more
        new = new - (new @ basis.T) @ basis
        new, _, _ = _orthonormal_rows(new, rank_tolerance)
        for k in range(len(new)):
            log.append((pairs[int(np.argmax(np.abs(u[:, min(k, u.shape[1] - 1)])))], depth))
        basis = np.vstack([basis, new])
    return SubalgebraSpan(basis.reshape(-1, n, n), log, rank_tolerance, n)


@dataclass
class AdStabilityReport:
    max_residual: float
    per_probe: list


def ad_stability_check(span, probes):
    """Distance of ``Ad_g b`` to the span for every probe g and basis vector b."""
    per_probe = []
    for g in probes:
        if span.rank == 0:
            per_probe.append(0.0)
            continue
        moved = adjoint(_unwrap(g), span.basis)
        per_probe.append(float(np.max(span.distance(moved))))
    return AdStabilityReport(max(per_probe, default=0.0), per_probe)


def exp_probes(span, scale=1.0):
    """Probes ``exp(+-scale * b)`` for every basis vector b of the span."""
    out = []
    for b in span.basis:
        out.append(exp_matrix(scale * b))
        out.append(exp_matrix(-scale * b))
    return out


def log_matrix(g):
    """Principal real logarithm; returns ``(log, ok)`` with ``ok=False`` off the principal domain."""
    from scipy.linalg import logm

    m = _unwrap(g)
    if not np.all(np.isfinite(m)):
        return np.full_like(m, np.nan), False
    ev = np.linalg.eigvals(m)
    if np.any((np.abs(ev.imag) < 1e-6) & (ev.real <= 0)):
        return np.full_like(m, np.nan), False
    lg = logm(m)
    if np.iscomplexobj(lg):
        if np.max(np.abs(lg.imag), initial=0.0) > 1e-8:
            return np.full_like(m, np.nan), False
        lg = lg.real
    ok = bool(np.max(np.abs(exp_matrix(lg) - m)) <= 1e-8)
    return lg, ok


def rotation_angle_2d(g):
    """Angle of an SO(2) matrix ``[[c, -s], [s, c]]``."""
    m = _unwrap(g)
    return float(np.arctan2(m[1, 0], m[0, 0]))
