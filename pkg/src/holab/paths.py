"""Smooth paths on a base chart and the operations on them.

Paths are parametrized on [0, 1] and evaluated vectorized: ``path(t)`` with
``t`` of shape ``(N,)`` returns ``(N, d)``.  Concatenation re-times both
pieces through a flat-ended smooth step so that the spliced path stays
C-infinity across the seam.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

DEFAULT_SAMPLES = 257
JOIN_TOL = 1e-10
CLOSURE_TOL = 1e-12


class PathError(ValueError):
    pass


class JoinError(PathError):
    pass


# exp(-1/t) underflows to 0 below this, and so does every derivative
_PSI_CUTOFF = 1.0 / 700.0


def _psi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > _PSI_CUTOFF
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def _dpsi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > _PSI_CUTOFF
    out[pos] = np.exp(-1.0 / t[pos]) / t[pos] ** 2
    return out


def flat_step(t):
    """Smooth monotone step [0,1] -> [0,1] with all derivatives zero at both ends.

    Constant (0 or 1) outside [0, 1], so it is smooth on the whole line.
    """
    a, b = _psi(t), _psi(1.0 - np.asarray(t, dtype=float))
    return a / (a + b)


def flat_step_derivative(t):
    t = np.asarray(t, dtype=float)
    a, b = _psi(t), _psi(1.0 - t)
    da, db = _dpsi(t), _dpsi(1.0 - t)
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True)
class SmoothPath:
    """A smooth path [0, 1] -> R^d.

    ``func`` maps ``(N,)`` times to ``(N, d)`` points.  ``deriv`` is the
    analytic velocity when known; otherwise :meth:`velocity` falls back to a
    4th-order central difference.
    """

    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    stationary_ends: bool = False
    label: str = ""

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self.func(t), dtype=float).reshape(len(t), self.dim)

    def velocity(self, t, steps=None):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.deriv is not None:
            return np.asarray(self.deriv(t), dtype=float).reshape(len(t), self.dim)
        h = 1.0 / (8 * steps) if steps else 1e-3
        f = self.func
        return (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12 * h)

    def samples(self, n=DEFAULT_SAMPLES):
        return self(np.linspace(0.0, 1.0, n))

    @property
    def start(self):
        return self(0.0)[0]

    @property
    def end(self):
        return self(1.0)[0]

    def closure_gap(self):
        return float(np.linalg.norm(self.end - self.start))

    def endpoint_speed(self):
        return float(np.max(np.linalg.norm(self.velocity(np.array([0.0, 1.0])), axis=1)))


def constant_path(point, label="const"):
    p = np.asarray(point, dtype=float)
    d = len(p)
    return SmoothPath(
        lambda t: np.broadcast_to(p, (len(t), d)).copy(),
        d,
        lambda t: np.zeros((len(t), d)),
        stationary_ends=True,
        label=label,
    )


def line_path(a, b, label="line"):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return SmoothPath(lambda t: a + t[:, None] * (b - a), len(a),
                      lambda t: np.broadcast_to(b - a, (len(t), len(a))).copy(), label=label)


def reparametrize(path, phi, dphi, label=None, stationary_ends=None):
    """``path o phi`` with chain-rule velocity."""
    def func(t):
        return path(phi(t))

    def deriv(t):
        return path.velocity(phi(t)) * dphi(t)[:, None]

    return SmoothPath(func, path.dim, deriv,
                      path.stationary_ends if stationary_ends is None else stationary_ends,
                      label or path.label)


def stationary(path):
    """Re-time ``path`` through the flat step so it is stationary at both ends."""
    if path.stationary_ends:
        return path
    return reparametrize(path, flat_step, flat_step_derivative, stationary_ends=True)


def reverse(path):
    """``t -> path(1 - t)``."""
    return SmoothPath(lambda t: path(1.0 - t), path.dim,
                      lambda t: -path.velocity(1.0 - t),
                      path.stationary_ends, f"rev({path.label})")


def concat(second, first, tol=JOIN_TOL):
    """``second v first``: run ``first`` on [0, 1/2], then ``second`` on [1/2, 1]."""
    if second.dim != first.dim:
        raise JoinError("cannot join paths of different dimension")
    gap = np.linalg.norm(first.end - second.start)
    if gap > tol:
        raise JoinError(f"endpoint mismatch {gap:.3e} > {tol:.1e}")

    def func(t):
        lo = t <= 0.5
        out = np.empty((len(t), first.dim))
        if np.any(lo):
            out[lo] = first(flat_step(2 * t[lo]))
        if np.any(~lo):
            out[~lo] = second(flat_step(2 * t[~lo] - 1))
        return out

    def deriv(t):
        lo = t <= 0.5
        out = np.empty((len(t), first.dim))
        if np.any(lo):
            s = 2 * t[lo]
            out[lo] = first.velocity(flat_step(s)) * (2 * flat_step_derivative(s))[:, None]
        if np.any(~lo):
            s = 2 * t[~lo] - 1
            out[~lo] = second.velocity(flat_step(s)) * (2 * flat_step_derivative(s))[:, None]
        return out

    return SmoothPath(func, first.dim, deriv, True, f"({second.label} v {first.label})")


def polygon_path(vertices, label="polygon"):
    """Piecewise-linear path through ``vertices``, one flat-step side per 1/(n-1) of time.

    Stationary at every vertex, so it is smooth; unlike nested :func:`concat`
    the sides share the time evenly, which keeps the speed bounded.
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v) - 1
    if n < 1:
        raise PathError("polygon_path needs at least two vertices")
    d = v.shape[1]

    def split(t):
        s = np.clip(t, 0.0, 1.0) * n
        k = np.minimum(np.floor(s).astype(int), n - 1)
        return k, s - k

    def func(t):
        k, r = split(t)
        return v[k] + flat_step(r)[:, None] * (v[k + 1] - v[k])

    def deriv(t):
        k, r = split(t)
        return n * flat_step_derivative(r)[:, None] * (v[k + 1] - v[k])

    return SmoothPath(func, d, deriv, True, label)


@dataclass(frozen=True)
class Loop:
    """A closed, endpoint-stationary path based at ``basepoint``."""

    path: SmoothPath
    basepoint: np.ndarray
    label: str = ""

    @classmethod
    def from_path(cls, path, label=None, tol=CLOSURE_TOL):
        gap = path.closure_gap()
        if gap > tol:
            raise PathError(f"not a loop: closure gap {gap:.3e}")
        return cls(stationary(path), path.start, label or path.label)

    def __call__(self, t):
        return self.path(t)

    def velocity(self, t, steps=None):
        return self.path.velocity(t, steps)

    @property
    def dim(self):
        return self.path.dim


def as_path(obj):
    return obj.path if isinstance(obj, Loop) else obj


def reverse_loop(loop):
    return Loop(reverse(loop.path), loop.basepoint, f"rev({loop.label})")


def concat_loops(second, first):
    if np.linalg.norm(np.asarray(second.basepoint) - np.asarray(first.basepoint)) > JOIN_TOL:
        raise JoinError("loops have different basepoints")
    return Loop(concat(second.path, first.path), first.basepoint,
                f"({second.label} v {first.label})")


def fourier_loop(basepoint, cos_coef, sin_coef, label="fourier"):
    """``m + sum_k a_k (cos 2 pi k t - 1) + b_k sin 2 pi k t`` re-timed to be flat-ended.

    ``cos_coef`` and ``sin_coef`` have shape ``(K, d)``.
    """
    m = np.asarray(basepoint, dtype=float)
    a = np.asarray(cos_coef, dtype=float)
    b = np.asarray(sin_coef, dtype=float)
    k = np.arange(1, len(a) + 1)

    def func(t):
        w = 2 * np.pi * np.outer(t, k)
        return m + (np.cos(w) - 1) @ a + np.sin(w) @ b

    def deriv(t):
        w = 2 * np.pi * np.outer(t, k)
        return (-np.sin(w) * 2 * np.pi * k) @ a + (np.cos(w) * 2 * np.pi * k) @ b

    raw = SmoothPath(func, len(m), deriv, False, label)
    return Loop(stationary(raw), m, label)


def random_fourier_loops(basepoint, count, seed, radius, modes=3, inside=None):
    """Seeded Fourier loops whose excursion from the basepoint is at most ``radius``.

    ``inside`` is an optional pointwise domain predicate; loops that leave it
    are redrawn.
    """
    rng = np.random.default_rng(seed)
    m = np.asarray(basepoint, dtype=float)
    d = len(m)
    k = np.arange(1, modes + 1)[:, None]
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > 100 * count + 100:
            raise PathError("could not draw loops inside the domain")
        a = rng.normal(size=(modes, d)) / k**2
        b = rng.normal(size=(modes, d)) / k**2
        loop = fourier_loop(m, a, b, label=f"fourier{len(out)}")
        pts = loop.path.samples(513)
        span = np.max(np.linalg.norm(pts - m, axis=1))
        scale = radius * rng.uniform(0.5, 1.0) / span
        loop = fourier_loop(m, a * scale, b * scale, label=f"fourier{len(out)}")
        if inside is not None and not np.all(inside(loop.path.samples(513))):
            continue
        out.append(loop)
    return out
