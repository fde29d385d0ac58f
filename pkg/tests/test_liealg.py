import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import solve_ivp

from holab.liealg import (
    AlgebraBasis,
    LieAlgebraError,
    NumericError,
    ShapeError,
    ad_stability_check,
    adjoint,
    bracket,
    bracket_closure,
    exp_matrix,
    exp_probes,
    log_matrix,
    product_integral,
    relation_residual,
    rotation_angle_2d,
    so_basis,
)

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


def rodrigues(w):
    th = np.linalg.norm(w)
    K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
    if th == 0:
        return np.eye(3)
    return np.eye(3) + np.sin(th) / th * K + (1 - np.cos(th)) / th**2 * K @ K


def taylor_exp(X, terms=2048):
    out, term = np.eye(len(X)), np.eye(len(X))
    for k in range(1, terms):
        term = term @ X / k
        out = out + term
    return out


def test_exp_matches_rodrigues_on_so3(rng):
    for _ in range(20):
        w = rng.normal(size=3) * rng.uniform(0.01, 6)
        X = np.tensordot(w, so_basis(3), axes=1)
        assert np.max(np.abs(exp_matrix(X) - rodrigues(w))) < 1e-13


def test_exp_matches_long_taylor_at_norm_ten(rng):
    X = rng.normal(size=(4, 4))
    X *= 10 / np.linalg.norm(X, 2)
    ref = taylor_exp(X / 8)
    ref = np.linalg.matrix_power(ref, 8)
    assert np.max(np.abs(exp_matrix(X) - ref)) / np.max(np.abs(ref)) < 1e-12


def test_exp_stack_and_zero():
    X = np.zeros((5, 2, 2))
    assert np.allclose(exp_matrix(X), np.eye(2))
    with pytest.raises(NumericError):
        exp_matrix(np.full((2, 2), np.nan))


@settings(max_examples=60, deadline=None)
@given(mat3, mat3, mat3)
def test_bracket_jacobi_and_antisymmetry(X, Y, Z):
    jac = bracket(X, bracket(Y, Z)) + bracket(Y, bracket(Z, X)) + bracket(Z, bracket(X, Y))
    scale = 1 + np.max(np.abs(X)) * np.max(np.abs(Y)) * np.max(np.abs(Z))
    assert np.max(np.abs(jac)) <= 1e-12 * scale
    assert np.allclose(bracket(X, Y), -bracket(Y, X))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (3,), elements=finite), mat3)
def test_adjoint_is_conjugation_and_preserves_so3(w, Y):
    g = rodrigues(w)
    X = Y - Y.T
    assert np.allclose(adjoint(g, X), g @ X @ g.T, atol=1e-12)
    assert relation_residual(adjoint(g, X), "so3") < 1e-12


def test_product_integral_constant_generator():
    X = so_basis(3)[0] * 1.3
    g = product_integral(lambda t: np.broadcast_to(X, np.shape(t) + X.shape), 10)
    assert np.max(np.abs(g[-1] - exp_matrix(X))) < 1e-13


def _generator(t):
    t = np.atleast_1d(t)
    L = so_basis(3)
    return (np.sin(3 * t)[:, None, None] * L[0] + (t**2)[:, None, None] * L[1]
            + np.cos(t)[:, None, None] * L[2])


def test_product_integral_against_adaptive_ode():
    sol = solve_ivp(lambda t, y: (_generator(t)[0] @ y.reshape(3, 3)).ravel(), (0, 1),
                    np.eye(3).ravel(), rtol=1e-12, atol=1e-13)
    ref = sol.y[:, -1].reshape(3, 3)
    g = product_integral(_generator, 1000)[-1]
    assert np.max(np.abs(g - ref)) < 1e-10
    assert relation_residual(g, "SO3") < 1e-12


def test_product_integral_fourth_order():
    ref = product_integral(_generator, 4000)[-1]
    errs = [np.max(np.abs(product_integral(_generator, n)[-1] - ref)) for n in (25, 50, 100)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 3.5) & (orders < 4.5))


def test_product_integral_from_samples():
    t = np.linspace(0, 1, 2001)
    g_s = product_integral(_generator(t), 1000)[-1]
    g_c = product_integral(_generator, 1000)[-1]
    assert np.max(np.abs(g_s - g_c)) < 1e-8
    with pytest.raises(LieAlgebraError):
        product_integral(_generator(t[:10]), 1000)


def test_closure_of_two_so3_generators_is_so3():
    L = so_basis(3)
    span = bracket_closure([L[0], L[1]])
    assert span.rank == 3
    assert span.closure_residual() < 1e-12
    assert span.orthonormality_residual() < 1e-12


def test_closure_idempotent_and_order_independent(rng):
    L = so_basis(4)
    gens = [L[0] + 0.3 * L[2], L[5]]
    a = bracket_closure(gens)
    b = bracket_closure(gens[::-1])
    c = bracket_closure(list(a.basis))
    assert a.rank == b.rank == c.rank
    for X in a.basis:
        assert b.distance(X) < 1e-10 and c.distance(X) < 1e-10


def test_closure_commuting_and_zero():
    L = so_basis(4)
    # so(4) rotations in the disjoint planes (0,1) and (2,3) commute
    commuting = [L[0], L[5]]
    assert np.allclose(bracket(*commuting), 0)
    assert bracket_closure(commuting).rank == 2
    assert bracket_closure([np.zeros((3, 3))]).rank == 0


def test_ad_stability():
    L = so_basis(3)
    full = bracket_closure([L[0], L[1]])
    assert ad_stability_check(full, exp_probes(full)).max_residual < 1e-12
    line = bracket_closure([L[0]])
    probe = [exp_matrix(0.7 * L[1])]
    assert ad_stability_check(line, probe).max_residual > 0.1


def test_log_matrix_roundtrip_and_ambiguity():
    L = so_basis(3)
    X = 1.2 * L[0] - 0.4 * L[2]
    lg, ok = log_matrix(exp_matrix(X))
    assert ok and np.allclose(lg, X, atol=1e-10)
    _, ok = log_matrix(exp_matrix(np.pi * L[1]))
    assert not ok


def test_rotation_angle():
    assert rotation_angle_2d(exp_matrix(0.9 * so_basis(2)[0])) == pytest.approx(0.9, abs=1e-14)


def test_algebra_basis_json_roundtrip(tmp_path):
    b = AlgebraBasis.standard("so(3)")
    assert b.dim == 3 and b.structure_residual() < 1e-13
    p = tmp_path / "b.json"
    p.write_text(json.dumps(b.to_json()))
    b2 = AlgebraBasis.from_json(p)
    assert np.array_equal(b2.elements, b.elements)
    assert np.allclose(b2.structure_constants, b.structure_constants)
    with pytest.raises(ShapeError):
        AlgebraBasis.from_json({"name": "x", "matrix_size": 2, "basis": [[1, 0, 0]]})
    with pytest.raises(LieAlgebraError):
        AlgebraBasis("dup", np.stack([so_basis(2)[0], 2 * so_basis(2)[0]]))
