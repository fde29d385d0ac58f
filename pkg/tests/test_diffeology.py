import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holab.diffeology import (
    ConsistencyError,
    Generated,
    Plot,
    PlotForm,
    PreconditionError,
    ProbeInputError,
    ShapeError,
    alternation_residual,
    constant_plot,
    form_compatibility_residual,
    froelicher_generate,
    is_plot,
    line_contour,
    load_diffeology,
    product_diffeology,
    projective_limit_diffeology,
    pushforward,
    smoothness_probe,
    standard,
    trace_diffeology,
)

from diffeology_family import family

FAMILY = family()
IDS = [f[0] for f in FAMILY]


def make(entry):
    name, dom, ev, _, d = entry
    return Plot.make(dom, ev, d, name)


def test_family_size():
    assert len(FAMILY) >= 50


@pytest.mark.parametrize("entry", FAMILY, ids=IDS)
def test_standard_membership_matches_ground_truth(entry):
    m = is_plot(make(entry), standard(entry[4]))
    assert bool(m) == entry[3], m.failing_probe


@pytest.mark.parametrize("entry", FAMILY, ids=IDS)
def test_membership_monotone_in_generators(entry):
    d = entry[4]
    small = standard(d)
    extra = Plot.make([(-2.0, 2.0)], lambda u: np.hstack([np.sin(u)] * d), d, "extra")
    big = small.with_generators([extra])
    if is_plot(make(entry), small):
        assert is_plot(make(entry), big)


@pytest.mark.parametrize("a", FAMILY[::3], ids=IDS[::3])
@pytest.mark.parametrize("b", FAMILY[1::5], ids=IDS[1::5])
def test_product_is_conjunction(a, b):
    pa, pb = make(a), make(b)
    both = Plot(pa.lower, pa.upper, lambda u: np.hstack([pa(u), pb(u)]), pa.codim + pb.codim, "pair")
    prod = product_diffeology(standard(pa.codim), standard(pb.codim))
    assert bool(is_plot(both, prod)) == (a[3] and b[3])


def test_abs_rejected_polynomials_accepted():
    R = standard(1)
    assert not is_plot(Plot.make([(-1, 1)], lambda u: np.abs(u), 1, "abs"), R)
    for k in range(1, 8):
        assert is_plot(Plot.make([(-1, 1)], lambda u, k=k: u**k - 0.5 * u, 1, f"t^{k}"), R)


def test_probe_detects_order_of_failure():
    t = (np.arange(257) + 0.5) / 257 * 2 - 1
    r = smoothness_probe(np.abs(t), 3, spacing=2 / 257, detail=True)
    assert not r.passed and r.failing_order == 1
    r = smoothness_probe(t * np.abs(t), 3, spacing=2 / 257, detail=True)
    assert not r.passed and r.failing_order == 2
    assert smoothness_probe(np.sin(t), 3, spacing=2 / 257)
    assert not smoothness_probe(np.array([1.0, np.nan] * 20), 2)
    with pytest.raises(ProbeInputError):
        smoothness_probe(np.ones(4), 3)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=1, max_size=6))
def test_random_polynomials_are_plots(coeffs):
    c = np.array(coeffs)
    p = Plot.make([(-1, 1)], lambda u: np.polynomial.polynomial.polyval(u, c), 1, "poly")
    assert is_plot(p, standard(1))


def test_constants_always_plots():
    circle = load_diffeology({"space_dim": 2, "generators": [
        {"map": "circle", "domain": [[-4, 4]]}]})
    assert is_plot(constant_plot([0.3, 0.1]), circle).route == "constant"
    assert is_plot(constant_plot([0.3, 0.1], p=2), circle)


def test_witness_route_and_bad_witness():
    gen = Plot.make([(-4, 4)], lambda u: np.hstack([np.cos(u), np.sin(u)]), 2, "circle")
    D = Generated([gen], 2)
    tm = Plot.make([(-1, 1)], lambda u: 2 * u + 0.3 * u**3, 1, "tm")
    cand = gen.compose(tm)
    assert is_plot(cand, D).route == "witness"
    rough = Plot.make([(-1, 1)], lambda u: 2 * np.abs(u), 1, "rough")
    assert not is_plot(gen.compose(rough), D)
    # no witness and no inverse: incomplete on reject
    bare = Plot.make([(-1, 1)], lambda u: np.hstack([np.cos(u), np.sin(u)]), 2, "bare")
    assert not is_plot(bare, D)


def test_gluing_cover():
    R = standard(1)
    f = lambda u: np.sin(u)
    pieces = [Plot.make([(-1, 0.2)], f, 1, "left"), Plot.make([(-0.2, 1)], f, 1, "right")]
    whole = Plot(np.array([-1.0]), np.array([1.0]), f, 1, "whole", cover=pieces)
    assert is_plot(whole, R)
    hole = Plot(np.array([-1.0]), np.array([1.0]), f, 1, "holey", cover=pieces[:1])
    # still accepted through the generator inverse; gluing is a fallback only
    assert is_plot(hole, R)


@pytest.mark.parametrize("entry", [f for f in FAMILY if f[4] == 1][:12], ids=IDS[:12])
def test_pushforward_composition(entry):
    f = lambda x: np.hstack([x, x**2])
    g = lambda y: np.hstack([y[:, :1] + y[:, 1:], np.sin(y[:, 1:])])
    nested = pushforward(pushforward(standard(1), f, 2), g, 2)
    direct = pushforward(standard(1), lambda x: g(f(x)), 2)
    q = make(entry)
    cand = Plot(q.lower, q.upper, lambda u: g(f(q(u))), 2, "gfq", witness=q)
    assert bool(is_plot(cand, nested)) == bool(is_plot(cand, direct)) == entry[3]


def test_pushforward_section():
    f = lambda x: np.hstack([np.cos(x), np.sin(x)])
    sec = lambda y: np.arctan2(y[:, 1:], y[:, :1])
    D = pushforward(standard(1), f, 2, section=sec)
    arc = Plot.make([(-1, 1)], lambda u: np.hstack([np.cos(u), np.sin(u)]), 2, "arc")
    assert is_plot(arc, D)


def _so2_curve(scale):
    return Plot.make([(-1, 1)], lambda u: scale(u) * np.hstack(
        [np.cos(u), -np.sin(u), np.sin(u), np.cos(u)]), 4, "rot")


def test_projective_limit_so2_in_gl2():
    det = lambda m: m[:, 0] * m[:, 3] - m[:, 1] * m[:, 2]
    gl = trace_diffeology(standard(4), lambda m: np.abs(det(m)) > 1e-9)
    so = trace_diffeology(gl, lambda m: (np.abs(det(m) - 1) < 1e-9)
                          & (np.abs(m[:, 0] - m[:, 3]) < 1e-9) & (np.abs(m[:, 1] + m[:, 2]) < 1e-9))
    ident = lambda m: m
    lim = projective_limit_diffeology([gl, so], [ident, ident], [ident], 4)
    assert is_plot(_so2_curve(lambda u: 1.0), lim)
    assert not is_plot(_so2_curve(lambda u: 1 + 0.2 * u), lim)
    assert is_plot(_so2_curve(lambda u: 1 + 0.2 * u), gl)
    with pytest.raises(ConsistencyError):
        projective_limit_diffeology([gl, so], [ident, lambda m: 2 * m], [ident], 4)


def test_froelicher_generators_are_functions():
    fns = [lambda x: x[:, 0] ** 2 + x[:, 1], lambda x: np.sin(x[:, 0] * x[:, 1])]
    fs = froelicher_generate(fns, 2, lines=8)
    assert len(fs.witnesses) == 8
    for f in fns:
        assert fs.function_test(f)
    assert not fs.function_test(lambda x: np.abs(x[:, 0] - 0.01))
    kink = Plot.make([(-1, 1)], lambda u: np.hstack([np.abs(u), u]), 2, "kink")
    assert not fs.contour_test(kink)
    assert fs.contour_test(line_contour([0.1, 0.2], [1.0, -0.5]))
    # plots of the standard structure are contours
    for entry in FAMILY:
        if entry[4] == 2 and entry[3]:
            assert fs.contour_test(make(entry))


def test_form_compatibility_and_alternation(rng):
    omega = PlotForm.from_chart_form(
        lambda x, V: x[:, 0] * (V[:, 0, 0] * V[:, 1, 1] - V[:, 0, 1] * V[:, 1, 0]), 2)
    p2 = Plot.make([(-2, 2), (-2, 2)], lambda u: np.stack([u[:, 0] + u[:, 1] ** 2, u[:, 1]], -1), 2, "p2")
    g = Plot.make([(-1, 1), (-1, 1)], lambda u: np.stack([np.sin(u[:, 0]), u[:, 0] * u[:, 1]], -1), 2, "g")
    p = p2.compose(g)
    pts = rng.uniform(-0.8, 0.8, size=(20, 2))
    assert form_compatibility_residual(omega, p, p2, g, pts) < 1e-8
    assert alternation_residual(omega, p, pts) < 1e-12
    bad = Plot.make([(-1, 1), (-1, 1)], lambda u: u, 2, "bad")
    with pytest.raises(PreconditionError):
        form_compatibility_residual(omega, bad, p2, g, pts)


def test_load_diffeology_and_shape_errors():
    D = load_diffeology(json.dumps({"space_dim": 2, "generators": [
        {"map": "polar", "domain": [[0.1, 2], [-3, 3]]}]}))
    arc = Plot.make([(-1, 1)], lambda u: np.hstack([np.cos(u), np.sin(u)]), 2, "arc")
    assert is_plot(arc, D)
    with pytest.raises(ShapeError):
        is_plot(Plot.make([(-1, 1)], lambda u: u, 1), D)
    with pytest.raises(ShapeError):
        Plot.make([(1, 0)], lambda u: u, 1)
