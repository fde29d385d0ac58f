import numpy as np
import pytest

from holab.holonomy import (
    AxiomCase,
    axiom_suite,
    flatness_check,
    group_law_residuals,
    holonomy_element,
    loops_equivalent,
    parallel_map,
)
from holab.liealg import rotation_angle_2d
from holab.paths import Loop, reparametrize, flat_step, flat_step_derivative

from conftest import scenario


@pytest.mark.parametrize("phi0", [np.pi / 6, np.pi / 4, np.pi / 3, np.pi / 2, 2.0])
def test_sphere_latitude_angle(phi0):
    sc = scenario("sphere-lc")
    h = holonomy_element(sc.conn, sc.loop("latitude", phi0=phi0)).element
    expected = 2 * np.pi * (1 - np.cos(phi0))
    diff = (rotation_angle_2d(h) - expected + np.pi) % (2 * np.pi) - np.pi
    assert abs(diff) < 1e-9


def test_magnetic_square_angle_is_minus_area():
    sc = scenario("magnetic-u1")
    h = holonomy_element(sc.conn, sc.loop("unit-square")).element
    assert rotation_angle_2d(h) == pytest.approx(-1.0, abs=1e-12)


def test_flat_plane_holonomy_trivial():
    sc = scenario("flat-plane")
    for lp in sc.random_loops(5, 0):
        assert holonomy_element(sc.conn, lp).distance_to_identity() < 1e-14


def test_basepoint_change_conjugates(rng):
    sc = scenario("so3-generic")
    lp = sc.random_loops(1, 7)[0]
    g = sc.random_starts(2, rng)[1]
    h0 = holonomy_element(sc.conn, lp).element
    hg = holonomy_element(sc.conn, lp, start=g).element
    assert np.max(np.abs(hg - np.linalg.solve(g, h0 @ g))) < 1e-12


def test_loops_equivalent_detects_reparametrization():
    sc = scenario("so3-generic")
    lp = sc.random_loops(1, 3)[0]
    other = Loop(reparametrize(lp.path, flat_step, flat_step_derivative), lp.basepoint, "re")
    ok, det = loops_equivalent(sc.conn, lp, other)
    assert ok and det["agree"]
    different = sc.random_loops(2, 3)[1]
    ok, det = loops_equivalent(sc.conn, lp, different)
    assert not ok and det["agree"]


def test_axiom_suite_small(rng):
    sc = scenario("so3-generic")
    loops = sc.random_loops(2, 11)
    cases = [AxiomCase(lp.path, sc.random_open_path(lp.path.end, rng), sc.random_starts(3, rng))
             for lp in loops]
    rep = axiom_suite(sc.conn, cases, tol=1e-6, steps=400)
    assert rep.passed, rep.residuals
    assert set(rep.residuals) == {"i_projection", "ii_concatenation", "iii_reparametrization",
                                  "iv_backtrack", "v_initial", "vi_start_independence"}


def test_group_laws():
    sc = scenario("so3-generic")
    a, b, c = sc.random_loops(3, 5)
    res = group_law_residuals(sc.conn, a, b, c, steps=500)
    assert max(res.values()) < 1e-5
    assert res["inverse"] < 1e-12


def test_flat_torus_winding_classes():
    sc = scenario("flat-torus")
    fams = [sc.homotopy("deform", samples=4, n1=n1, n2=n2) for n1, n2 in [(1, 0), (0, 1)]]
    rep = flatness_check(sc.conn, fams, tol=1e-7, steps=500)
    assert rep.verdict == "flat"
    assert rep.max_variation < 1e-9
    a, b = sc.params["alpha"], sc.params["beta"]
    angle = rotation_angle_2d(rep.holonomies[0][0])
    assert angle == pytest.approx(((-2 * np.pi * a + np.pi) % (2 * np.pi)) - np.pi, abs=1e-9)
    angle = rotation_angle_2d(rep.holonomies[1][0])
    assert angle == pytest.approx(-2 * np.pi * b, abs=1e-9)


def test_flatness_check_detects_curvature():
    sc = scenario("magnetic-u1")
    fam = [sc.loop("circle", r=r) for r in (0.3, 0.5, 0.7)]
    assert flatness_check(sc.conn, [fam]).verdict == "not flat"


def test_parallel_map_threads(monkeypatch):
    monkeypatch.setenv("HOLAB_THREADS", "3")
    assert parallel_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]
