import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from holab.paths import (
    JoinError,
    Loop,
    PathError,
    concat,
    flat_step,
    flat_step_derivative,
    fourier_loop,
    line_path,
    polygon_path,
    random_fourier_loops,
    reverse,
    stationary,
)

times = st.floats(0.0, 1.0, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(times)
def test_flat_step_monotone_with_flat_ends(t):
    assert 0.0 <= flat_step(np.array([t]))[0] <= 1.0
    assert flat_step_derivative(np.array([t]))[0] >= 0.0


def test_flat_step_derivative_matches_difference():
    t = np.linspace(0.05, 0.95, 50)
    h = 1e-5
    fd = (flat_step(t + h) - flat_step(t - h)) / (2 * h)
    assert np.max(np.abs(fd - flat_step_derivative(t))) < 1e-7
    ends = flat_step_derivative(np.array([0.0, 1e-3, 1 - 1e-3, 1.0]))
    assert np.max(np.abs(ends)) < 1e-100


def test_concat_and_reverse():
    a = line_path([0, 0], [1, 0])
    b = line_path([1, 0], [1, 2])
    c = concat(b, a)
    assert np.allclose(c.start, [0, 0]) and np.allclose(c.end, [1, 2])
    assert np.allclose(c(0.5)[0], [1, 0])
    assert np.allclose(reverse(c).start, [1, 2])
    with pytest.raises(JoinError):
        concat(a, a)


def test_concat_velocity_is_analytic():
    a = stationary(line_path([0, 0], [1, 0]))
    b = stationary(line_path([1, 0], [1, 2]))
    c = concat(b, a)
    t = np.linspace(0.01, 0.99, 37)
    h = 1e-6
    fd = (c(t + h) - c(t - h)) / (2 * h)
    assert np.max(np.abs(fd - c.velocity(t))) < 1e-5


def test_polygon_closes_and_hits_vertices():
    sq = [[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]
    p = polygon_path(sq)
    assert p.stationary_ends
    assert np.allclose(p(np.arange(5) / 4), sq)
    Loop.from_path(p)


def test_fourier_loop_is_closed_and_flat():
    lp = fourier_loop([0.2, -0.1], [[0.3, 0.1]], [[-0.2, 0.4]])
    assert lp.path.closure_gap() < 1e-14
    assert lp.path.endpoint_speed() < 1e-12
    with pytest.raises(PathError):
        Loop.from_path(line_path([0, 0], [1, 1]))


def test_random_loops_respect_radius_and_seed():
    a = random_fourier_loops([0, 0], 5, seed=3, radius=0.4)
    b = random_fourier_loops([0, 0], 5, seed=3, radius=0.4)
    for x, y in zip(a, b):
        pts = x.path.samples(257)
        assert np.max(np.linalg.norm(pts, axis=1)) <= 0.4 + 1e-12
        assert np.array_equal(pts, y.path.samples(257))
