import numpy as np
import pytest

from dynlearn.numerics import (
    SeededRng,
    TimeGrid,
    delay_grid,
    euler_step,
    make_time_grid,
    trapezoid_integrate,
    trapezoid_weights,
)


def test_grid_end_time_exact():
    grid = make_time_grid(0.0, 0.01, 200)
    assert grid.t_end == 2.0
    assert grid.times().shape == (201,)
    assert grid.times()[0] == 0.0
    assert grid.times()[-1] == pytest.approx(2.0, abs=0)


def test_grid_rejects_bad_steps():
    with pytest.raises(ValueError):
        make_time_grid(0.0, -0.1, 10)
    with pytest.raises(ValueError):
        make_time_grid(0.0, 0.1, 0)


def test_delay_grid_layout():
    grid = delay_grid(230.0, 10, 5)
    assert grid.dt == 23.0
    assert grid.m_tau == 10
    assert grid.n_steps == 60
    assert grid.t_start == -230.0
    assert grid.tau == pytest.approx(230.0)
    assert grid.n_evolve == 50
    # history occupies [-tau, 0], evolution [0, 5 tau]
    times = grid.times()
    assert times[10] == pytest.approx(0.0)
    assert times[-1] == pytest.approx(5 * 230.0)


def test_m_tau_must_divide_steps():
    with pytest.raises(ValueError) as err:
        make_time_grid(0.0, 0.1, 10, m_tau=3)
    assert "m_tau" in str(err.value)
    assert "10" in str(err.value)


def test_tau_requires_delay_grid():
    grid = make_time_grid(0.0, 0.1, 10)
    with pytest.raises(ValueError):
        _ = grid.tau


def test_euler_step():
    state = np.array([1.0, 2.0])
    deriv = np.array([10.0, -10.0])
    out = euler_step(state, deriv, 0.1)
    np.testing.assert_allclose(out, [2.0, 1.0])
    # negative dt is legitimate (backward integration)
    back = euler_step(out, deriv, -0.1)
    np.testing.assert_allclose(back, state)


def test_euler_step_shape_mismatch():
    with pytest.raises(ValueError):
        euler_step(np.zeros(2), np.zeros(3), 0.1)


def test_trapezoid_weights_pattern():
    w = trapezoid_weights(5, 0.5)
    np.testing.assert_allclose(w, [0.25, 0.5, 0.5, 0.5, 0.25])
    with pytest.raises(ValueError):
        trapezoid_weights(1, 0.5)


def test_trapezoid_quadratic_example():
    # integral of t^2 on [0, 1] from 11 samples: trapezoid gives 0.335
    t = np.linspace(0.0, 1.0, 11)
    value = trapezoid_integrate(t**2, 0.1)
    assert value == pytest.approx(0.335, abs=1e-15)


def test_trapezoid_matches_numpy_on_random_series():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 40))
        y = rng.normal(size=n)
        dt = float(rng.uniform(0.01, 2.0))
        assert trapezoid_integrate(y, dt) == pytest.approx(np.trapezoid(y, dx=dt), rel=1e-13)


def test_trapezoid_axis():
    y = np.outer([1.0, 2.0], np.ones(11))
    out = trapezoid_integrate(y, 0.1, axis=1)
    np.testing.assert_allclose(out, [1.0, 2.0])


def test_seeded_rng_reproducible():
    a = SeededRng(42).normal(size=5)
    b = SeededRng(42).normal(size=5)
    np.testing.assert_array_equal(a, b)


def test_seeded_rng_children_are_independent_streams():
    root = SeededRng(7)
    c0 = root.child(0).normal(size=4)
    c1 = root.child(1).normal(size=4)
    again = SeededRng(7).child(0).normal(size=4)
    assert not np.array_equal(c0, c1)
    np.testing.assert_array_equal(c0, again)


def test_seeded_rng_child_unaffected_by_parent_draws():
    root = SeededRng(3)
    root.normal(size=100)  # consuming the parent stream
    late_child = root.child(5).uniform(size=3)
    fresh_child = SeededRng(3).child(5).uniform(size=3)
    np.testing.assert_array_equal(late_child, fresh_child)


def test_grid_is_frozen():
    grid = make_time_grid(0.0, 0.1, 10)
    with pytest.raises(Exception):
        grid.dt = 0.2
