import numpy as np
import pytest

from dynlearn.delay import backward_adjoint_delay, control_gradient_delay, forward_delay
from dynlearn.errors import DivergenceError
from dynlearn.numerics import delay_grid
from dynlearn.oeo import (
    OeoDelayModel,
    OeoParams,
    backward_oeo,
    feedback_phase,
    forward_oeo,
    initial_oeo_controls,
    oeo_control_gradient_terms,
    oeo_derivative,
)
from dynlearn.readout import TimeResolvedReadout


def test_rate_constants():
    p = OeoParams()
    assert p.g_h == pytest.approx(0.000629, abs=1e-6)
    assert p.g_l == pytest.approx(1 / 15.9)
    assert p.g == p.g_h + p.g_l
    assert p.beta_scaled == pytest.approx(3.0 / 15.9)


def test_operating_point_derivative():
    # cos^2(-pi/4) = 1/2, so the drive is beta/2 scaled by 1/tau_L
    dxi, deta = oeo_derivative(0.0, 0.0, 0.0, 1.0, -np.pi / 4, OeoParams())
    assert dxi == pytest.approx(1.5 / 15.9)
    assert dxi == pytest.approx(0.09434, abs=1e-5)
    assert deta == 0.0


def test_no_feedback_relaxation():
    dxi, deta = oeo_derivative(0.0, 1.0, 0.3, 0.7, 0.1, OeoParams(beta=0.0))
    assert dxi == pytest.approx(-1 / 15.9)
    assert deta == 0.0


def test_quarter_wave_offset_kills_feedback():
    # phase pi/2 sits at a dark fringe: same derivative as beta = 0
    with_beta = oeo_derivative(0.2, -0.1, 0.0, 1.0, np.pi / 2, OeoParams(beta=3.0))
    without = oeo_derivative(0.2, -0.1, 0.0, 1.0, np.pi / 2, OeoParams(beta=0.0))
    assert with_beta == pytest.approx(without, abs=1e-16)


def test_feedback_phase_broadcasts():
    delta = feedback_phase(np.array([0.1, -0.2]), 2.0, 0.5)
    np.testing.assert_allclose(delta, [2 * (0.2 + 0.5), 2 * (-0.4 + 0.5)])


def test_control_gradient_terms_hand_value():
    p = OeoParams()
    g1, g2 = oeo_control_gradient_terms(p_xi=2.0, delta=np.pi / 2, xi_delayed=0.3, params=p)
    assert g1 == pytest.approx(-p.beta_scaled * 0.3 * 2.0)
    assert g2 == pytest.approx(-p.beta_scaled * 2.0)


def test_initial_controls_operating_point():
    u1, u2 = initial_oeo_controls(5)
    np.testing.assert_array_equal(u1, np.ones(5))
    np.testing.assert_array_equal(u2, np.full(5, -np.pi / 4))


def test_model_jacobians_match_finite_differences():
    rng = np.random.default_rng(7)
    model = OeoDelayModel(OeoParams())
    r = rng.normal(0, 1, (20, 2))
    r_tau = rng.normal(0, 1, (20, 2))
    u = rng.normal(0, 1, 2)
    eps = 1e-6

    def fd(perturb):
        cols = []
        for d in range(2):
            hi = model.f(*perturb(d, eps))
            lo = model.f(*perturb(d, -eps))
            cols.append((hi - lo) / (2 * eps))
        return np.stack(cols, axis=2)

    def wiggle_r(d, e):
        rp = r.copy()
        rp[:, d] += e
        return rp, r_tau, u

    def wiggle_rtau(d, e):
        rp = r_tau.copy()
        rp[:, d] += e
        return r, rp, u

    def wiggle_u(d, e):
        up = u.copy()
        up[d] += e
        return r, r_tau, up

    np.testing.assert_allclose(model.df_dr(r, r_tau, u), fd(wiggle_r), atol=1e-8)
    np.testing.assert_allclose(model.df_drtau(r, r_tau, u), fd(wiggle_rtau), atol=1e-8)
    np.testing.assert_allclose(model.df_du(r, r_tau, u), fd(wiggle_u), atol=1e-8)


def _random_instance(seed, m=20, spans=3, samples=3):
    rng = np.random.default_rng(seed)
    grid = delay_grid(230.0, m, spans)
    hist = rng.normal(0, 0.3, (samples, m + 1, 2))
    u1 = 1.0 + 0.1 * rng.normal(0, 1, grid.n_evolve)
    u2 = -np.pi / 4 + 0.1 * rng.normal(0, 1, grid.n_evolve)
    omega = rng.normal(0, 1, (m + 1, 2, 2))
    readout = TimeResolvedReadout(omega, np.zeros(2))
    residuals = rng.normal(0, 1, (samples, 2))
    return grid, hist, u1, u2, readout, residuals


def test_fast_forward_matches_generic_engine():
    params = OeoParams()
    grid, hist, u1, u2, _, _ = _random_instance(11)
    fast = forward_oeo(hist, u1, u2, params, grid)
    generic = forward_delay(hist, np.stack([u1, u2], axis=1), OeoDelayModel(params), grid)
    np.testing.assert_allclose(fast.states, generic.states, rtol=1e-13, atol=1e-15)
    np.testing.assert_array_equal(fast.diverged, generic.diverged)


@pytest.mark.parametrize("mode", ["discrete", "continuous"])
def test_fast_backward_matches_generic_engine(mode):
    params = OeoParams()
    grid, hist, u1, u2, readout, residuals = _random_instance(12)
    model = OeoDelayModel(params)
    controls = np.stack([u1, u2], axis=1)
    traj = forward_delay(hist, controls, model, grid)

    fast = forward_oeo(hist, u1, u2, params, grid)
    res = backward_oeo(fast, u1, u2, readout, residuals, params, grid, mode, return_costates=True)
    costates = backward_adjoint_delay(traj, controls, model, readout, residuals, grid, mode)
    grads = control_gradient_delay(costates, traj, controls, model, grid, mode)

    scale = max(np.max(np.abs(costates)), 1e-30)
    assert np.max(np.abs(res.costates - costates)) / scale <= 1e-12
    gs = max(np.max(np.abs(grads)), 1e-30)
    assert np.max(np.abs(res.grad_u1 - grads[:, 0])) / gs <= 1e-12
    assert np.max(np.abs(res.grad_u2 - grads[:, 1])) / gs <= 1e-12


def test_no_feedback_filter_relaxes():
    # beta = 0 leaves a passive two-pole filter: the response to an initial
    # xi kick dies out (fast pole ~ 1/g, slow pole ~ g_l g_h / g)
    grid = delay_grid(230.0, 460, 5)
    hist = np.zeros((1, 461, 2))
    hist[:, :, 0] = 0.5
    u1 = np.ones(grid.n_evolve)
    u2 = np.full(grid.n_evolve, -np.pi / 4)
    traj = forward_oeo(hist, u1, u2, OeoParams(beta=0.0), grid)
    xi = traj.states[0, :, 0]
    early = np.max(np.abs(xi[461 : 2 * 461]))
    late = np.max(np.abs(traj.tails()[0, :, 0]))
    assert late < 0.1 * early
    assert abs(xi[-1]) < 0.05


def test_feedback_strength_sets_attractor():
    # weak feedback settles to a fixed point; beta = 3 sustains oscillation
    grid = delay_grid(230.0, 460, 12)
    rng = np.random.default_rng(3)
    hist = np.zeros((1, 461, 2))
    hist[:, :, 0] = 0.05 * rng.normal(0, 1, 461)
    u1 = np.ones(grid.n_evolve)
    u2 = np.full(grid.n_evolve, -np.pi / 4)

    stds = {}
    for beta in (0.5, 3.0):
        traj = forward_oeo(hist, u1, u2, OeoParams(beta=beta), grid)
        tail_xi = traj.tails()[0, :, 0]
        stds[beta] = float(np.std(tail_xi))
        assert np.max(np.abs(traj.states[0, :, 0])) < 5.0
        assert not traj.diverged[0]
    assert stds[0.5] < 0.01
    assert stds[3.0] > 0.05
    assert stds[3.0] > 5 * stds[0.5]


def test_divergence_raise_parity():
    params = OeoParams()
    grid = delay_grid(230.0, 20, 2)
    hist = np.zeros((2, 21, 2))
    hist[0, :, 1] = 2e6  # eta has no restoring force at xi = 0
    u1, u2 = initial_oeo_controls(grid.n_evolve)

    with pytest.raises(DivergenceError) as fast_err:
        forward_oeo(hist, u1, u2, params, grid)
    with pytest.raises(DivergenceError) as gen_err:
        forward_delay(hist, np.stack([u1, u2], axis=1), OeoDelayModel(params), grid)
    assert fast_err.value.sample == gen_err.value.sample == 0
    assert fast_err.value.step == gen_err.value.step == 21


def test_divergence_freeze_parity():
    params = OeoParams()
    grid = delay_grid(230.0, 20, 2)
    hist = np.zeros((2, 21, 2))
    hist[0, :, 1] = 2e6
    hist[1, :, 0] = 0.2
    u1, u2 = initial_oeo_controls(grid.n_evolve)

    fast = forward_oeo(hist, u1, u2, params, grid, raise_on_divergence=False)
    generic = forward_delay(
        hist, np.stack([u1, u2], axis=1), OeoDelayModel(params), grid,
        raise_on_divergence=False,
    )
    assert fast.diverged.tolist() == [True, False]
    assert generic.diverged.tolist() == [True, False]
    np.testing.assert_allclose(fast.states, generic.states, rtol=1e-13)
    # the bad sample holds its last in-bound value
    np.testing.assert_array_equal(fast.states[0, 21:, 1], np.full(40, 2e6))
