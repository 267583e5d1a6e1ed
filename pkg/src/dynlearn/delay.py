"""Generic delay-system engine: forward integration and adjoint gradients.

Systems have the form ``dr/dt = F(r(t), r(t - tau), u(t))`` with a vector of
control samples per step. A model object supplies the derivative and its
three Jacobians; everything else (integration, the backward costate sweep
with its delayed coupling term, control and readout gradients) is generic
and lives here. The closed-form oscillator path in :mod:`dynlearn.oeo` must
agree with this engine to round-off; that redundancy is deliberate and is
checked by the test suite.

Index conventions. A delay grid carries ``m = m_tau`` history intervals, so
global sample ``g`` sits at time ``t = -tau + g dt``: samples ``0..m`` are
the prescribed history (``g = m`` is ``t = 0``) and evolution step
``g in [m, n_steps)`` consumes the delayed state ``r[g - m]`` and the control
sample ``u[g - m]``. Costates are stored on the evolution window only, local
index ``q = g - m`` covering ``t in [0, T]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from dynlearn.errors import DivergenceError
from dynlearn.numerics import TimeGrid, trapezoid_weights
from dynlearn.ode import GRADIENT_MODES
from dynlearn.readout import TimeResolvedReadout

DEFAULT_DIVERGENCE_BOUND = 1e6


class DelayModel(Protocol):
    """Derivative and Jacobians of a delay system, batched over samples.

    ``r`` and ``r_tau`` carry shape ``(K, state_dim)``; ``u`` is the control
    sample ``(control_dim,)`` shared by the whole batch at one step.
    """

    state_dim: int
    control_dim: int

    def f(self, r: np.ndarray, r_tau: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Derivative, shape ``(K, state_dim)``."""
        ...

    def df_dr(self, r: np.ndarray, r_tau: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Jacobian in the instantaneous state, ``(K, state_dim, state_dim)``."""
        ...

    def df_drtau(self, r: np.ndarray, r_tau: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Jacobian in the delayed state, ``(K, state_dim, state_dim)``."""
        ...

    def df_du(self, r: np.ndarray, r_tau: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Jacobian in the control sample, ``(K, state_dim, control_dim)``."""
        ...


@dataclass
class DelayTrajectory:
    """Forward solution on the full grid including the history segment.

    ``states`` is ``(K, n_steps + 1, state_dim)``. Samples whose trajectory
    left the divergence bound are flagged in ``diverged`` and hold their last
    in-bound state from the offending step onward.
    """

    states: np.ndarray
    diverged: np.ndarray
    m_tau: int

    def tails(self) -> np.ndarray:
        """States over the last delay interval, ``(K, m_tau + 1, state_dim)``."""
        return self.states[:, -(self.m_tau + 1) :, :]

    def end_window_start(self) -> int:
        return self.states.shape[1] - (self.m_tau + 1)


def _check_delay_shapes(
    histories: np.ndarray, controls: np.ndarray, model: DelayModel, grid: TimeGrid
) -> None:
    if grid.m_tau is None:
        raise ValueError("delay integration needs a grid with m_tau set")
    m = grid.m_tau
    if histories.ndim != 3 or histories.shape[1] != m + 1 or histories.shape[2] != model.state_dim:
        raise ValueError(
            f"histories shape {histories.shape} incompatible with m_tau={m}, "
            f"state_dim={model.state_dim}; expected (K, {m + 1}, {model.state_dim})"
        )
    if controls.shape != (grid.n_evolve, model.control_dim):
        raise ValueError(
            f"controls shape {controls.shape}, expected {(grid.n_evolve, model.control_dim)}"
        )


def forward_delay(
    histories: np.ndarray,
    controls: np.ndarray,
    model: DelayModel,
    grid: TimeGrid,
    divergence_bound: float = DEFAULT_DIVERGENCE_BOUND,
    raise_on_divergence: bool = True,
) -> DelayTrajectory:
    """Integrate the delay system forward from prescribed history segments.

    ``histories`` is ``(K, m_tau + 1, state_dim)`` covering ``[-tau, 0]``;
    ``controls`` is ``(n_evolve, control_dim)`` sampled on ``[0, T)``. A state
    whose magnitude exceeds ``divergence_bound`` (or turns non-finite) either
    raises :class:`DivergenceError` or, with ``raise_on_divergence=False``,
    freezes that sample and flags it so callers can drop it from statistics.
    """
    histories = np.asarray(histories, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    _check_delay_shapes(histories, controls, model, grid)
    m = grid.m_tau
    k = histories.shape[0]
    n_total = grid.n_steps
    states = np.empty((k, n_total + 1, model.state_dim), dtype=np.float64)
    states[:, : m + 1] = histories
    diverged = np.zeros(k, dtype=bool)
    for g in range(m, n_total):
        c = g - m
        deriv = model.f(states[:, g], states[:, g - m], controls[c])
        new = states[:, g] + grid.dt * deriv
        bad = ~np.all(np.isfinite(new), axis=1) | (
            np.max(np.abs(new), axis=1) > divergence_bound
        )
        newly = bad & ~diverged
        if np.any(newly):
            if raise_on_divergence:
                sample = int(np.argmax(newly))
                t = grid.t_start + (g + 1) * grid.dt
                raise DivergenceError(
                    f"sample {sample} exceeded divergence bound {divergence_bound:g} "
                    f"at step {g + 1} (t = {t:g})",
                    sample=sample,
                    step=g + 1,
                )
            diverged |= newly
        ok = ~diverged
        states[:, g + 1] = np.where(ok[:, None], new, states[:, g])
    return DelayTrajectory(states, diverged, m)


def _tail_sources(
    readout: TimeResolvedReadout, residuals: np.ndarray, dt: float
) -> np.ndarray:
    """Per-sample adjoint source at each tail sample: ``w_j omega_j^T residual``.

    Shape ``(K, m_tau + 1, state_dim)``. These are the derivative of the
    quadrature readout with respect to the tail states, so using the same
    trapezoid weights as the readout keeps the discrete mode exact.
    """
    n_tail = readout.omega_t.shape[0]
    w = trapezoid_weights(n_tail, dt)
    return np.einsum("kl,jlc->kjc", residuals, readout.omega_t) * w[None, :, None]


def backward_adjoint_delay(
    traj: DelayTrajectory,
    controls: np.ndarray,
    model: DelayModel,
    readout: TimeResolvedReadout,
    residuals: np.ndarray,
    grid: TimeGrid,
    mode: str = "continuous",
) -> np.ndarray:
    """Sweep the delay costate backward over the evolution window.

    Returns ``(K, n_evolve + 1, state_dim)`` covering ``t in [0, T]``. Within
    the final delay interval the sweep injects the readout source; below it
    the delayed coupling term feeds the costate from ``tau`` ahead through
    the Jacobian in the delayed argument, evaluated at the future step that
    consumed the current state. Discrete mode seeds the end costate with the
    endpoint quadrature weight and reads future costates one step later than
    continuous mode, making it the exact transpose of the forward recursion.
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"unknown gradient mode '{mode}', expected one of {GRADIENT_MODES}")
    controls = np.asarray(controls, dtype=np.float64)
    residuals = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    _check_delay_shapes(traj.states[:, : grid.m_tau + 1], controls, model, grid)
    m = grid.m_tau
    n_ev = grid.n_evolve
    k = traj.states.shape[0]
    discrete = mode == "discrete"

    sources = _tail_sources(readout, residuals, grid.dt)  # (K, m+1, Mr)
    costates = np.zeros((k, n_ev + 1, model.state_dim), dtype=np.float64)
    if discrete:
        costates[:, n_ev] = sources[:, m]
    tail_start = n_ev - m
    for q in range(n_ev - 1, -1, -1):
        g = m + q
        a = model.df_dr(traj.states[:, g], traj.states[:, g - m], controls[q])
        p_next = costates[:, q + 1]
        new = p_next + grid.dt * np.einsum("kpq,kp->kq", a, p_next)
        if q >= tail_start:
            new = new + sources[:, q - tail_start]
        if q <= n_ev - m - 1:
            h = g + m
            a_tau = model.df_drtau(traj.states[:, h], traj.states[:, g], controls[q + m])
            p_future = costates[:, q + m + 1] if discrete else costates[:, q + m]
            new = new + grid.dt * np.einsum("kpq,kp->kq", a_tau, p_future)
        costates[:, q] = new
    return costates


def control_gradient_delay(
    costates: np.ndarray,
    traj: DelayTrajectory,
    controls: np.ndarray,
    model: DelayModel,
    grid: TimeGrid,
    mode: str = "continuous",
) -> np.ndarray:
    """Objective gradient for every control sample, shape ``(n_evolve, control_dim)``.

    ``dJ/du_c = dt sum_k B_c^T p_k`` with ``B_c`` the control Jacobian at
    step ``c`` and the costate taken at the step's right edge in discrete
    mode, left edge in continuous mode. Batch sums run in index order.
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"unknown gradient mode '{mode}', expected one of {GRADIENT_MODES}")
    controls = np.asarray(controls, dtype=np.float64)
    m = grid.m_tau
    n_ev = grid.n_evolve
    grads = np.empty((n_ev, model.control_dim), dtype=np.float64)
    for c in range(n_ev):
        b = model.df_du(traj.states[:, m + c], traj.states[:, c], controls[c])
        p = costates[:, c + 1] if mode == "discrete" else costates[:, c]
        grads[c] = grid.dt * np.einsum("kpu,kp->u", b, p)
    return grads


def readout_gradient_delay(
    tails: np.ndarray, residuals: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients for the time-resolved readout weights and bias.

    ``tails`` is ``(K, n_tail, state_dim)``; returns ``omega_t`` gradient
    ``(n_tail, n_classes, state_dim)`` and bias gradient ``(n_classes,)``.
    Exact in both adjoint modes since the readout acts on stored states.
    """
    residuals = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    w = trapezoid_weights(tails.shape[1], dt)
    grad_omega = np.einsum("kl,kjc->jlc", residuals, tails) * w[:, None, None]
    grad_bias = np.sum(residuals, axis=0)
    return grad_omega, grad_bias
