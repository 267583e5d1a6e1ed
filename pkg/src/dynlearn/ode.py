"""Controlled ODE classifier core: forward flow, adjoint sweep, gradients.

The system is ``dr/dt = tanh(a(t) r + b(t))`` with one drive matrix ``a_i``
and offset ``b_i`` per Euler step; these per-step samples are the learned
controls. Classification reads the final state through an affine map.

Gradients come from a backward costate sweep. Two modes are offered:

* ``"discrete"`` is the exact reverse-mode derivative of the Euler recursion
  (matches finite differences of the implemented loss to round-off), and
* ``"continuous"`` is the Euler discretization of the continuous-time adjoint
  equation ``dp/dt = -(dF/dr)^T p``; it differs from the discrete mode only
  in which end of each step the costate is sampled when forming control
  gradients, a discrepancy that vanishes linearly with the step size.

Both modes share the same backward recursion, so the costate trajectory is
computed once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dynlearn.numerics import TimeGrid
from dynlearn.readout import EndStateReadout

GRADIENT_MODES = ("continuous", "discrete")


@dataclass
class OdeControls:
    """Per-step drive samples: ``a`` is ``(n_steps, M, M)``, ``b`` is ``(n_steps, M)``."""

    a: np.ndarray
    b: np.ndarray

    def check(self, grid: TimeGrid, state_dim: int) -> None:
        n = grid.n_steps
        if self.a.shape != (n, state_dim, state_dim):
            raise ValueError(
                f"a has shape {self.a.shape}, expected {(n, state_dim, state_dim)}"
            )
        if self.b.shape != (n, state_dim):
            raise ValueError(f"b has shape {self.b.shape}, expected {(n, state_dim)}")


@dataclass
class OdeTrajectory:
    """Forward solution. ``states`` is ``(K, n_steps + 1, M)``.

    ``activations`` caches ``tanh(a_i r_i + b_i)`` per step; the backward
    sweep reuses it for the Jacobian ``sech^2 = 1 - tanh^2`` without
    re-evaluating the nonlinearity.
    """

    states: np.ndarray
    activations: np.ndarray


@dataclass
class OdeGradients:
    """Objective gradients for every control sample, same shapes as the controls."""

    a: np.ndarray
    b: np.ndarray


def initial_controls(grid: TimeGrid, state_dim: int = 2) -> OdeControls:
    """Identity drive and zero offset at every step: ``dr/dt = tanh(r)``."""
    a = np.tile(np.eye(state_dim), (grid.n_steps, 1, 1))
    b = np.zeros((grid.n_steps, state_dim))
    return OdeControls(a, b)


def forward_ode(inputs: np.ndarray, controls: OdeControls, grid: TimeGrid) -> OdeTrajectory:
    """Integrate the controlled flow from ``inputs`` (``(K, M)`` or ``(M,)``)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    k, m = inputs.shape
    controls.check(grid, m)
    n = grid.n_steps
    states = np.empty((k, n + 1, m), dtype=np.float64)
    activations = np.empty((k, n, m), dtype=np.float64)
    states[:, 0] = inputs
    for i in range(n):
        c = states[:, i] @ controls.a[i].T + controls.b[i]
        g = np.tanh(c)
        activations[:, i] = g
        states[:, i + 1] = states[:, i] + grid.dt * g
    return OdeTrajectory(states, activations)


def adjoint_end_condition(
    end_states: np.ndarray, readout: EndStateReadout, residuals: np.ndarray
) -> np.ndarray:
    """Costate at the final time: ``p(T) = omega^T residual`` per sample.

    ``residuals`` is the per-sample loss gradient with respect to the class
    scores (see :func:`dynlearn.readout.loss_residual`); the linear readout
    maps it back into state space. ``end_states`` is accepted for signature
    symmetry with nonlinear readouts but does not enter the affine case.
    """
    del end_states
    residuals = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    return residuals @ readout.omega


def backward_adjoint_ode(
    traj: OdeTrajectory, controls: OdeControls, p_end: np.ndarray, grid: TimeGrid
) -> np.ndarray:
    """Sweep the costate from ``p(T)`` back to ``p(0)``.

    Returns ``(K, n_steps + 1, M)``. The recursion
    ``p_i = p_{i+1} + dt a_i^T (sech^2(c_i) * p_{i+1})`` is simultaneously the
    exact transpose of the forward Euler step and the reverse Euler
    discretization of the adjoint equation with the Jacobian frozen at the
    left step edge, so both gradient modes share it.
    """
    k, n_plus_1, m = traj.states.shape
    n = n_plus_1 - 1
    p_end = np.atleast_2d(np.asarray(p_end, dtype=np.float64))
    costates = np.empty((k, n + 1, m), dtype=np.float64)
    costates[:, n] = p_end
    for i in range(n - 1, -1, -1):
        sech2 = 1.0 - traj.activations[:, i] ** 2
        s = sech2 * costates[:, i + 1]
        costates[:, i] = costates[:, i + 1] + grid.dt * (s @ controls.a[i])
    return costates


def control_gradient_ode(
    costates: np.ndarray,
    traj: OdeTrajectory,
    grid: TimeGrid,
    mode: str = "continuous",
) -> OdeGradients:
    """Gradients of the objective with respect to every ``a_i`` and ``b_i``.

    For step ``i`` the scaled costate is ``s = sech^2(c_i) * p``, with ``p``
    taken at the step's right edge in discrete mode (exact chain rule) or
    left edge in continuous mode (costate at the control's own time, as in
    the continuous-time update law). Then ``dJ/da_i = dt sum_k s_k r_{k,i}^T``
    and ``dJ/db_i = dt sum_k s_k``. Sums run over the batch in index order.
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"unknown gradient mode '{mode}', expected one of {GRADIENT_MODES}")
    sech2 = 1.0 - traj.activations**2  # (K, n, M)
    p = costates[:, 1:] if mode == "discrete" else costates[:, :-1]
    s = sech2 * p
    r = traj.states[:, :-1]
    grad_a = grid.dt * np.einsum("knp,knq->npq", s, r)
    grad_b = grid.dt * np.sum(s, axis=0)
    return OdeGradients(grad_a, grad_b)
