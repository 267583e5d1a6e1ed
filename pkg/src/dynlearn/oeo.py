"""Optoelectronic oscillator: closed-form delay model and fast kernels.

The system is a single nonlinear node with delayed feedback through a
bandpass filter, written in the two-variable form

    tau_L dxi/dt  = -(1 + tau_L/tau_H) xi - eta + beta cos^2(u1 xi(t-tau) + u2)
    tau_H deta/dt = xi

where ``xi`` is the filtered optical intensity, ``eta`` the slow feedback
variable, and the learned controls are the per-step feedback gain ``u1(t)``
and offset phase ``u2(t)``. Dividing through by the filter constants gives
the rate form used everywhere here:

    dxi/dt  = -g xi - g_L eta + beta_scaled cos^2(u1 xi_tau + u2)
    deta/dt = g_H xi

with ``g = 1/tau_H + 1/tau_L``, ``g_L = 1/tau_L``, ``g_H = 1/tau_H`` and
``beta_scaled = beta/tau_L``. Because only ``xi`` is fed back and only
``xi`` is read out, the adjoint recursion collapses to scalar updates; the
numba kernels below exploit that for training-scale runs, while
:class:`OeoDelayModel` exposes the same system through the generic engine in
:mod:`dynlearn.delay` as an independent reference path.

Times are measured in microseconds throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from dynlearn.delay import DelayTrajectory, _tail_sources
from dynlearn.errors import DivergenceError
from dynlearn.numerics import TimeGrid
from dynlearn.ode import GRADIENT_MODES
from dynlearn.readout import TimeResolvedReadout


@dataclass(frozen=True)
class OeoParams:
    """Filter time constants (microseconds) and feedback strength."""

    tau_h: float = 1590.0
    tau_l: float = 15.9
    beta: float = 3.0

    @property
    def g(self) -> float:
        """Total relaxation rate ``1/tau_H + 1/tau_L``."""
        return 1.0 / self.tau_h + 1.0 / self.tau_l

    @property
    def g_h(self) -> float:
        return 1.0 / self.tau_h

    @property
    def g_l(self) -> float:
        return 1.0 / self.tau_l

    @property
    def beta_scaled(self) -> float:
        """Feedback strength in rate form, ``beta / tau_L``."""
        return self.beta / self.tau_l


def feedback_phase(xi_delayed, u1, u2):
    """Interferometer phase ``delta = 2 (u1 xi_tau + u2)``; broadcasts."""
    return 2.0 * (u1 * xi_delayed + u2)


def oeo_derivative(xi, eta, xi_delayed, u1, u2, params: OeoParams):
    """Rate-form derivatives ``(dxi/dt, deta/dt)``; broadcasts over arrays."""
    x = u1 * xi_delayed + u2
    dxi = -params.g * xi - params.g_l * eta + params.beta_scaled * np.cos(x) ** 2
    deta = params.g_h * xi
    return dxi, deta


def oeo_control_gradient_terms(p_xi, delta, xi_delayed, params: OeoParams):
    """Per-step integrands of the control gradients.

    ``dJ/du1`` integrates ``-beta_scaled sin(delta) xi_tau p_xi`` and
    ``dJ/du2`` integrates ``-beta_scaled sin(delta) p_xi``; the caller
    supplies the costate sample and multiplies by the step size.
    """
    s = np.sin(delta)
    return -params.beta_scaled * s * xi_delayed * p_xi, -params.beta_scaled * s * p_xi


def initial_oeo_controls(n_evolve: int) -> tuple[np.ndarray, np.ndarray]:
    """Start from uniform gain 1 and quarter-wave offset ``-pi/4``."""
    return np.ones(n_evolve, dtype=np.float64), np.full(n_evolve, -np.pi / 4, dtype=np.float64)


class OeoDelayModel:
    """The oscillator as a generic :class:`dynlearn.delay.DelayModel`.

    Controls pack as ``u = (u1, u2)``. This path is deliberately kept free
    of the closed-form shortcuts so it can serve as a reference for them.
    """

    state_dim = 2
    control_dim = 2

    def __init__(self, params: OeoParams):
        self.params = params

    def f(self, r, r_tau, u):
        dxi, deta = oeo_derivative(r[:, 0], r[:, 1], r_tau[:, 0], u[0], u[1], self.params)
        return np.stack([dxi, deta], axis=1)

    def df_dr(self, r, r_tau, u):
        p = self.params
        jac = np.zeros((r.shape[0], 2, 2), dtype=np.float64)
        jac[:, 0, 0] = -p.g
        jac[:, 0, 1] = -p.g_l
        jac[:, 1, 0] = p.g_h
        return jac

    def df_drtau(self, r, r_tau, u):
        p = self.params
        jac = np.zeros((r.shape[0], 2, 2), dtype=np.float64)
        delta = feedback_phase(r_tau[:, 0], u[0], u[1])
        jac[:, 0, 0] = -p.beta_scaled * u[0] * np.sin(delta)
        return jac

    def df_du(self, r, r_tau, u):
        p = self.params
        jac = np.zeros((r.shape[0], 2, 2), dtype=np.float64)
        delta = feedback_phase(r_tau[:, 0], u[0], u[1])
        s = np.sin(delta)
        jac[:, 0, 0] = -p.beta_scaled * s * r_tau[:, 0]
        jac[:, 0, 1] = -p.beta_scaled * s
        return jac


# ---------------------------------------------------------------------------
# Fast kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _forward_kernel(states, u1, u2, m, g, g_l, g_h, beta_scaled, dt, bound, first_bad):
    n_total = states.shape[1] - 1
    for k in range(states.shape[0]):
        frozen = False
        for gg in range(m, n_total):
            if frozen:
                states[k, gg + 1, 0] = states[k, gg, 0]
                states[k, gg + 1, 1] = states[k, gg, 1]
                continue
            xi = states[k, gg, 0]
            eta = states[k, gg, 1]
            c = gg - m
            x = u1[c] * states[k, gg - m, 0] + u2[c]
            co = np.cos(x)
            dxi = -g * xi - g_l * eta + beta_scaled * co * co
            deta = g_h * xi
            nxi = xi + dt * dxi
            neta = eta + dt * deta
            if (
                not (np.isfinite(nxi) and np.isfinite(neta))
                or abs(nxi) > bound
                or abs(neta) > bound
            ):
                frozen = True
                first_bad[k] = gg + 1
                states[k, gg + 1, 0] = xi
                states[k, gg + 1, 1] = eta
            else:
                states[k, gg + 1, 0] = nxi
                states[k, gg + 1, 1] = neta


@njit(cache=True)
def _backward_kernel(
    states, u1, u2, sources, m, g, g_l, g_h, beta_scaled, dt, discrete, gu1, gu2, store_p, p_out
):
    n_total = states.shape[1] - 1
    n_ev = n_total - m
    tail_start = n_ev - m
    for k in range(states.shape[0]):
        p = np.zeros((n_ev + 1, 2))
        if discrete:
            p[n_ev, 0] = sources[k, m, 0]
            p[n_ev, 1] = sources[k, m, 1]
        for q in range(n_ev - 1, -1, -1):
            p_xi = p[q + 1, 0]
            p_eta = p[q + 1, 1]
            nxi = p_xi + dt * (-g * p_xi + g_h * p_eta)
            neta = p_eta + dt * (-g_l * p_xi)
            if q >= tail_start:
                nxi += sources[k, q - tail_start, 0]
                neta += sources[k, q - tail_start, 1]
            if q <= n_ev - m - 1:
                c2 = q + m
                delta = 2.0 * (u1[c2] * states[k, m + q, 0] + u2[c2])
                p_future = p[q + m + 1, 0] if discrete else p[q + m, 0]
                nxi += dt * (-beta_scaled * u1[c2] * np.sin(delta) * p_future)
            p[q, 0] = nxi
            p[q, 1] = neta
        for c in range(n_ev):
            delta = 2.0 * (u1[c] * states[k, c, 0] + u2[c])
            s = np.sin(delta)
            p_c = p[c + 1, 0] if discrete else p[c, 0]
            gu1[c] += dt * (-beta_scaled * s * states[k, c, 0]) * p_c
            gu2[c] += dt * (-beta_scaled * s) * p_c
        if store_p:
            for q in range(n_ev + 1):
                p_out[k, q, 0] = p[q, 0]
                p_out[k, q, 1] = p[q, 1]


def forward_oeo(
    histories: np.ndarray,
    u1: np.ndarray,
    u2: np.ndarray,
    params: OeoParams,
    grid: TimeGrid,
    divergence_bound: float = 1e6,
    raise_on_divergence: bool = True,
) -> DelayTrajectory:
    """Closed-form forward pass; drop-in match for the generic engine.

    Same contract as :func:`dynlearn.delay.forward_delay` with the controls
    split into ``u1``/``u2`` arrays of shape ``(n_evolve,)``.
    """
    histories = np.asarray(histories, dtype=np.float64)
    if grid.m_tau is None:
        raise ValueError("oscillator integration needs a grid with m_tau set")
    m = grid.m_tau
    if histories.ndim != 3 or histories.shape[1] != m + 1 or histories.shape[2] != 2:
        raise ValueError(f"histories shape {histories.shape}, expected (K, {m + 1}, 2)")
    if u1.shape != (grid.n_evolve,) or u2.shape != (grid.n_evolve,):
        raise ValueError(
            f"controls u1 {u1.shape} / u2 {u2.shape}, expected ({grid.n_evolve},)"
        )
    k = histories.shape[0]
    states = np.empty((k, grid.n_steps + 1, 2), dtype=np.float64)
    states[:, : m + 1] = histories
    first_bad = np.full(k, -1, dtype=np.int64)
    _forward_kernel(
        states,
        np.ascontiguousarray(u1, dtype=np.float64),
        np.ascontiguousarray(u2, dtype=np.float64),
        m,
        params.g,
        params.g_l,
        params.g_h,
        params.beta_scaled,
        grid.dt,
        divergence_bound,
        first_bad,
    )
    diverged = first_bad >= 0
    if raise_on_divergence and np.any(diverged):
        sample = int(np.argmax(diverged))
        step = int(first_bad[sample])
        t = grid.t_start + step * grid.dt
        raise DivergenceError(
            f"sample {sample} exceeded divergence bound {divergence_bound:g} "
            f"at step {step} (t = {t:g})",
            sample=sample,
            step=step,
        )
    return DelayTrajectory(states, diverged, m)


@dataclass
class OeoBackwardResult:
    """Control gradients summed over the batch, optional costate trajectories."""

    grad_u1: np.ndarray  # (n_evolve,)
    grad_u2: np.ndarray  # (n_evolve,)
    costates: np.ndarray | None  # (K, n_evolve + 1, 2) when requested


def backward_oeo(
    traj: DelayTrajectory,
    u1: np.ndarray,
    u2: np.ndarray,
    readout: TimeResolvedReadout,
    residuals: np.ndarray,
    params: OeoParams,
    grid: TimeGrid,
    mode: str = "continuous",
    return_costates: bool = False,
) -> OeoBackwardResult:
    """Fused costate sweep and control-gradient accumulation.

    Produces the same numbers as running the generic
    :func:`dynlearn.delay.backward_adjoint_delay` followed by
    :func:`dynlearn.delay.control_gradient_delay` on :class:`OeoDelayModel`.
    The per-sample accumulation runs in batch index order, so results do not
    depend on how callers split batches across worker threads.
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"unknown gradient mode '{mode}', expected one of {GRADIENT_MODES}")
    residuals = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    m = grid.m_tau
    n_ev = grid.n_evolve
    k = traj.states.shape[0]
    sources = _tail_sources(readout, residuals, grid.dt)
    grad_u1 = np.zeros(n_ev, dtype=np.float64)
    grad_u2 = np.zeros(n_ev, dtype=np.float64)
    if return_costates:
        p_out = np.empty((k, n_ev + 1, 2), dtype=np.float64)
    else:
        p_out = np.empty((1, 1, 2), dtype=np.float64)
    _backward_kernel(
        traj.states,
        np.ascontiguousarray(u1, dtype=np.float64),
        np.ascontiguousarray(u2, dtype=np.float64),
        np.ascontiguousarray(sources),
        m,
        params.g,
        params.g_l,
        params.g_h,
        params.beta_scaled,
        grid.dt,
        mode == "discrete",
        grad_u1,
        grad_u2,
        return_costates,
        p_out,
    )
    return OeoBackwardResult(grad_u1, grad_u2, p_out if return_costates else None)
