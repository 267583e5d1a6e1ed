"""Shared numerical kernels: time grids, Euler stepping, quadrature, RNG.

Every integration in the package runs on a uniform time grid with explicit
Euler steps, and every time integral is evaluated with the trapezoidal rule
on the same grid. Keeping both in one place guarantees that forward passes,
backward (adjoint) passes, and readout quadratures all see identical step
sizes and weights, which is what makes the discrete gradients exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with an optional delay offset.

    For plain ODE runs the grid covers ``[t_start, t_end]`` in ``n_steps``
    Euler steps. For delay runs, ``m_tau`` is the delay measured in steps and
    the first ``m_tau`` intervals of the grid hold the history segment, so a
    grid built by :func:`delay_grid` spans ``[-tau, t_end]`` with state
    evolution starting at ``t = 0``.
    """

    t_start: float
    dt: float
    n_steps: int
    m_tau: int | None = None

    @property
    def t_end(self) -> float:
        return self.t_start + self.n_steps * self.dt

    @property
    def tau(self) -> float:
        """Delay time ``m_tau * dt``. Only meaningful on delay grids."""
        if self.m_tau is None:
            raise ValueError("grid has no delay: m_tau is not set")
        return self.m_tau * self.dt

    @property
    def n_evolve(self) -> int:
        """Number of evolution steps past the history segment."""
        if self.m_tau is None:
            return self.n_steps
        return self.n_steps - self.m_tau

    def times(self) -> np.ndarray:
        """Sample times, shape ``(n_steps + 1,)``, computed as t_start + i*dt."""
        return self.t_start + np.arange(self.n_steps + 1) * self.dt


def make_time_grid(t_start: float, dt: float, n_steps: int, m_tau: int | None = None) -> TimeGrid:
    """Validate and build a :class:`TimeGrid`.

    ``dt`` must be positive and ``n_steps`` at least one. On delay grids
    ``m_tau`` must be positive and must divide ``n_steps`` evenly, so that the
    horizon is a whole number of delay intervals.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if m_tau is not None:
        if m_tau < 1:
            raise ValueError(f"m_tau must be >= 1, got {m_tau}")
        if n_steps % m_tau != 0:
            raise ValueError(
                f"n_steps ({n_steps}) must be an integer multiple of m_tau ({m_tau})"
            )
    return TimeGrid(float(t_start), float(dt), int(n_steps), m_tau)


def delay_grid(tau: float, m_tau: int, n_delay_spans: int) -> TimeGrid:
    """Build the grid for a delay run covering ``[-tau, n_delay_spans * tau]``.

    The step size is derived as ``dt = tau / m_tau`` so the delay is exactly
    ``m_tau`` steps by construction; ``n_delay_spans`` is the horizon measured
    in delay intervals (the history interval is not counted).
    """
    if m_tau < 1:
        raise ValueError(f"m_tau must be >= 1, got {m_tau}")
    if n_delay_spans < 1:
        raise ValueError(f"n_delay_spans must be >= 1, got {n_delay_spans}")
    dt = float(tau) / m_tau
    n_steps = (n_delay_spans + 1) * m_tau
    return make_time_grid(-dt * m_tau, dt, n_steps, m_tau)


def euler_step(state: np.ndarray, derivative: np.ndarray, dt: float) -> np.ndarray:
    """One explicit Euler step ``state + dt * derivative``.

    ``dt`` may be negative for reverse-time stepping. Shapes must agree.
    """
    state = np.asarray(state, dtype=np.float64)
    derivative = np.asarray(derivative, dtype=np.float64)
    if state.shape != derivative.shape:
        raise ValueError(
            f"state shape {state.shape} does not match derivative shape {derivative.shape}"
        )
    return state + dt * derivative


def trapezoid_weights(n_samples: int, dt: float) -> np.ndarray:
    """Quadrature weights ``dt * (1/2, 1, ..., 1, 1/2)`` for ``n_samples`` points."""
    if n_samples < 2:
        raise ValueError(f"trapezoid rule needs at least 2 samples, got {n_samples}")
    w = np.full(n_samples, dt, dtype=np.float64)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def trapezoid_integrate(samples: np.ndarray, dt: float, axis: int = 0) -> np.ndarray:
    """Trapezoidal integral of uniformly sampled values along ``axis``."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[axis]
    if n < 2:
        raise ValueError(f"trapezoid rule needs at least 2 samples, got {n}")
    w = trapezoid_weights(n, dt)
    shape = [1] * samples.ndim
    shape[axis] = n
    return np.sum(samples * w.reshape(shape), axis=axis)


class SeededRng:
    """Deterministic random source with spawnable children.

    A root instance is built from an integer seed; ``child(i)`` derives an
    independent stream keyed by ``(seed, *path, i)``. Streams depend only on
    the seed and the derivation path, never on call order elsewhere, which is
    what makes data generation, init, and shuffling reproducible regardless
    of how much randomness other components consumed.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.path = tuple(int(p) for p in _path)
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence((self.seed, *self.path)))
        )

    def child(self, index: int) -> "SeededRng":
        """Derive the independent child stream at ``index``."""
        return SeededRng(self.seed, (*self.path, int(index)))

    # Thin pass-throughs for the handful of draws the package needs.
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)
