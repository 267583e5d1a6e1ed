"""Optimizers for named parameter groups.

Parameters travel as ``dict[str, ndarray]``. Adam keeps first and second
moment estimates per group with bias correction; each group may carry its own
learning rate so that control samples and readout weights can move at
different speeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    """Hyperparameters. ``alpha`` applies to every group unless overridden."""

    alpha: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    group_alphas: dict[str, float] = field(default_factory=dict)

    def alpha_for(self, group: str) -> float:
        return self.group_alphas.get(group, self.alpha)


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step_count: int = 0

    @classmethod
    def initial(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            step_count=0,
        )


def _check_grads(params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        if name not in grads:
            raise ValueError(f"missing gradient for parameter group '{name}'")
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter shape {p.shape} "
                f"for group '{name}'"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient in parameter group '{name}'")


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: AdamConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update; returns new params and state, inputs untouched.

    Update rule with bias correction:
    ``m = b1 m + (1-b1) g``, ``v = b2 v + (1-b2) g^2``,
    ``p -= alpha * m_hat / (sqrt(v_hat) + eps)``.
    """
    _check_grads(params, grads)
    t = state.step_count + 1
    c1 = 1.0 - config.beta1**t
    c2 = 1.0 - config.beta2**t
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name, p in params.items():
        g = grads[name]
        m = config.beta1 * state.m[name] + (1.0 - config.beta1) * g
        v = config.beta2 * state.v[name] + (1.0 - config.beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_params[name] = p - config.alpha_for(name) * m_hat / (np.sqrt(v_hat) + config.epsilon)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(new_m, new_v, t)


def sgd_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    alpha: float,
    group_alphas: dict[str, float] | None = None,
) -> dict[str, np.ndarray]:
    """Plain gradient descent ``p -= alpha * g``, per-group rates optional."""
    _check_grads(params, grads)
    rates = group_alphas or {}
    return {name: p - rates.get(name, alpha) * grads[name] for name, p in params.items()}
