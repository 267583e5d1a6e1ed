"""Linear readouts, softmax classification, and the cross-entropy objective.

Two readout shapes are supported. The end-state readout projects the final
state of an ODE trajectory through a weight matrix. The time-resolved readout
integrates a time-dependent weight against the last delay interval of a delay
trajectory with trapezoidal quadrature; its weights live on the same grid
samples as the states they multiply.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dynlearn.numerics import trapezoid_weights

# Floor applied inside the logarithm so that a confidently wrong model yields
# a large but finite loss instead of an overflow.
LOG_FLOOR = 1e-12


@dataclass
class EndStateReadout:
    """Affine map from a final state to class scores: ``z = omega @ r + bias``."""

    omega: np.ndarray  # (n_classes, state_dim)
    bias: np.ndarray  # (n_classes,)


@dataclass
class TimeResolvedReadout:
    """Quadrature readout over a trajectory tail.

    ``omega_t[j, l, c]`` weights state component ``c`` at tail sample ``j``
    for class ``l``; scores are ``z_l = integral omega_l(t) . r(t) dt + bias_l``
    taken over the last delay interval.
    """

    omega_t: np.ndarray  # (n_tail_samples, n_classes, state_dim)
    bias: np.ndarray  # (n_classes,)


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    scores = np.asarray(scores, dtype=np.float64)
    shifted = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def cross_entropy(targets: np.ndarray, outputs: np.ndarray) -> float:
    """Mean cross-entropy ``-1/K sum_k sum_l t_kl ln y_kl`` over a batch.

    ``targets`` holds one-hot rows; ``outputs`` holds softmax rows. Outputs
    are floored at ``LOG_FLOOR`` inside the logarithm.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    if targets.shape != outputs.shape:
        raise ValueError(f"targets shape {targets.shape} != outputs shape {outputs.shape}")
    logs = np.log(np.maximum(outputs, LOG_FLOOR))
    return float(-np.sum(targets * logs) / targets.shape[0])


def loss_residual(targets: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    """Per-sample gradient of the mean cross-entropy through the softmax.

    With softmax outputs the chain rule collapses to ``(y - t) / K`` per
    sample, where ``K`` is the batch size. Shape ``(K, n_classes)``.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    outputs = np.atleast_2d(np.asarray(outputs, dtype=np.float64))
    if targets.shape != outputs.shape:
        raise ValueError(f"targets shape {targets.shape} != outputs shape {outputs.shape}")
    return (outputs - targets) / targets.shape[0]


def readout_endstate(end_states: np.ndarray, readout: EndStateReadout) -> np.ndarray:
    """Class scores for one final state ``(state_dim,)`` or a batch ``(K, state_dim)``."""
    end_states = np.asarray(end_states, dtype=np.float64)
    return end_states @ readout.omega.T + readout.bias


def readout_timeresolved(tails: np.ndarray, readout: TimeResolvedReadout, dt: float) -> np.ndarray:
    """Class scores from trajectory tails via trapezoidal quadrature.

    ``tails`` has shape ``(K, n_tail, state_dim)`` or ``(n_tail, state_dim)``;
    the sample count must match ``readout.omega_t``.
    """
    tails = np.asarray(tails, dtype=np.float64)
    single = tails.ndim == 2
    if single:
        tails = tails[None]
    n_tail = readout.omega_t.shape[0]
    if tails.shape[1] != n_tail:
        raise ValueError(
            f"tail has {tails.shape[1]} samples but readout expects {n_tail}"
        )
    w = trapezoid_weights(n_tail, dt)
    scores = np.einsum("kjc,jlc->kl", tails, readout.omega_t * w[:, None, None]) + readout.bias
    return scores[0] if single else scores


def accuracy(outputs: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of rows whose argmax matches the integer label."""
    outputs = np.atleast_2d(np.asarray(outputs))
    predicted = np.argmax(outputs, axis=-1)
    return float(np.mean(predicted == np.asarray(labels)))


@dataclass
class LossReport:
    """Evaluation summary: scalar loss, per-sample softmax rows, argmax accuracy."""

    loss: float
    per_sample_outputs: np.ndarray  # (K, n_classes)
    accuracy: float


def make_loss_report(targets: np.ndarray, outputs: np.ndarray, labels: np.ndarray) -> LossReport:
    return LossReport(cross_entropy(targets, outputs), outputs, accuracy(outputs, labels))
