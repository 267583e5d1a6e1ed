"""Supervised learning by optimal control of driven dynamical systems.

The package trains two families of classifiers:

* a small controlled ODE whose per-step drive matrices and offsets are the
  learned parameters, read out linearly from the final state, and
* a single-node delay system (an optoelectronic oscillator with low-pass and
  high-pass filtering) whose scalar feedback controls are learned, read out
  from a time-resolved weighting of the trajectory tail.

Both are trained by integrating the system forward with explicit Euler steps
and integrating an adjoint (costate) system backward to obtain gradients of a
cross-entropy objective with respect to every control sample.
"""

from dynlearn.numerics import TimeGrid, make_time_grid, delay_grid, SeededRng
from dynlearn.readout import EndStateReadout, TimeResolvedReadout, softmax, cross_entropy

__all__ = [
    "TimeGrid",
    "make_time_grid",
    "delay_grid",
    "SeededRng",
    "EndStateReadout",
    "TimeResolvedReadout",
    "softmax",
    "cross_entropy",
]

__version__ = "0.1.0"
