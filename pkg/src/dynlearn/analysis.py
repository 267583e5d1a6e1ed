"""Post-training analysis: parameter sweeps, correlation values, trajectory dumps.

Everything here emits plain CSV rows so any external plotter can reproduce
the figures; there is no plotting dependency. Schemas:

* sweep: ``param1,param2,test_acc,final_loss,diverged_samples`` (``param2``
  empty for one-axis sweeps; failed cells carry ``nan`` metrics and ``-1``).
* correlations: ``class_l,true_class,z_tilde``.
* trajectory dump: ``t,sample_id,component,value``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from dynlearn.config import TrainConfig, apply_overrides, build_grid
from dynlearn.data import LabeledDataset
from dynlearn.errors import ConfigError
from dynlearn.numerics import trapezoid_weights
from dynlearn.ode import OdeControls, forward_ode
from dynlearn.oeo import forward_oeo
from dynlearn.training import (
    history_encoder,
    oeo_params_from_config,
    train,
)

SWEEP_COLUMNS = ("param1", "param2", "test_acc", "final_loss", "diverged_samples")
CORRELATION_COLUMNS = ("class_l", "true_class", "z_tilde")
TRAJDUMP_COLUMNS = ("t", "sample_id", "component", "value")


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


def sweep_cells(axes: list[tuple[str, list[str]]]) -> list[dict[str, str]]:
    """Expand one or two (name, values) axes into per-cell override dicts."""
    if not 1 <= len(axes) <= 2:
        raise ConfigError(f"sweeps take one or two axes, got {len(axes)}")
    for name, values in axes:
        if not values:
            raise ConfigError(f"sweep axis '{name}' has no values")
    names = [name for name, _ in axes]
    if len(set(names)) != len(names):
        raise ConfigError(f"sweep axes must name distinct parameters, got {names}")
    return [
        dict(zip(names, combo))
        for combo in itertools.product(*[values for _, values in axes])
    ]


def _run_cell(base: TrainConfig, overrides: dict[str, str]):
    config = apply_overrides(base, overrides)
    # Cell outputs are the sweep row itself; per-cell files would collide.
    config = apply_overrides(config, {"metrics_path": "", "checkpoint_path": ""})
    result = train(config)
    return (
        result.metrics.final_test_accuracy(),
        result.metrics.final_train_loss(),
        result.diverged_train_max,
    )


def run_sweep(
    base: TrainConfig,
    axes: list[tuple[str, list[str]]],
    threads: int = 1,
) -> list[tuple]:
    """Train one model per grid cell; returns sweep rows in grid order.

    Cells are independent (each derives its own RNG from its config seed) and
    may run on a worker pool; rows always come back in product order. A cell
    that raises is recorded as a failed row (``nan`` metrics, ``-1`` diverged
    count) and the sweep continues.
    """
    cells = sweep_cells(axes)
    two_axes = len(axes) == 2

    def run(overrides):
        try:
            return _run_cell(base, overrides)
        except Exception:
            return (math.nan, math.nan, -1)

    if threads > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run, cells))
    else:
        outcomes = [run(c) for c in cells]

    rows = []
    for overrides, (acc, loss, diverged) in zip(cells, outcomes):
        values = list(overrides.values())
        param2 = values[1] if two_axes else ""
        rows.append((values[0], param2, repr(acc), repr(loss), diverged))
    return rows


# ---------------------------------------------------------------------------
# Correlation values
# ---------------------------------------------------------------------------


def correlation_values(
    config: TrainConfig,
    params: dict[str, np.ndarray],
    dataset: LabeledDataset,
    instance_count: int = 500,
    chunk_size: int = 100,
) -> list[tuple[int, int, float]]:
    """Per-class quadrature overlap of the readout weights with the signal.

    For each of the first ``instance_count`` dataset instances and each class
    ``l``, computes the bias-free readout integral of the optical signal over
    the final delay interval. Returns ``(class_l, true_class, z_tilde)``
    triples, one per (instance, class) pair.
    """
    if config.kind == "ode_spiral":
        raise ConfigError("correlation values are defined for the delay experiments only")
    n = min(instance_count, len(dataset))
    grid = build_grid(config)
    encode = history_encoder(config, dataset, grid)
    omega = params["omega"]  # (m_tau + 1, n_classes)
    weights = trapezoid_weights(grid.m_tau + 1, grid.dt)
    oeo = oeo_params_from_config(config)
    records: list[tuple[int, int, float]] = []
    for lo in range(0, n, chunk_size):
        idx = np.arange(lo, min(lo + chunk_size, n))
        traj = forward_oeo(
            encode(idx), params["u1"], params["u2"], oeo, grid,
            divergence_bound=config.divergence_bound,
        )
        xi_tail = traj.tails()[:, :, 0]  # (chunk, m_tau + 1)
        z = (xi_tail * weights) @ omega  # (chunk, n_classes)
        for row, k in enumerate(idx):
            true_class = int(dataset.labels[k])
            for l in range(omega.shape[1]):
                records.append((l, true_class, float(z[row, l])))
    return records


# ---------------------------------------------------------------------------
# Trajectory dumps
# ---------------------------------------------------------------------------


def _nearest_grid_indices(times, grid) -> list[int]:
    indices = []
    for t in times:
        j = int(round((float(t) - grid.t_start) / grid.dt))
        if not 0 <= j <= grid.n_steps:
            raise ConfigError(
                f"time {t} outside the grid [{grid.t_start:g}, {grid.t_end:g}]"
            )
        indices.append(j)
    return indices


def trajectory_dump(
    config: TrainConfig,
    params: dict[str, np.ndarray],
    dataset: LabeledDataset,
    sample_ids,
    times,
    cloud: bool = False,
) -> list[tuple]:
    """Rows of state components at the requested times.

    ``times`` map to the nearest grid sample; an empty list yields no rows.
    For the ODE experiment ``cloud=True`` dumps every dataset sample at the
    selected times (the full state cloud); delay experiments dump the
    requested samples over their whole span, history included.
    """
    grid = build_grid(config)
    sample_ids = [int(s) for s in sample_ids]
    for s in sample_ids:
        if not 0 <= s < len(dataset):
            raise ConfigError(f"unknown sample id {s} (dataset has {len(dataset)} rows)")
    if cloud and config.kind != "ode_spiral":
        raise ConfigError("state-cloud dumps are an ODE-experiment feature")
    indices = _nearest_grid_indices(times, grid)

    if config.kind == "ode_spiral":
        components = ("r1", "r2")
        selected = np.arange(len(dataset)) if cloud else np.array(sample_ids, dtype=int)
        states = forward_ode(
            dataset.inputs[selected], OdeControls(params["a"], params["b"]), grid
        ).states
    else:
        components = ("xi", "eta")
        selected = np.array(sample_ids, dtype=int)
        encode = history_encoder(config, dataset, grid)
        states = forward_oeo(
            encode(selected), params["u1"], params["u2"],
            oeo_params_from_config(config), grid,
            divergence_bound=config.divergence_bound,
        ).states

    grid_times = grid.times()
    rows = []
    for row, sample in enumerate(selected):
        for j in indices:
            for c, name in enumerate(components):
                rows.append((repr(float(grid_times[j])), int(sample), name, repr(float(states[row, j, c]))))
    return rows
