"""Training orchestration: epochs, batching, checkpoints, gradient checking.

The trainer glues the pieces together per experiment kind:

* ``ode_spiral`` — planar spiral points pushed through the controlled tanh
  flow, end-state readout, full batch.
* ``oeo_spiral`` — the same points written onto a delay-line history and run
  through the oscillator, time-resolved readout over the final delay
  interval, full batch.
* ``oeo_mnist`` — images tiled onto the delay line, ten-class readout,
  mini-batches with a seeded per-epoch shuffle.

Determinism contract: given a config and seed, every produced number is
bit-identical across runs and across worker-thread counts. Randomness flows
only through named child streams of the master seed (train data 0, test data
1, epoch shuffles 10 + epoch); parameter init is deterministic; batch work is
split into fixed-size chunks whose partial results are reduced in chunk
order no matter which thread computed them.

Oscillator parameter layout: only the optical signal is read out, so the
trainable time-resolved weights are stored as ``(m_tau + 1, n_classes)`` and
padded with a zero filter column at the engine boundary.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from dynlearn import data as data_mod
from dynlearn import ode as ode_mod
from dynlearn.config import (
    TrainConfig,
    build_grid,
    config_from_json,
    config_hash,
    config_to_json,
    resolve_mnist_paths,
    validate_config,
)
from dynlearn.delay import readout_gradient_delay
from dynlearn.errors import CheckpointError, ConfigError
from dynlearn.numerics import SeededRng, TimeGrid, make_time_grid
from dynlearn.oeo import OeoParams, backward_oeo, forward_oeo, initial_oeo_controls
from dynlearn.optim import AdamConfig, AdamState, adam_step, sgd_step
from dynlearn.readout import (
    EndStateReadout,
    LossReport,
    TimeResolvedReadout,
    accuracy,
    cross_entropy,
    loss_residual,
    make_loss_report,
    readout_endstate,
    readout_timeresolved,
    softmax,
)

CHECKPOINT_VERSION = 1

# Child-stream indices of the master seed.
_CHILD_TRAIN_DATA = 0
_CHILD_TEST_DATA = 1
_CHILD_SHUFFLE_BASE = 10


@dataclass
class MetricsLog:
    """Per-epoch records with the CSV schema used by every command."""

    columns = ("epoch", "train_loss", "train_acc", "test_loss", "test_acc", "wall_s")
    rows: list[tuple] = field(default_factory=list)

    def append(self, epoch, train_loss, train_acc, test_loss, test_acc, wall_s):
        self.rows.append(
            (int(epoch), float(train_loss), float(train_acc), float(test_loss), float(test_acc), float(wall_s))
        )

    def final_test_accuracy(self) -> float:
        return self.rows[-1][4]

    def best_test_accuracy(self) -> float:
        return max(row[4] for row in self.rows)

    def final_train_loss(self) -> float:
        return self.rows[-1][1]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(self._format_row(row) + "\n")

    @staticmethod
    def _format_row(row) -> str:
        epoch, tl, ta, vl, va, wall = row
        return f"{epoch},{tl:.17g},{ta:.17g},{vl:.17g},{va:.17g},{wall:.3f}"


@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    metrics: MetricsLog
    adam_state: AdamState | None
    diverged_train_max: int = 0


# ---------------------------------------------------------------------------
# Datasets and parameter initialization
# ---------------------------------------------------------------------------


def build_datasets(config: TrainConfig):
    """Construct (train, test) sets for the config's kind, seed-deterministic."""
    rng = SeededRng(config.seed)
    if config.kind in ("ode_spiral", "oeo_spiral"):
        train = data_mod.generate_spirals(
            config.train_per_class, rng.child(_CHILD_TRAIN_DATA), config.noise_sd, config.turns
        )
        test = data_mod.generate_spirals(
            config.test_per_class, rng.child(_CHILD_TEST_DATA), config.noise_sd, config.turns
        )
        return train, test
    paths = resolve_mnist_paths(config)
    train = data_mod.load_mnist_idx(paths["train_images"], paths["train_labels"])
    test = data_mod.load_mnist_idx(paths["test_images"], paths["test_labels"])
    if config.train_limit and config.train_limit < len(train):
        train = train.subset(np.arange(config.train_limit))
    if config.test_limit and config.test_limit < len(test):
        test = test.subset(np.arange(config.test_limit))
    return train, test


def initial_params(config: TrainConfig, grid: TimeGrid, n_classes: int) -> dict[str, np.ndarray]:
    """Deterministic starting parameters for each kind.

    ODE: identity drive, zero offsets, zero readout (uniform softmax).
    Oscillator: unit feedback gain, quarter-wave phase offset, zero readout.
    """
    if config.kind == "ode_spiral":
        controls = ode_mod.initial_controls(grid, state_dim=2)
        return {
            "a": controls.a,
            "b": controls.b,
            "omega": np.zeros((n_classes, 2)),
            "bias": np.zeros(n_classes),
        }
    u1, u2 = initial_oeo_controls(grid.n_evolve)
    return {
        "u1": u1,
        "u2": u2,
        "omega": np.zeros((grid.m_tau + 1, n_classes)),
        "bias": np.zeros(n_classes),
    }


def oeo_params_from_config(config: TrainConfig) -> OeoParams:
    return OeoParams(tau_h=config.tau_h_us, tau_l=config.tau_l_us, beta=config.beta)


def history_encoder(config: TrainConfig, dataset: data_mod.LabeledDataset, grid: TimeGrid):
    """Returns ``encode(indices) -> (len(indices), m_tau + 1, 2)`` histories.

    Encoding is deferred so image batches never materialize the whole
    dataset's delay histories at once.
    """
    if config.kind == "oeo_spiral":
        inputs = dataset.inputs

        def encode(idx):
            return data_mod.encode_spiral_histories(inputs[idx], grid)

    else:
        images = dataset.images()

        def encode(idx):
            return data_mod.encode_image_histories(images[idx], grid)

    return encode


def _pad_filter_column(omega_xi: np.ndarray) -> np.ndarray:
    """Lift (n_tail, L) optical weights to the engine's (n_tail, L, 2) layout."""
    return np.stack([omega_xi, np.zeros_like(omega_xi)], axis=-1)


# ---------------------------------------------------------------------------
# Chunked batch passes
# ---------------------------------------------------------------------------


def _chunk_slices(n: int, chunk_size: int) -> list[np.ndarray]:
    if chunk_size <= 0:
        chunk_size = n
    return [np.arange(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]


def _run_ordered(fn, work_items, threads: int) -> list:
    """Map fn over items; results come back in item order for any thread count."""
    if threads <= 1 or len(work_items) <= 1:
        return [fn(item) for item in work_items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, work_items))


@dataclass
class BatchPassResult:
    loss: float
    outputs: np.ndarray  # (K, n_classes) softmax rows
    grads: dict[str, np.ndarray] | None
    diverged: int = 0


def ode_batch_pass(
    params: dict[str, np.ndarray],
    inputs: np.ndarray,
    targets: np.ndarray,
    grid: TimeGrid,
    mode: str,
    threads: int = 1,
    chunk_size: int = 250,
    want_grads: bool = True,
) -> BatchPassResult:
    """Loss, outputs, and (optionally) gradients for an ODE batch."""
    controls = ode_mod.OdeControls(params["a"], params["b"])
    readout = EndStateReadout(params["omega"], params["bias"])
    chunks = _chunk_slices(inputs.shape[0], chunk_size)

    trajs = _run_ordered(lambda idx: ode_mod.forward_ode(inputs[idx], controls, grid), chunks, threads)
    end_states = np.concatenate([t.states[:, -1] for t in trajs], axis=0)
    outputs = softmax(readout_endstate(end_states, readout))
    loss = cross_entropy(targets, outputs)
    if not want_grads:
        return BatchPassResult(loss, outputs, None)

    residuals = loss_residual(targets, outputs)

    def backward(item):
        ci, traj = item
        res = residuals[chunks[ci]]
        p_end = ode_mod.adjoint_end_condition(traj.states[:, -1], readout, res)
        costates = ode_mod.backward_adjoint_ode(traj, controls, p_end, grid)
        g = ode_mod.control_gradient_ode(costates, traj, grid, mode)
        g_omega = np.einsum("kl,km->lm", res, traj.states[:, -1])
        g_bias = np.sum(res, axis=0)
        return g.a, g.b, g_omega, g_bias

    parts = _run_ordered(backward, list(enumerate(trajs)), threads)
    grads = {
        "a": sum(p[0] for p in parts),
        "b": sum(p[1] for p in parts),
        "omega": sum(p[2] for p in parts),
        "bias": sum(p[3] for p in parts),
    }
    return BatchPassResult(loss, outputs, grads)


def oeo_batch_pass(
    params: dict[str, np.ndarray],
    oeo: OeoParams,
    encode,
    indices: np.ndarray,
    targets: np.ndarray,
    grid: TimeGrid,
    mode: str,
    threads: int = 1,
    chunk_size: int = 250,
    want_grads: bool = True,
    divergence_bound: float = 1e6,
    drop_diverged: bool = False,
) -> BatchPassResult:
    """Loss, outputs, and gradients for an oscillator batch.

    ``encode`` maps dataset indices to history arrays, invoked per chunk.
    With ``drop_diverged`` the flagged samples contribute zero residual (and
    so zero gradient) and the loss normalizes over the survivors; otherwise
    any divergence raises.
    """
    u1, u2 = params["u1"], params["u2"]
    readout = TimeResolvedReadout(_pad_filter_column(params["omega"]), params["bias"])
    chunks = _chunk_slices(indices.shape[0], chunk_size)

    def forward(ci):
        hist = encode(indices[chunks[ci]])
        return forward_oeo(
            hist, u1, u2, oeo, grid,
            divergence_bound=divergence_bound,
            raise_on_divergence=not drop_diverged,
        )

    trajs = _run_ordered(forward, list(range(len(chunks))), threads)
    tails = [t.tails() for t in trajs]
    scores = np.concatenate([readout_timeresolved(t, readout, grid.dt) for t in tails], axis=0)
    outputs = softmax(scores)
    diverged_mask = np.concatenate([t.diverged for t in trajs])
    n_diverged = int(np.sum(diverged_mask))
    kept = ~diverged_mask
    if not np.any(kept):
        raise ConfigError("every sample in the batch diverged; nothing left to train on")
    loss = cross_entropy(targets[kept], outputs[kept])
    if not want_grads:
        return BatchPassResult(loss, outputs, None, n_diverged)

    residuals = np.zeros_like(outputs)
    residuals[kept] = (outputs[kept] - targets[kept]) / int(np.sum(kept))

    def backward(ci):
        res = residuals[chunks[ci]]
        bw = backward_oeo(trajs[ci], u1, u2, readout, res, oeo, grid, mode)
        g_omega, g_bias = readout_gradient_delay(tails[ci], res, grid.dt)
        return bw.grad_u1, bw.grad_u2, g_omega[:, :, 0], g_bias

    parts = _run_ordered(backward, list(range(len(chunks))), threads)
    grads = {
        "u1": sum(p[0] for p in parts),
        "u2": sum(p[1] for p in parts),
        "omega": sum(p[2] for p in parts),
        "bias": sum(p[3] for p in parts),
    }
    return BatchPassResult(loss, outputs, grads, n_diverged)


# ---------------------------------------------------------------------------
# Train / evaluate
# ---------------------------------------------------------------------------


def _adam_config(config: TrainConfig) -> AdamConfig:
    return AdamConfig(
        alpha=config.alpha_u,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        epsilon=config.adam_epsilon,
        group_alphas={"omega": config.alpha_omega, "bias": config.alpha_bias},
    )


def _epoch_batches(n: int, batch_size: int, rng: SeededRng | None) -> list[np.ndarray]:
    if batch_size <= 0 or batch_size >= n:
        return [np.arange(n)]
    order = rng.permutation(n) if rng is not None else np.arange(n)
    return [order[lo : lo + batch_size] for lo in range(0, n, batch_size)]


def _pass_for(config, params, grid, dataset, encode, indices, want_grads):
    if config.kind == "ode_spiral":
        return ode_batch_pass(
            params,
            dataset.inputs[indices],
            dataset.targets[indices],
            grid,
            config.gradient_mode,
            threads=config.threads,
            chunk_size=config.chunk_size,
            want_grads=want_grads,
        )
    return oeo_batch_pass(
        params,
        oeo_params_from_config(config),
        encode,
        indices,
        dataset.targets[indices],
        grid,
        config.gradient_mode,
        threads=config.threads,
        chunk_size=config.chunk_size,
        want_grads=want_grads,
        divergence_bound=config.divergence_bound,
        drop_diverged=config.drop_diverged,
    )


def train(
    config: TrainConfig,
    train_set: data_mod.LabeledDataset | None = None,
    test_set: data_mod.LabeledDataset | None = None,
) -> TrainResult:
    """Run the full training loop; returns parameters and the metrics log.

    Datasets default to the config-specified ones; callers may inject their
    own (shapes must match the kind). When ``config.metrics_path`` is set the
    per-epoch rows are streamed to it as the run progresses. A non-finite
    training loss saves the last good parameters to ``config.checkpoint_path``
    (if set) and raises.
    """
    validate_config(config)
    if train_set is None or test_set is None:
        built_train, built_test = build_datasets(config)
        train_set = train_set if train_set is not None else built_train
        test_set = test_set if test_set is not None else built_test
    grid = build_grid(config)
    params = initial_params(config, grid, train_set.n_classes)
    adam = AdamState.initial(params) if config.optimizer == "adam" else None
    adam_cfg = _adam_config(config)
    rng = SeededRng(config.seed)
    encode_train = None if config.kind == "ode_spiral" else history_encoder(config, train_set, grid)
    encode_test = None if config.kind == "ode_spiral" else history_encoder(config, test_set, grid)

    metrics = MetricsLog()
    sink = open(config.metrics_path, "w", newline="") if config.metrics_path else None
    if sink is not None:
        sink.write(",".join(MetricsLog.columns) + "\n")
    diverged_train_max = 0
    try:
        for epoch in range(config.epochs):
            started = time.perf_counter()
            shuffle_rng = (
                rng.child(_CHILD_SHUFFLE_BASE + epoch)
                if 0 < config.batch_size < len(train_set)
                else None
            )
            batches = _epoch_batches(len(train_set), config.batch_size, shuffle_rng)
            losses = []
            correct_weighted = 0.0
            for batch_idx in batches:
                result = _pass_for(config, params, grid, train_set, encode_train, batch_idx, True)
                diverged_train_max = max(diverged_train_max, result.diverged)
                if not np.isfinite(result.loss):
                    _abort_with_checkpoint(config, params, adam)
                losses.append(result.loss)
                correct_weighted += accuracy(result.outputs, train_set.labels[batch_idx]) * len(batch_idx)
                if config.optimizer == "adam":
                    params, adam = adam_step(params, result.grads, adam, adam_cfg)
                else:
                    params = sgd_step(
                        params, result.grads, config.alpha_u,
                        {"omega": config.alpha_omega, "bias": config.alpha_bias},
                    )
            train_loss = float(np.mean(losses))
            train_acc = correct_weighted / len(train_set)
            test_report, test_diverged = _evaluate_ex(params, test_set, config, grid, encode_test)
            diverged_train_max = max(diverged_train_max, test_diverged)
            wall = time.perf_counter() - started
            metrics.append(epoch, train_loss, train_acc, test_report.loss, test_report.accuracy, wall)
            if sink is not None:
                sink.write(MetricsLog._format_row(metrics.rows[-1]) + "\n")
                sink.flush()
    finally:
        if sink is not None:
            sink.close()
    if config.checkpoint_path:
        save_checkpoint(config.checkpoint_path, config, params, adam)
    return TrainResult(params, metrics, adam, diverged_train_max)


def _abort_with_checkpoint(config, params, adam):
    if config.checkpoint_path:
        save_checkpoint(config.checkpoint_path, config, params, adam)
        raise RuntimeError(
            f"training loss became non-finite; last good state saved to {config.checkpoint_path}"
        )
    raise RuntimeError("training loss became non-finite")


def _evaluate_ex(params, dataset, config, grid, encode):
    indices = np.arange(len(dataset))
    result = _pass_for(config, params, grid, dataset, encode, indices, False)
    report = make_loss_report(dataset.targets, result.outputs, dataset.labels)
    return report, result.diverged


def evaluate(params: dict[str, np.ndarray], dataset, config: TrainConfig) -> LossReport:
    """Forward-only pass over a dataset with the config's loss conventions."""
    grid = build_grid(config)
    encode = None if config.kind == "ode_spiral" else history_encoder(config, dataset, grid)
    report, _ = _evaluate_ex(params, dataset, config, grid, encode)
    return report


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, config: TrainConfig, params: dict, adam: AdamState | None) -> None:
    """Versioned binary container: parameter arrays, optimizer state, config."""
    payload = {
        "version": np.int64(CHECKPOINT_VERSION),
        "config_json": np.frombuffer(config_to_json(config).encode(), dtype=np.uint8),
        "config_sha": np.frombuffer(config_hash(config).encode(), dtype=np.uint8),
        "param_names": np.frombuffer("\n".join(sorted(params)).encode(), dtype=np.uint8),
    }
    for name, value in params.items():
        payload[f"param_{name}"] = value
    if adam is not None:
        payload["adam_step"] = np.int64(adam.step_count)
        for name, value in adam.m.items():
            payload[f"adam_m_{name}"] = value
        for name, value in adam.v.items():
            payload[f"adam_v_{name}"] = value
    np.savez(path, **payload)


def load_checkpoint(path, expected_config: TrainConfig | None = None):
    """Load (config, params, adam_state); verify version and config hash.

    With ``expected_config`` given, its hash must match the stored one
    exactly, otherwise :class:`CheckpointError` — results produced under one
    config must not silently continue under another.
    """
    try:
        archive = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    with archive:
        version = int(archive["version"])
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
            )
        stored_json = bytes(archive["config_json"]).decode()
        stored_sha = bytes(archive["config_sha"]).decode()
        config = config_from_json(stored_json)
        if config_hash(config) != stored_sha:
            raise CheckpointError("checkpoint config hash does not match its stored config")
        if expected_config is not None and config_hash(expected_config) != stored_sha:
            raise CheckpointError(
                "checkpoint was trained under a different config (hash mismatch); refusing to load"
            )
        names = bytes(archive["param_names"]).decode().split("\n")
        params = {name: archive[f"param_{name}"] for name in names}
        adam = None
        if "adam_step" in archive.files:
            adam = AdamState(
                m={name: archive[f"adam_m_{name}"] for name in names},
                v={name: archive[f"adam_v_{name}"] for name in names},
                step_count=int(archive["adam_step"]),
            )
    return config, params, adam


# ---------------------------------------------------------------------------
# Gradient-check harness
# ---------------------------------------------------------------------------


def _linear_refine(samples: np.ndarray, factor: int, axis: int = 0) -> np.ndarray:
    """Sample the piecewise-linear interpolant on a factor-refined grid."""
    if factor == 1:
        return np.asarray(samples, dtype=np.float64)
    moved = np.moveaxis(np.asarray(samples, dtype=np.float64), axis, 0)
    n = moved.shape[0]
    coarse = np.arange(n, dtype=np.float64)
    fine = np.arange((n - 1) * factor + 1, dtype=np.float64) / factor
    flat = moved.reshape(n, -1)
    out = np.empty((fine.shape[0], flat.shape[1]))
    for j in range(flat.shape[1]):
        out[:, j] = np.interp(fine, coarse, flat[:, j])
    return np.moveaxis(out.reshape((fine.shape[0],) + moved.shape[1:]), 0, axis)


@dataclass
class GradCheckInstance:
    """A small random problem with closures for loss and adjoint gradients."""

    params: dict[str, np.ndarray]
    loss_fn: object  # params dict -> float
    grad_fn: object  # (params dict, mode) -> dict of gradients
    control_groups: tuple[str, ...]


def _ode_instance(seed: int, n_steps: int, dt: float, samples: int, refine: int = 1) -> GradCheckInstance:
    """Random controlled-flow problem.

    ``refine`` resamples the same piecewise-constant controls on a finer
    grid, keeping the underlying continuous problem fixed.
    """
    rng = SeededRng(seed)
    m, n_cls = 2, 2
    a = np.tile(np.eye(m), (n_steps, 1, 1)) + rng.normal(0, 0.4, (n_steps, m, m))
    b = rng.normal(0, 0.3, (n_steps, m))
    omega = rng.normal(0, 0.8, (n_cls, m))
    bias = rng.normal(0, 0.1, n_cls)
    inputs = rng.uniform(-1, 1, (samples, m))
    labels = rng.integers(0, n_cls, samples)
    targets = np.eye(n_cls)[labels]

    params = {
        "a": np.repeat(a, refine, axis=0),
        "b": np.repeat(b, refine, axis=0),
        "omega": omega,
        "bias": bias,
    }
    grid = TimeGrid(0.0, dt / refine, n_steps * refine)

    def loss_fn(p):
        return ode_batch_pass(p, inputs, targets, grid, "discrete", want_grads=False).loss

    def grad_fn(p, mode):
        return ode_batch_pass(p, inputs, targets, grid, mode).grads

    return GradCheckInstance(params, loss_fn, grad_fn, ("a", "b"))


def _oeo_instance(
    seed: int, kind: str, m_tau: int, spans: int, samples: int, dt: float = 0.7, refine: int = 1
) -> GradCheckInstance:
    """Random oscillator problem at coarse sampling, optionally refined.

    All random ingredients are drawn at the coarse resolution; refinement
    reuses them (controls repeated, histories and readout weights linearly
    interpolated) so both resolutions discretize one continuous problem.
    The readout scale ~1/tau keeps softmax scores O(1), away from the
    clamped region of the loss where finite differences stop being
    informative.
    """
    rng = SeededRng(seed)
    n_cls = 10 if kind == "oeo_mnist" else 2
    coarse_grid = make_time_grid(-m_tau * dt, dt, (spans + 1) * m_tau, m_tau)
    if kind == "oeo_mnist":
        images = rng.uniform(0, 1, (samples, 3, 3))
        hist = data_mod.encode_image_histories(images, coarse_grid)
    else:
        points = rng.uniform(-1, 1, (samples, 2))
        hist = data_mod.encode_spiral_histories(points, coarse_grid)
    n_ev = coarse_grid.n_evolve
    base_u1, base_u2 = initial_oeo_controls(n_ev)
    u1 = base_u1 + rng.normal(0, 0.1, n_ev)
    u2 = base_u2 + rng.normal(0, 0.1, n_ev)
    omega = rng.normal(0, 1.0 / coarse_grid.tau, (m_tau + 1, n_cls))
    bias = rng.normal(0, 0.1, n_cls)
    labels = rng.integers(0, n_cls, samples)
    targets = np.eye(n_cls)[labels]

    grid = make_time_grid(-m_tau * dt, dt / refine, (spans + 1) * m_tau * refine, m_tau * refine)
    params = {
        "u1": np.repeat(u1, refine),
        "u2": np.repeat(u2, refine),
        "omega": _linear_refine(omega, refine, axis=0),
        "bias": bias,
    }
    hist = _linear_refine(hist, refine, axis=1)
    oeo = OeoParams()
    indices = np.arange(samples)

    def encode(idx):
        return hist[idx]

    def loss_fn(p):
        return oeo_batch_pass(
            p, oeo, encode, indices, targets, grid, "discrete", want_grads=False
        ).loss

    def grad_fn(p, mode):
        return oeo_batch_pass(p, oeo, encode, indices, targets, grid, mode).grads

    return GradCheckInstance(params, loss_fn, grad_fn, ("u1", "u2"))


def make_gradcheck_instance(kind: str, seed: int, n_steps: int = 12, refine: int = 1) -> GradCheckInstance:
    """A small random instance of the given experiment kind.

    ``n_steps`` bounds the work: the ODE instance uses it as its step count;
    delay instances derive a short delay line from it.
    """
    if kind == "ode_spiral":
        return _ode_instance(seed, n_steps, dt=0.05, samples=5, refine=refine)
    if kind == "oeo_spiral":
        m_tau = max(4, (n_steps // 4) * 2)
        return _oeo_instance(seed, kind, m_tau=m_tau, spans=3, samples=4, refine=refine)
    if kind == "oeo_mnist":
        m_tau = max(4, n_steps // 3)
        return _oeo_instance(seed, kind, m_tau=m_tau, spans=3, samples=3, refine=refine)
    raise ConfigError(f"unknown kind '{kind}'")


def _fd_gradient(loss_fn, params: dict, group: str, epsilon: float) -> np.ndarray:
    """Central finite differences of the loss over one parameter group."""
    base = params[group]
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        bumped = dict(params)
        bumped[group] = base.copy()
        bumped[group][idx] = base[idx] + epsilon
        high = loss_fn(bumped)
        bumped[group][idx] = base[idx] - epsilon
        low = loss_fn(bumped)
        grad[idx] = (high - low) / (2 * epsilon)
        it.iternext()
    return grad


def _relative_gap(candidate: np.ndarray, reference: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(reference))), 1e-30)
    return float(np.max(np.abs(candidate - reference)) / scale)


def gradient_check(kind: str, seed: int = 0, epsilon: float = 1e-6, n_steps: int = 12) -> dict:
    """Compare adjoint gradients against central finite differences.

    Returns ``{"fd": {mode: {group: err}}, "mode_gap": {group: gap}}``.
    ``err`` is the group's maximum absolute deviation from the
    finite-difference gradient, normalized by the largest finite-difference
    magnitude in the group. The discrete mode differentiates the integrator
    exactly, so its errors sit at finite-difference noise level; the
    continuous mode carries an O(dt) defect on the control groups, reported
    separately as ``mode_gap``.
    """
    inst = make_gradcheck_instance(kind, seed, n_steps)
    grads = {mode: inst.grad_fn(inst.params, mode) for mode in ("discrete", "continuous")}
    report = {"kind": kind, "seed": seed, "fd": {"discrete": {}, "continuous": {}}, "mode_gap": {}}
    for group in inst.params:
        fd = _fd_gradient(inst.loss_fn, inst.params, group, epsilon)
        for mode in ("discrete", "continuous"):
            report["fd"][mode][group] = _relative_gap(grads[mode][group], fd)
    for group in inst.control_groups:
        report["mode_gap"][group] = _relative_gap(
            grads["continuous"][group], grads["discrete"][group]
        )
    return report


def continuous_consistency(kind: str, seed: int = 0, n_steps: int = 12) -> dict:
    """Continuous-vs-discrete gradient gap at a base step size and half of it.

    One random continuous-time problem is discretized at two resolutions
    (see :func:`_oeo_instance` for how the refinement reuses the coarse
    draws). Reports the per-group relative gap at both resolutions and the
    ratio of the overall gaps; a first-order-consistent continuous adjoint
    gives a ratio near 2.
    """
    gaps = []
    for refine in (1, 2):
        inst = make_gradcheck_instance(kind, seed, n_steps, refine=refine)
        grads = {mode: inst.grad_fn(inst.params, mode) for mode in ("discrete", "continuous")}
        gaps.append(
            {
                group: _relative_gap(grads["continuous"][group], grads["discrete"][group])
                for group in inst.control_groups
            }
        )
    coarse, fine = gaps
    return {
        "kind": kind,
        "seed": seed,
        "coarse": coarse,
        "fine": fine,
        "ratio": max(coarse.values()) / max(max(fine.values()), 1e-300),
    }
