"""Run configuration: schema, file parsing, overrides, and identity hashing.

Config files are flat UTF-8 ``key = value`` text. Blank lines and ``#``
comments are ignored; unknown or duplicated keys are hard errors so typos in
sweep templates fail loudly instead of silently training the wrong thing.

The same key set feeds every experiment kind; kinds simply ignore keys that
do not apply to them (an ODE run never looks at ``beta``). Defaults are set
for the spiral experiments; image runs override grid, rates, and batching
explicitly (see the shipped demo configs).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

from dynlearn.errors import ConfigError
from dynlearn.numerics import TimeGrid, delay_grid, make_time_grid

KINDS = ("ode_spiral", "oeo_spiral", "oeo_mnist")
OPTIMIZERS = ("adam", "sgd")
GRADIENT_MODES = ("continuous", "discrete")

# Fields that do not affect the trained model's identity: excluded from the
# checkpoint config hash so a checkpoint can be evaluated from any machine
# layout. chunk_size stays IN the hash because it changes reduction order and
# therefore the exact floats a training run produces.
EXECUTION_FIELDS = ("metrics_path", "checkpoint_path", "threads")

MNIST_DIR_ENV = "MNIST_DIR"
MNIST_DEFAULT_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


@dataclass(frozen=True)
class TrainConfig:
    # experiment selection
    kind: str = "ode_spiral"
    seed: int = 0
    epochs: int = 300
    batch_size: int = 0  # 0 = full batch
    gradient_mode: str = "continuous"
    optimizer: str = "adam"
    # learning rates (per parameter group) and Adam constants
    alpha_u: float = 1e-2
    alpha_omega: float = 1e-2
    alpha_bias: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    # execution
    threads: int = 1
    chunk_size: int = 250
    metrics_path: str = ""
    checkpoint_path: str = ""
    divergence_bound: float = 1e6
    drop_diverged: bool = False
    # ODE grid
    dt: float = 0.01
    t_steps: int = 200
    # oscillator physics and grid (times in microseconds)
    beta: float = 3.0
    tau_us: float = 230.0
    tau_h_us: float = 1590.0
    tau_l_us: float = 15.9
    m_tau: int = 3286
    t_over_tau: int = 5
    # spiral data
    train_per_class: int = 500
    test_per_class: int = 500
    noise_sd: float = 0.025
    turns: float = 1.5
    # image data (IDX files); empty paths fall back to mnist_dir, then $MNIST_DIR
    mnist_dir: str = ""
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    train_limit: int = 10000
    test_limit: int = 2000


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_BOOL_TRUE = {"true", "1", "yes", "on"}
_BOOL_FALSE = {"false", "0", "no", "off"}


def _coerce(key: str, raw: str):
    ftype = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if ftype in ("bool", bool):
            low = raw.lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if ftype in ("int", int):
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for '{key}': {exc}") from exc


def validate_config(config: TrainConfig) -> TrainConfig:
    """Check value ranges; returns the config for chaining."""
    c = config
    if c.kind not in KINDS:
        raise ConfigError(f"unknown kind '{c.kind}', expected one of {KINDS}")
    if c.gradient_mode not in GRADIENT_MODES:
        raise ConfigError(
            f"unknown gradient_mode '{c.gradient_mode}', expected one of {GRADIENT_MODES}"
        )
    if c.optimizer not in OPTIMIZERS:
        raise ConfigError(f"unknown optimizer '{c.optimizer}', expected one of {OPTIMIZERS}")
    positive = [
        ("epochs", c.epochs),
        ("threads", c.threads),
        ("chunk_size", c.chunk_size),
        ("dt", c.dt),
        ("t_steps", c.t_steps),
        ("tau_us", c.tau_us),
        ("tau_h_us", c.tau_h_us),
        ("tau_l_us", c.tau_l_us),
        ("m_tau", c.m_tau),
        ("t_over_tau", c.t_over_tau),
        ("train_per_class", c.train_per_class),
        ("test_per_class", c.test_per_class),
        ("alpha_u", c.alpha_u),
        ("alpha_omega", c.alpha_omega),
        ("alpha_bias", c.alpha_bias),
        ("divergence_bound", c.divergence_bound),
    ]
    for name, value in positive:
        if not value > 0:
            raise ConfigError(f"{name} must be positive, got {value}")
    for name, value in [
        ("batch_size", c.batch_size),
        ("train_limit", c.train_limit),
        ("test_limit", c.test_limit),
        ("noise_sd", c.noise_sd),
    ]:
        if value < 0:
            raise ConfigError(f"{name} must be >= 0, got {value}")
    if c.kind == "oeo_spiral" and c.m_tau % 2 != 0:
        raise ConfigError(
            f"m_tau must be even for the spiral history split, got {c.m_tau}"
        )
    return c


def parse_config_text(text: str, source: str = "<config>") -> TrainConfig:
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown config key '{key}'")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate config key '{key}'")
        values[key] = _coerce(key, raw)
    return validate_config(TrainConfig(**values))


def load_config(path) -> TrainConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def apply_overrides(config: TrainConfig, overrides: dict[str, str]) -> TrainConfig:
    """Replace fields by name with string values coerced like file parsing."""
    updates = {}
    for key, raw in overrides.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key '{key}'")
        updates[key] = _coerce(key, str(raw))
    return validate_config(dataclasses.replace(config, **updates))


def config_to_json(config: TrainConfig) -> str:
    return json.dumps(dataclasses.asdict(config), sort_keys=True)


def config_from_json(text: str) -> TrainConfig:
    try:
        values = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad config JSON: {exc}") from exc
    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys in JSON: {sorted(unknown)}")
    return validate_config(TrainConfig(**values))


def config_hash(config: TrainConfig) -> str:
    """SHA-256 over every identity-relevant field (see EXECUTION_FIELDS)."""
    payload = dataclasses.asdict(config)
    for name in EXECUTION_FIELDS:
        payload.pop(name, None)
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def build_grid(config: TrainConfig) -> TimeGrid:
    """The integration grid implied by the config's kind."""
    if config.kind == "ode_spiral":
        return make_time_grid(0.0, config.dt, config.t_steps)
    return delay_grid(config.tau_us, config.m_tau, config.t_over_tau)


def resolve_mnist_paths(config: TrainConfig) -> dict[str, str]:
    """Locate the four IDX files from explicit keys, mnist_dir, or $MNIST_DIR.

    Explicit per-file keys win; otherwise files are looked up by their
    official names inside ``mnist_dir`` (or the environment directory),
    accepting a ``.gz`` variant when the plain file is absent. Raises
    :class:`ConfigError` naming the first missing file.
    """
    base = config.mnist_dir or os.environ.get(MNIST_DIR_ENV, "")
    paths = {}
    for key, default_name in MNIST_DEFAULT_NAMES.items():
        explicit = getattr(config, key)
        if explicit:
            paths[key] = explicit
            continue
        if not base:
            raise ConfigError(
                f"no path for {key}: set the '{key}' key, 'mnist_dir', or ${MNIST_DIR_ENV}"
            )
        candidate = os.path.join(base, default_name)
        if os.path.exists(candidate):
            paths[key] = candidate
        elif os.path.exists(candidate + ".gz"):
            paths[key] = candidate + ".gz"
        else:
            raise ConfigError(f"IDX file not found: {candidate}[.gz]")
    for key, path in paths.items():
        if not os.path.exists(path):
            raise ConfigError(f"IDX file not found: {path}")
    return paths
