"""Command-line front end.

Subcommands: ``train``, ``eval``, ``sweep``, ``gradcheck``, ``gendata``,
``correlations``, ``trajdump``. Exit codes: 0 success, 1 usage error
(bad flags, bad config), 2 runtime failure (missing files, divergence,
checkpoint mismatch).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from dynlearn import analysis, data as data_mod, training
from dynlearn.config import TrainConfig, apply_overrides, load_config
from dynlearn.errors import CheckpointError, ConfigError, DataFormatError, DivergenceError
from dynlearn.numerics import SeededRng


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code contract."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="dynlearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default=None, help="metrics CSV path (overrides config)")
    p.add_argument("--checkpoint", default=None, help="checkpoint path (overrides config)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on its test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--config", default=None, help="optional config; must hash-match the checkpoint")
    p.add_argument("--out", default=None, help="per-sample CSV path")

    p = sub.add_parser("sweep", help="train a model per grid cell over 1-2 config axes")
    p.add_argument("--config", required=True, help="base config file")
    p.add_argument(
        "--axis", action="append", required=True, metavar="KEY=V1,V2,...",
        help="sweep axis (repeat for a second axis)",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("gradcheck", help="finite-difference check of the adjoint gradients")
    p.add_argument("--kind", default="ode_spiral",
                   choices=("ode_spiral", "oeo_spiral", "oeo_mnist"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=12)
    p.add_argument("--out", default=None, help="report CSV path")

    p = sub.add_parser("gendata", help="generate a dataset file")
    p.add_argument("what", choices=("spirals",))
    p.add_argument("--per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=float, default=0.025)
    p.add_argument("--turns", type=float, default=1.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("correlations", help="readout/signal correlation values from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--out", required=True)

    p = sub.add_parser("trajdump", help="dump state trajectories from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", default="0", metavar="I,J,...")
    p.add_argument("--times", default=None, metavar="T1,T2,...")
    p.add_argument("--all-times", action="store_true")
    p.add_argument("--cloud", action="store_true",
                   help="dump every dataset sample at the selected times (ODE only)")
    p.add_argument("--out", required=True)

    return parser


def _config_with_args(args) -> TrainConfig:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    if args.out is not None:
        overrides["metrics_path"] = args.out
    if args.checkpoint is not None:
        overrides["checkpoint_path"] = args.checkpoint
    return apply_overrides(config, overrides) if overrides else config


def _cmd_train(args) -> int:
    config = _config_with_args(args)
    result = training.train(config)
    last = result.metrics.rows[-1]
    print(
        f"trained {config.kind} for {config.epochs} epochs: "
        f"train_loss {last[1]:.6f} test_acc {last[4]:.4f}"
    )
    if config.metrics_path:
        print(f"metrics written to {config.metrics_path}")
    if config.checkpoint_path:
        print(f"checkpoint written to {config.checkpoint_path}")
    return 0


def _cmd_eval(args) -> int:
    expected = load_config(args.config) if args.config else None
    config, params, _ = training.load_checkpoint(args.checkpoint, expected)
    _, test_set = training.build_datasets(config)
    report = training.evaluate(params, test_set, config)
    print(f"eval {config.kind}: loss {report.loss:.6f} accuracy {report.accuracy:.4f}")
    if args.out:
        outputs = report.per_sample_outputs
        columns = ["sample_id", "label", "predicted"] + [f"y{l}" for l in range(outputs.shape[1])]
        predicted = np.argmax(outputs, axis=1)
        rows = [
            (k, int(test_set.labels[k]), int(predicted[k]), *(repr(float(v)) for v in outputs[k]))
            for k in range(len(test_set))
        ]
        analysis.write_csv(args.out, columns, rows)
        print(f"per-sample outputs written to {args.out}")
    return 0


def _parse_axes(raw_axes) -> list[tuple[str, list[str]]]:
    axes = []
    for raw in raw_axes:
        key, sep, values = raw.partition("=")
        if not sep or not key or not values:
            raise _UsageError(f"bad --axis '{raw}', expected KEY=V1,V2,...")
        axes.append((key, values.split(",")))
    if len(axes) > 2:
        raise _UsageError("at most two sweep axes are supported")
    return axes


def _cmd_sweep(args) -> int:
    base = load_config(args.config)
    axes = _parse_axes(args.axis)
    rows = analysis.run_sweep(base, axes, threads=args.threads)
    analysis.write_csv(args.out, analysis.SWEEP_COLUMNS, rows)
    print(f"sweep of {len(rows)} cells written to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    report = training.gradient_check(args.kind, seed=args.seed, n_steps=args.steps)
    rows = []
    for mode in ("discrete", "continuous"):
        for group, err in report["fd"][mode].items():
            rows.append((f"fd_{mode}", group, repr(err)))
    for group, gap in report["mode_gap"].items():
        rows.append(("mode_gap", group, repr(gap)))
    for metric, group, value in rows:
        print(f"{metric:15s} {group:6s} {float(value):.3e}")
    if args.out:
        analysis.write_csv(args.out, ("metric", "group", "value"), rows)
        print(f"report written to {args.out}")
    worst = max(report["fd"]["discrete"].values())
    print(f"worst discrete-mode error vs finite differences: {worst:.3e}")
    return 0


def _cmd_gendata(args) -> int:
    dataset = data_mod.generate_spirals(
        args.per_class, SeededRng(args.seed), noise_sd=args.noise_sd, turns=args.turns
    )
    data_mod.save_spirals_csv(dataset, args.out)
    print(f"{len(dataset)} spiral points written to {args.out}")
    return 0


def _cmd_correlations(args) -> int:
    config, params, _ = training.load_checkpoint(args.checkpoint)
    _, test_set = training.build_datasets(config)
    records = analysis.correlation_values(config, params, test_set, args.instances)
    analysis.write_csv(
        args.out,
        analysis.CORRELATION_COLUMNS,
        [(l, c, repr(z)) for l, c, z in records],
    )
    print(f"{len(records)} correlation records written to {args.out}")
    return 0


def _parse_float_list(raw) -> list[float]:
    if raw is None or raw.strip() == "":
        return []
    try:
        return [float(x) for x in raw.split(",")]
    except ValueError as exc:
        raise _UsageError(f"bad --times '{raw}': {exc}") from exc


def _cmd_trajdump(args) -> int:
    config, params, _ = training.load_checkpoint(args.checkpoint)
    _, test_set = training.build_datasets(config)
    try:
        sample_ids = [int(s) for s in args.samples.split(",") if s != ""]
    except ValueError as exc:
        raise _UsageError(f"bad --samples '{args.samples}': {exc}") from exc
    if args.all_times:
        from dynlearn.config import build_grid

        times = list(build_grid(config).times())
    else:
        times = _parse_float_list(args.times)
    rows = analysis.trajectory_dump(config, params, test_set, sample_ids, times, cloud=args.cloud)
    analysis.write_csv(args.out, analysis.TRAJDUMP_COLUMNS, rows)
    print(f"{len(rows)} trajectory rows written to {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "gradcheck": _cmd_gradcheck,
    "gendata": _cmd_gendata,
    "correlations": _cmd_correlations,
    "trajdump": _cmd_trajdump,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (_UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, DivergenceError, CheckpointError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
