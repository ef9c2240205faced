"""Command-line entry point: ``fingernarx <command> [--config PATH] [--seed N] [--out DIR]``.

Every command writes its outputs into ``--out`` through write-then-rename
and prints one summary line per file. Failures print a single line
``fingernarx: error: <Kind>: <message>`` to stderr and exit nonzero
(2 for usage and configuration errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, derive_seed, dumps_config, load_config, parse_config, schema_summary
from .data import (
    SensorMode,
    TimeSeriesDataset,
    atomic_write_text,
    read_dataset_csv,
    split_sequential,
    write_dataset_csv,
)
from .errors import ConfigError, FingerNarxError
from .evaluation import mean_error, mse_curve, run_ablation, stability_ratio
from .narx import load_model, predict_dataset, save_model, train_open_loop
from .plant import random_actuation, simulate, workspace_grid
from .projection import (
    REFERENCE_COEFFICIENTS,
    CalibrationPoint,
    PixelObservation,
    fit_coefficients,
    generate_calibration_mesh,
    pixel_to_world,
    read_calibration_csv,
    read_coefficients,
    synthesize_observations,
    write_calibration_csv,
    write_coefficients,
)
from .tracker import read_positions_csv, track_directory, write_positions_csv

WORKSPACE_COLUMNS = ("p1", "p2", "x", "y", "z", "s1", "s2", "s_avg", "log2_ratio")


class Context:
    def __init__(self, cfg: RunConfig, out: Path, args: argparse.Namespace):
        self.cfg = cfg
        self.out = out
        self.args = args

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(path, text)
        print(f"wrote {path}")
        return path

    def path(self, name: str) -> Path:
        path = self.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def mode(self) -> SensorMode:
        return SensorMode(self.args.mode) if getattr(self.args, "mode", None) else self.cfg.mode

    def require(self, field: str) -> Path:
        path = getattr(self.cfg.paths, field)
        if path is None:
            raise ConfigError(f"field 'paths.{field}' is required by this command")
        if not path.exists():
            raise ConfigError(f"field 'paths.{field}': {path} does not exist")
        return path


def acquire(ctx: Context) -> TimeSeriesDataset:
    """Dataset from ``paths.dataset`` or, when unset, a fresh seeded simulation."""
    if ctx.cfg.paths.dataset is not None:
        return read_dataset_csv(ctx.require("dataset"))
    a = ctx.cfg.acquisition
    traj = random_actuation(
        a.duration_s,
        f1=a.sample_rate_hz,
        f2=a.switch_rate_hz,
        speed_bound=a.speed_bound,
        seed=derive_seed(ctx.cfg.seed, "actuation"),
    )
    return simulate(traj, ctx.cfg.plant_config())


def split(ctx: Context, ds: TimeSeriesDataset):
    return split_sequential(ds, ctx.cfg.acquisition.train_fraction)


def _csv(header: Sequence[str], rows: np.ndarray) -> str:
    lines = [",".join(header)] + [",".join(repr(float(v)) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def cmd_config(ctx: Context) -> None:
    sys.stdout.write(dumps_config(ctx.cfg))


def cmd_simulate(ctx: Context) -> None:
    ds = acquire(ctx)
    path = ctx.path("dataset.csv")
    write_dataset_csv(ds, path)
    print(f"wrote {path} ({len(ds)} rows, {ds.duration_s:g} s)")


def cmd_calibrate(ctx: Context) -> None:
    if ctx.cfg.paths.calibration is not None:
        points = read_calibration_csv(ctx.require("calibration"))
    else:
        points = synthesize_observations(generate_calibration_mesh(), REFERENCE_COEFFICIENTS)
        noise = ctx.cfg.calibration.noise_px
        if noise > 0:
            rng = np.random.default_rng(derive_seed(ctx.cfg.seed, "calibration"))
            points = [
                CalibrationPoint(
                    PixelObservation(
                        p.observation.x_px + rng.normal(0, noise),
                        p.observation.y_px + rng.normal(0, noise),
                        p.observation.area_px,
                    ),
                    p.world,
                )
                for p in points
            ]
        path = ctx.path("calibration.csv")
        write_calibration_csv(points, path)
        print(f"wrote {path} ({len(points)} points)")
    coeffs = fit_coefficients(points)
    path = ctx.path("coefficients.json")
    write_coefficients(coeffs, path)
    pred = np.array([pixel_to_world(p.observation, coeffs) for p in points])
    world = np.array([p.world for p in points])
    rms = float(np.sqrt(np.mean(np.sum((pred - world) ** 2, axis=1))))
    print(f"wrote {path} (reprojection rms {rms:.6g} mm)")


def cmd_track(ctx: Context) -> None:
    frames = ctx.require("frames")
    coeffs = read_coefficients(ctx.require("coefficients")) if ctx.cfg.paths.coefficients else REFERENCE_COEFFICIENTS
    positions = track_directory(frames, coeffs)
    path = ctx.path("positions.csv")
    write_positions_csv(positions, path)
    print(f"wrote {path} ({len(positions)} frames)")


def cmd_train(ctx: Context) -> None:
    mode = ctx.mode()
    train, _ = split(ctx, acquire(ctx))
    model, history = train_open_loop(train, ctx.cfg.narx_config(mode), mode)
    path = ctx.path(f"model_{mode.value}.json")
    save_model(model, path)
    print(f"wrote {path} (final train mse {history[-1]:.6g})")
    ctx.write(f"train_history_{mode.value}.csv", _csv(["epoch", "mse"], np.column_stack([np.arange(1, len(history) + 1), history])))


def cmd_rollout(ctx: Context) -> None:
    model = load_model(ctx.require("model"))
    if getattr(ctx.args, "mode", None) and SensorMode(ctx.args.mode) != model.mode:
        raise ConfigError(f"--mode {ctx.args.mode} does not match the model's mode {model.mode.value}")
    _, test = split(ctx, acquire(ctx))
    pred = predict_dataset(model, test, self_loop=not ctx.args.open_loop)
    loop = "open" if ctx.args.open_loop else "self"
    path = ctx.path(f"predictions_{model.mode.value}_{loop}.csv")
    write_positions_csv(pred, path)
    print(f"wrote {path} ({len(pred)} steps)")
    path = ctx.path("truth.csv")
    write_positions_csv(test.positions[model.config.delays :], path)
    print(f"wrote {path}")


def cmd_evaluate(ctx: Context) -> None:
    pred = read_positions_csv(ctx.require("predictions"))
    truth = read_positions_csv(ctx.require("truth"))
    metrics = mean_error(pred, truth).as_dict()
    if len(pred) >= 10:
        mse = mse_curve(pred, truth)
        metrics["stability_ratio"] = stability_ratio(mse) if np.mean(mse) > 0 else 1.0
    ctx.write("metrics.json", json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    print(" ".join(f"{k}={v:.6g}" for k, v in metrics.items()))


def cmd_ablation(ctx: Context) -> None:
    cfg = ctx.cfg
    train, test = split(ctx, acquire(ctx))
    report = run_ablation(
        train,
        test,
        cfg.narx_configs(),
        seed=cfg.seed,
        horizons_s=cfg.evaluation.horizons_s,
        horizon_stride_s=cfg.evaluation.stride_s,
        speedup_runs=cfg.evaluation.speedup_runs,
    )
    ctx.write("config.json", dumps_config(cfg))
    ctx.write("report.json", report.to_json())
    ctx.write("report.txt", report.to_text())
    ctx.write("workspace.csv", _csv(WORKSPACE_COLUMNS, workspace_grid(cfg.plant_config().noise_free())))
    ctx.write("error_bars.csv", report.bars_csv())
    ctx.write("paths.csv", report.paths_csv())
    for mode, res in report.results.items():
        ctx.write(f"mse_{mode.value}.csv", report.mse_csv(mode))
        ctx.write(f"horizon_{mode.value}.csv", res.horizon.to_csv())
        path = ctx.path(f"models/model_{mode.value}.json")
        save_model(res.model, path)
        print(f"wrote {path}")
    if report.speedups:
        ctx.write("timing.json", json.dumps(report.timing_dict(), indent=2, sort_keys=True) + "\n")
    sys.stdout.write(report.to_text())


COMMANDS: dict[str, tuple[Callable[[Context], None], str]] = {
    "config": (cmd_config, "print the effective configuration with all defaults"),
    "simulate": (cmd_simulate, "simulate the surrogate finger under random actuation -> dataset.csv"),
    "calibrate": (cmd_calibrate, "fit projection coefficients from paths.calibration (or a synthesized mesh)"),
    "track": (cmd_track, "track the blue pins in paths.frames -> positions.csv"),
    "train": (cmd_train, "train one estimator on the training split -> model_<mode>.json"),
    "rollout": (cmd_rollout, "predict the test split with paths.model -> predictions and truth CSVs"),
    "evaluate": (cmd_evaluate, "score paths.predictions against paths.truth -> metrics.json"),
    "ablation": (cmd_ablation, "train and compare all three sensor modes -> reports and plot data"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration (see the field list below)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
    epilog = "config fields and defaults:\n" + schema_summary()
    parser = _Parser(
        prog="fingernarx",
        description="Sensor-augmented NARX position estimation for a soft pneumatic finger.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"fingernarx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(
            name, parents=[common], help=help_text, description=help_text, epilog=epilog,
            formatter_class=argparse.RawDescriptionHelpFormatter,
        )
        if name in ("train", "rollout"):
            p.add_argument("--mode", choices=[m.value for m in SensorMode], help="sensor mode (default: config mode)")
        if name == "rollout":
            p.add_argument("--open-loop", action="store_true", help="feed true states back instead of predictions")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None:
        cfg = parse_config(args.config)
    elif args.seed is not None:
        cfg = load_config({"seed": args.seed})
    else:
        raise ConfigError("either --config or --seed is required; seeds are never taken from the clock")
    if args.seed is not None:
        cfg = load_config({**cfg.model_dump(mode="json"), "seed": args.seed})
    return cfg


def _fail(kind: str, message: str, code: int) -> int:
    text = " ".join(str(message).split())
    print(f"fingernarx: error: {kind}: {text}", file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as err:
        return _fail("UsageError", err, 2)
    try:
        cfg = resolve_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command][0](Context(cfg, args.out, args))
    except ConfigError as err:
        return _fail(type(err).__name__, err, 2)
    except (FingerNarxError, ValueError, OSError) as err:
        return _fail(type(err).__name__, err, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
