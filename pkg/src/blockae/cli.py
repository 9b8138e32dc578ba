"""Command-line entry point tying the modules into reproducible experiments.

Commands: ``train`` (fit a model from a JSON config), ``sweep`` (BER curve
for a checkpoint or a classical baseline), ``constellation`` (transmit and
cluster), ``plot`` (merge exported curves into one figure). Every command
writes a resolved-config snapshot into its run directory.

Exit codes: 0 success, 2 config/validation error, 3 training failure,
4 degenerate result, 1 unexpected error.
"""

from __future__ import annotations

import argparse
import importlib.resources
import json
import os
import sys
import time
import traceback
from pathlib import Path

from . import channel as ch
from . import evaluator, framing, trainer
from .errors import (DegenerateConstellationError, DegenerateInputError,
                     IncompatibleCheckpointError, TrainingDivergedError)
from .model import LinkConfig

CONFIG_VERSION = 1
OUT_ROOT_ENV = "BLOCKAE_OUT_ROOT"

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_DEGENERATE = 4


class ConfigError(ValueError):
    pass


def _require_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _load_config_file(spec: str) -> dict:
    """Read a config by path, or by bundled name (no separator, no suffix)."""
    path = Path(spec)
    if path.suffix != ".json" and os.sep not in spec and "/" not in spec:
        resource = importlib.resources.files("blockae").joinpath(f"configs/{spec}.json")
        if not resource.is_file():
            raise ConfigError(f"no bundled config named {spec!r}")
        return json.loads(resource.read_text())
    if not path.is_file():
        raise ConfigError(f"config file not found: {spec}")
    return json.loads(path.read_text())


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and materialize every default."""
    _require_keys(raw, {"config_version", "link", "channel", "dataset", "trainer", "eval"},
                  "config")
    version = raw.get("config_version")
    if version != CONFIG_VERSION:
        raise ConfigError(f"config_version must be {CONFIG_VERSION}, got {version!r}")
    if "link" not in raw:
        raise ConfigError("config requires a 'link' section")
    try:
        link = LinkConfig.from_dict(raw["link"])
        profile = ch.profile_from_config(raw.get("channel", {"kind": "awgn"}))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    dataset = dict(raw.get("dataset", {}))
    _require_keys(dataset, {"train_frames", "test_frames"}, "dataset")
    dataset = {"train_frames": int(dataset.get("train_frames", 40000)),
               "test_frames": int(dataset.get("test_frames", 10000))}

    tr = dict(raw.get("trainer", {}))
    _require_keys(tr, {"batch_size", "learning_rate", "epochs", "train_eb_n0_db", "adam",
                       "early_stop_patience", "val_fraction", "seeds"}, "trainer")
    adam = dict(tr.get("adam", {}))
    _require_keys(adam, {"beta1", "beta2", "eps"}, "trainer.adam")
    seeds = dict(tr.get("seeds", {}))
    _require_keys(seeds, {"init", "data", "noise", "shuffle"}, "trainer.seeds")
    patience = tr.get("early_stop_patience", 10)
    tcfg = trainer.TrainConfig(
        batch_size=int(tr.get("batch_size", 64)),
        learning_rate=float(tr.get("learning_rate", 1e-3)),
        adam=trainer.AdamParams(beta1=float(adam.get("beta1", 0.9)),
                                beta2=float(adam.get("beta2", 0.999)),
                                eps=float(adam.get("eps", 1e-8))),
        epochs=int(tr.get("epochs", 100)),
        train_eb_n0_db=float(tr.get("train_eb_n0_db", 12.0)),
        channel=profile,
        seeds=trainer.TrainSeeds(init=int(seeds.get("init", 0)), data=int(seeds.get("data", 1)),
                                 noise=int(seeds.get("noise", 2)),
                                 shuffle=int(seeds.get("shuffle", 3))),
        early_stop_patience=None if patience is None else int(patience),
        val_fraction=float(tr.get("val_fraction", 0.1)),
    )

    ev = dict(raw.get("eval", {}))
    _require_keys(ev, {"grid_db", "min_errors", "max_bits", "seed"}, "eval")
    ev = {"grid_db": [float(g) for g in ev.get("grid_db", [0, 2, 4, 6, 8, 10, 12])],
          "min_errors": int(ev.get("min_errors", evaluator.DEFAULT_MIN_ERRORS)),
          "max_bits": int(ev.get("max_bits", evaluator.DEFAULT_MAX_BITS)),
          "seed": int(ev.get("seed", 12345))}

    return {
        "config_version": CONFIG_VERSION,
        "link": link.to_dict(),
        "channel": ch.profile_to_config(profile),
        "dataset": dataset,
        "trainer": {
            "batch_size": tcfg.batch_size,
            "learning_rate": tcfg.learning_rate,
            "epochs": tcfg.epochs,
            "train_eb_n0_db": tcfg.train_eb_n0_db,
            "adam": vars(tcfg.adam),
            "early_stop_patience": tcfg.early_stop_patience,
            "val_fraction": tcfg.val_fraction,
            "seeds": vars(tcfg.seeds),
        },
        "eval": ev,
    }


def _materialize(resolved: dict) -> tuple[LinkConfig, ch.ChannelProfile, trainer.TrainConfig]:
    link = LinkConfig.from_dict(resolved["link"])
    profile = ch.profile_from_config(resolved["channel"])
    tr = resolved["trainer"]
    tcfg = trainer.TrainConfig(
        batch_size=tr["batch_size"], learning_rate=tr["learning_rate"],
        adam=trainer.AdamParams(**tr["adam"]), epochs=tr["epochs"],
        train_eb_n0_db=tr["train_eb_n0_db"], channel=profile,
        seeds=trainer.TrainSeeds(**tr["seeds"]),
        early_stop_patience=tr["early_stop_patience"], val_fraction=tr["val_fraction"])
    return link, profile, tcfg


def _make_run_dir(out: str | None, tag: str) -> Path:
    if out:
        run_dir = Path(out)
    else:
        root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
        run_dir = root / f"{time.strftime('%Y%m%d-%H%M%S')}-{tag}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _write_snapshot(run_dir: Path, payload: dict) -> None:
    (run_dir / "resolved_config.json").write_text(json.dumps(payload, indent=2) + "\n")


def _parse_grid(text: str) -> list[float]:
    """'start:stop:step' inclusive of stop when it lands on the grid."""
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"grid must look like 'start:stop:step', got {text!r}") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"grid needs step > 0 and stop >= start, got {text!r}")
    grid = []
    value = start
    while value <= stop + 1e-9:
        grid.append(round(value, 9))
        value += step
    return grid


def cmd_train(args) -> int:
    resolved = resolve_config(_load_config_file(args.config))
    if args.seed is not None:
        resolved["trainer"]["seeds"] = vars(trainer.TrainSeeds.from_base(args.seed))
    link, _, tcfg = _materialize(resolved)
    run_dir = _make_run_dir(args.out, "train")
    _write_snapshot(run_dir, resolved)
    dataset = framing.generate_dataset(resolved["dataset"]["train_frames"],
                                       link.bits_per_block, link.block_count,
                                       tcfg.seeds.data, role="train")
    print(f"training {link.digest()} for up to {tcfg.epochs} epochs "
          f"at {tcfg.train_eb_n0_db} dB on {len(dataset)} frames")
    tx, rx, history = trainer.train(link, tcfg, dataset)
    trainer.save_checkpoint(tx, rx, history, run_dir / "checkpoint.npz", seeds=tcfg.seeds)
    history.to_csv(run_dir / "history.csv")
    print(f"best epoch {history.best_epoch} "
          f"(val BER {history.val_ber[history.best_epoch - 1]:.3e}); wrote {run_dir}")
    return EXIT_OK


def _sweep_system(args, resolved):
    if args.checkpoint:
        tx, rx, _ = trainer.load_checkpoint(args.checkpoint)
        return evaluator.AutoencoderSystem(tx, rx)
    link = LinkConfig.from_dict(resolved["link"])
    return evaluator.BaselineSystem(args.baseline, link)


def cmd_sweep(args) -> int:
    if bool(args.checkpoint) == bool(args.baseline):
        raise ConfigError("pass exactly one of --checkpoint or --baseline")
    if args.checkpoint and not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    base = _load_config_file(args.config) if args.config else \
        {"config_version": 1, "link": {"bits_per_block": 6, "block_count": 50,
                                       "symbol_count": 50}}
    resolved = resolve_config(base)
    if args.channel:
        resolved["channel"] = ch.profile_to_config(_parse_channel(args.channel))
    profile = ch.profile_from_config(resolved["channel"])
    grid = _parse_grid(args.grid) if args.grid else resolved["eval"]["grid_db"]
    seed = args.seed if args.seed is not None else resolved["eval"]["seed"]
    min_errors = args.min_errors or resolved["eval"]["min_errors"]
    max_bits = args.max_bits or resolved["eval"]["max_bits"]

    system = _sweep_system(args, resolved)
    resolved["link"] = system.link.to_dict()
    dataset = None
    if args.paper_faithful:
        dataset = framing.generate_dataset(resolved["dataset"]["test_frames"],
                                           system.link.bits_per_block,
                                           system.link.block_count, seed + 1, role="test")
    run_dir = _make_run_dir(args.out, f"sweep-{system.label}")
    _write_snapshot(run_dir, {**resolved,
                              "sweep": {"system": system.label, "grid_db": grid, "seed": seed,
                                        "min_errors": min_errors, "max_bits": max_bits,
                                        "paper_faithful": bool(args.paper_faithful)}})
    curve = evaluator.sweep(system, profile, grid, min_errors=min_errors,
                            max_bits=max_bits, seed=seed, dataset=dataset)
    out_csv = run_dir / "ber.csv"
    evaluator.export_curve(curve, out_csv)
    for p in curve.points:
        print(f"{p.eb_n0_db:6.1f} dB  ber {p.ber:.3e}  ({p.bit_errors} errors / "
              f"{p.bits_simulated} bits)")
    print(f"wrote {out_csv}")
    return EXIT_OK


def _parse_channel(text: str) -> ch.ChannelProfile:
    if text in ch.NAMED_PROFILES:
        return ch.NAMED_PROFILES[text]()
    path = Path(text)
    if path.is_file():
        return ch.profile_from_config(json.loads(path.read_text()))
    raise ConfigError(f"channel must be one of {sorted(ch.NAMED_PROFILES)} or a JSON file, "
                      f"got {text!r}")


def cmd_constellation(args) -> int:
    if not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    tx, rx, _ = trainer.load_checkpoint(args.checkpoint)
    system = evaluator.AutoencoderSystem(tx, rx)
    if system.link.code_rate != 1.0:
        print(f"warning: constellation of a rate-{system.link.code_rate:.3g} model; "
              f"symbols mix coded and modulated structure", file=sys.stderr)
    run_dir = _make_run_dir(args.out, "constellation")
    _write_snapshot(run_dir, {"checkpoint": str(args.checkpoint), "frames": args.frames,
                              "seed": args.seed, "link": system.link.to_dict()})
    cloud = evaluator.extract_constellation(system, args.frames, args.seed)
    evaluator.export_cloud(cloud, run_dir / "cloud.csv")
    evaluator.export_cluster_report(cloud, run_dir / "clusters.json")
    evaluator.plot_cloud(cloud, run_dir / "constellation.png")
    print(f"{cloud.cluster_count} clusters, capture {cloud.capture_fraction:.4f}, "
          f"mean power {cloud.mean_power:.6f}; wrote {run_dir}")
    return EXIT_OK


def cmd_plot(args) -> int:
    curves = [evaluator.load_curve(p) for p in args.curves]
    evaluator.plot_curves(curves, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockae",
                                     description="Block autoencoder link experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON config")
    p_train.add_argument("--config", required=True,
                         help="config path or bundled name (e.g. desk_awgn_r1)")
    p_train.add_argument("--seed", type=int, help="override all trainer seeds from one base")
    p_train.add_argument("--out", help="run directory (default: timestamped under "
                                       f"${OUT_ROOT_ENV} or ./runs)")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="measure a BER curve")
    p_sweep.add_argument("--checkpoint", help="trained model checkpoint (.npz)")
    p_sweep.add_argument("--baseline", choices=sorted(evaluator.BaselineSystem.KINDS),
                         help="classical system instead of a checkpoint")
    p_sweep.add_argument("--config", help="config providing link/eval defaults")
    p_sweep.add_argument("--channel", help="awgn, fading-a, fading-b, or a profile JSON file")
    p_sweep.add_argument("--grid", help="Eb/N0 grid as start:stop:step (dB)")
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--min-errors", type=int, dest="min_errors")
    p_sweep.add_argument("--max-bits", type=int, dest="max_bits")
    p_sweep.add_argument("--paper-faithful", action="store_true", dest="paper_faithful",
                         help="evaluate one pass over the fixed test set instead of streaming")
    p_sweep.add_argument("--out")
    p_sweep.set_defaults(func=cmd_sweep)

    p_const = sub.add_parser("constellation", help="extract and cluster transmitter output")
    p_const.add_argument("--checkpoint", required=True)
    p_const.add_argument("--frames", type=int, default=200)
    p_const.add_argument("--seed", type=int, default=0)
    p_const.add_argument("--out")
    p_const.set_defaults(func=cmd_constellation)

    p_plot = sub.add_parser("plot", help="merge exported BER CSVs into one figure")
    p_plot.add_argument("--curves", nargs="+", required=True)
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DegenerateConstellationError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (ConfigError, ValueError, json.JSONDecodeError, IncompatibleCheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception:
        traceback.print_exc()
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
