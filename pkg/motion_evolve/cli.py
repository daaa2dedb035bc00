"""Command-line interface for motion-evolve."""

from __future__ import annotations

import argparse
import json
import logging
from collections.abc import Callable, Sequence
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .const import (
    DEFAULT_CLIP_LENGTH,
    DEFAULT_CLIPS_PER_IDENTITY,
    DEFAULT_FRAME_SIZE,
    DEFAULT_NUM_REFS,
    DEFAULT_TEST_IDENTITIES,
    DEFAULT_TRAIN_IDENTITIES,
    METRIC_AKD,
    TASK_ANIMATION,
    TASK_RECONSTRUCTION,
)
from .coordinator import TrainingCoordinator, train
from .data import SpriteSceneConfig, VideoClip, build_dataset, load_dataset, save_dataset
from .diagnostics import write_diagnostics
from .exceptions import InvalidArgumentError, MotionEvolveError
from .experiments import run_ablations, run_reference_sweep
from .frames import load_frames, save_frames
from .metrics import ALL_METRICS, compute_report

_LOGGER = logging.getLogger(__name__)

REPORT_NAME = "report.json"
DIAGNOSTICS_NAME = "diagnostics.json"


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from err


def _name_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _evaluate_metrics(text: str) -> list[str]:
    names = _name_list(text)
    if METRIC_AKD in names:
        raise argparse.ArgumentTypeError(
            f"{METRIC_AKD} needs keypoints, which plain frame directories do not carry"
        )
    unknown = sorted(set(names) - set(ALL_METRICS))
    if unknown:
        raise argparse.ArgumentTypeError(f"unknown metrics: {', '.join(unknown)}")
    return names


def _clip_from_directory(directory: Path) -> VideoClip:
    return VideoClip(
        identity=directory.parent.name or "clip",
        name=directory.name,
        split="",
        frames=load_frames(directory),
    )


def _cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    dataset = load_dataset(args.data)
    checkpoint, losses = train(dataset, config)
    save_checkpoint(checkpoint, args.out)
    curve = args.out.with_suffix(".losses.json")
    curve.write_text(json.dumps([r.to_dict() for r in losses], indent=2), encoding="utf-8")
    _LOGGER.info("Wrote loss curve to %s", curve)
    return 0


def _cmd_reconstruct(args: argparse.Namespace) -> int:
    coordinator = TrainingCoordinator.from_checkpoint(load_checkpoint(args.ckpt))
    result = coordinator.reconstruct(_clip_from_directory(args.clip), args.refs)
    save_frames(result.frames, args.out)
    result.report.save(args.out / REPORT_NAME)
    write_diagnostics(result.diagnostics, args.out / DIAGNOSTICS_NAME)
    print(result.report.to_json())
    return 0


def _cmd_animate(args: argparse.Namespace) -> int:
    coordinator = TrainingCoordinator.from_checkpoint(load_checkpoint(args.ckpt))
    result = coordinator.animate(
        _clip_from_directory(args.source_clip),
        _clip_from_directory(args.driving_clip),
        args.refs,
    )
    save_frames(result.frames, args.out)
    result.report.save(args.out / REPORT_NAME)
    write_diagnostics(result.diagnostics, args.out / DIAGNOSTICS_NAME)
    print(result.report.to_json())
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    generated = load_frames(args.gen)
    real = load_frames(args.real)
    if real.shape[0] == generated.shape[0] + 1:
        # generated clips start at the second driving frame
        real = real[1:]
    if real.shape != generated.shape:
        raise InvalidArgumentError(
            f"Generated {tuple(generated.shape)} and real {tuple(real.shape)} clips differ"
        )
    report = compute_report(
        args.task,
        generated,
        real,
        metrics=args.metrics,
        identifiers={"generated": str(args.gen), "real": str(args.real)},
    )
    if args.out is not None:
        report.save(args.out)
    print(report.to_json())
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    table = run_ablations(load_dataset(args.data), load_config(args.config))
    table.save(args.out)
    print(table.format_text())
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    reports = run_reference_sweep(load_dataset(args.data), load_checkpoint(args.ckpt), args.n)
    document = {str(count): report.to_dict() for count, report in reports.items()}
    text = json.dumps(document, indent=2, sort_keys=True)
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    print(text)
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    dataset = build_dataset(
        args.seed,
        SpriteSceneConfig(frame_size=args.frame_size, clip_length=args.clip_length),
        train_identities=args.train_identities,
        test_identities=args.test_identities,
        clips_per_identity=args.clips_per_identity,
    )
    save_dataset(dataset, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(
        prog="motion-evolve",
        description="Keypoint motion transfer with evolved dense motion and multi-view fusion.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    cmd = sub.add_parser("train", help="train a model on a sprite dataset")
    cmd.add_argument("--config", type=Path, default=None, help="JSON config file")
    cmd.add_argument("--data", type=Path, required=True, help="dataset root")
    cmd.add_argument("--out", type=Path, required=True, help="checkpoint file to write")
    cmd.set_defaults(handler=_cmd_train)

    cmd = sub.add_parser("reconstruct", help="reconstruct a clip from its first frame")
    cmd.add_argument("--ckpt", type=Path, required=True)
    cmd.add_argument("--clip", type=Path, required=True, help="frame directory")
    cmd.add_argument("--refs", type=int, default=DEFAULT_NUM_REFS, help="reference views N")
    cmd.add_argument("--out", type=Path, required=True, help="output frame directory")
    cmd.set_defaults(handler=_cmd_reconstruct)

    cmd = sub.add_parser("animate", help="drive a source clip with another clip's motion")
    cmd.add_argument("--ckpt", type=Path, required=True)
    cmd.add_argument("--source-clip", type=Path, required=True)
    cmd.add_argument("--driving-clip", type=Path, required=True)
    cmd.add_argument("--refs", type=int, default=DEFAULT_NUM_REFS, help="reference views N")
    cmd.add_argument("--out", type=Path, required=True, help="output frame directory")
    cmd.set_defaults(handler=_cmd_animate)

    cmd = sub.add_parser("evaluate", help="compare generated frames with real frames")
    cmd.add_argument("--gen", type=Path, required=True)
    cmd.add_argument("--real", type=Path, required=True)
    cmd.add_argument(
        "--metrics",
        type=_evaluate_metrics,
        default=[m for m in ALL_METRICS if m != METRIC_AKD],
        help=f"comma-separated metric names; {METRIC_AKD} is not available",
    )
    cmd.add_argument(
        "--task", choices=(TASK_RECONSTRUCTION, TASK_ANIMATION), default=TASK_RECONSTRUCTION
    )
    cmd.add_argument("--out", type=Path, default=None, help="report file to write")
    cmd.set_defaults(handler=_cmd_evaluate)

    cmd = sub.add_parser("ablate", help="train and evaluate every ablation preset")
    cmd.add_argument("--config", type=Path, default=None)
    cmd.add_argument("--data", type=Path, required=True)
    cmd.add_argument("--out", type=Path, required=True, help="table file to write")
    cmd.set_defaults(handler=_cmd_ablate)

    cmd = sub.add_parser("sweep-refs", help="evaluate one model at several reference counts")
    cmd.add_argument("--ckpt", type=Path, required=True)
    cmd.add_argument("--data", type=Path, required=True)
    cmd.add_argument("--n", type=_int_list, default=[1, 2, 3], help="e.g. 1,2,3")
    cmd.add_argument("--out", type=Path, default=None)
    cmd.set_defaults(handler=_cmd_sweep)

    cmd = sub.add_parser("generate-data", help="write a synthetic sprite dataset")
    cmd.add_argument("--out", type=Path, required=True, help="dataset root")
    cmd.add_argument("--seed", type=int, default=0)
    cmd.add_argument("--frame-size", type=int, default=DEFAULT_FRAME_SIZE)
    cmd.add_argument("--clip-length", type=int, default=DEFAULT_CLIP_LENGTH)
    cmd.add_argument("--train-identities", type=int, default=DEFAULT_TRAIN_IDENTITIES)
    cmd.add_argument("--test-identities", type=int, default=DEFAULT_TEST_IDENTITIES)
    cmd.add_argument("--clips-per-identity", type=int, default=DEFAULT_CLIPS_PER_IDENTITY)
    cmd.set_defaults(handler=_cmd_generate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run the command line; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except MotionEvolveError as err:
        _LOGGER.error("%s", err)
        return 1
