"""Command-line entry point for the simulated workcell."""

import argparse
import logging
import sys
from typing import List, Optional

from .commands.command_handler import CommandHandler, load_manifest_argv, normalized_cell
from .constants import CollectionSettings, ObjectProfile, PlannerName, PlannerSettings, ScorerKind
from .exceptions import ReplabError, UsageError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2


def _global_options(defaults: bool) -> argparse.ArgumentParser:
    """Options accepted before or after the sub-command.

    Sub-command copies default to SUPPRESS so they never mask a value given
    before the sub-command.
    """
    parent = argparse.ArgumentParser(add_help=False)
    default = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    parent.add_argument("--config", default=default(None), help="Cell configuration file (INI)")
    parent.add_argument("--seed", type=int, default=default(0), help="Master seed (default: 0)")
    parent.add_argument("--out", default=default("replab-out"), help="Output directory (default: replab-out)")
    parent.add_argument(
        "-v", "--verbose", action="count", default=default(0), help="-v for progress, -vv for per-attempt detail"
    )
    return parent


def build_parser() -> argparse.ArgumentParser:
    from . import __version__

    parser = argparse.ArgumentParser(
        prog="replab",
        description="Simulated REPLAB workcell: calibration, grasp data collection, scorer training and benchmarks",
        parents=[_global_options(True)],
    )
    parser.add_argument("--version", "-V", action="version", version=f"replab {__version__}")
    common = _global_options(False)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("calibrate", parents=[common], help="Fit the camera calibration and control-noise model")
    p.add_argument("--per-axis", action="store_true", help="Fit separate noise gains for x and y")

    p = sub.add_parser("collect", parents=[common], help="Collect randomly sampled, labelled grasps")
    p.add_argument(
        "-n",
        "--grasps",
        type=int,
        default=CollectionSettings.DEFAULT_GRASPS,
        help=f"Grasps per cell (default: {CollectionSettings.DEFAULT_GRASPS})",
    )
    p.add_argument("--cells", type=int, default=1, help="Collect on this many cells in parallel")
    p.add_argument("--workers", type=int, default=1, help="Worker threads")

    planners = [p.value for p in PlannerName]
    kinds = [k.value for k in ScorerKind]
    profiles = [p.value for p in ObjectProfile]

    p = sub.add_parser("train", parents=[common], help="Train a grasp scorer on a dataset")
    p.add_argument("--dataset", required=True, help="Dataset directory")
    p.add_argument("--kind", choices=kinds, default=ScorerKind.CROPPED.value)
    p.add_argument(
        "--crop-size", type=int, default=PlannerSettings.CROP_SIZE, help="Crop side in pixels for cropped scorers"
    )

    p = sub.add_parser("finetune", parents=[common], help="Fine-tune a scorer on another cell's data")
    p.add_argument("--model", required=True, help="Scorer file to start from")
    p.add_argument("--dataset", required=True, help="Dataset directory")
    p.add_argument("--epochs", type=int, default=None)

    for name, text in (("eval", "Bin-clearing evaluation"), ("reproduce", "Two-cell reproducibility experiment")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--planner", choices=planners, default=PlannerName.PRINCIPAL_AXIS.value)
        p.add_argument("--profile", choices=profiles, default=ObjectProfile.SEEN.value)
        p.add_argument("--runs", type=int, default=None, help="Episodes (default: from config)")
        p.add_argument("--model", default=None, help="Scorer file for the cropped/full planners")
        p.add_argument("--workers", type=int, default=1, help="Worker threads")
        if name == "reproduce":
            p.add_argument("--translation", type=float, default=1.0, help="Camera mount offset in cm")
            p.add_argument("--rotation", type=float, default=2.0, help="Camera mount rotation in degrees")
            p.add_argument("--no-align", action="store_true", help="Skip aligning the second camera")

    p = sub.add_parser("reach", parents=[common], help="Train the reaching policy")
    p.add_argument("--epochs", type=int, default=None, help="Epochs (default: from config)")

    p = sub.add_parser("ablate", parents=[common], help="Scorer accuracy against training-set size")
    p.add_argument("--dataset", required=True, help="Dataset directory")
    p.add_argument("--sizes", default="500,1000,2000,4000", help="Comma-separated training-set sizes")
    p.add_argument("--kind", choices=kinds, default=ScorerKind.CROPPED.value)

    p = sub.add_parser("rerun", parents=[common], help="Re-run the command recorded in a manifest")
    p.add_argument("manifest", help="manifest.json written by an earlier run")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


def run(argv: List[str], config_text: Optional[str] = None) -> int:
    """Parse and run one command; returns the process exit code."""
    from . import __version__

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    _configure_logging(args.verbose)

    try:
        if args.command == "rerun":
            recorded_argv, snapshot = load_manifest_argv(args.manifest)
            logger.info(f"Re-running: replab {' '.join(recorded_argv)}")
            return run(recorded_argv, snapshot)
        cell = normalized_cell(config_text, args.config)
        CommandHandler(args, argv, cell, __version__).execute(args.command)
    except UsageError as e:
        print(f"error [{e.module}]: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ReplabError as e:
        print(f"error [{e.module}]: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"error [io]: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for application."""
    return run(list(sys.argv[1:] if argv is None else argv))
