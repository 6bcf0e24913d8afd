"""Command handler for the experiment sub-commands."""

import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..benchmark import (
    aggregate_runs,
    ablation,
    build_aligned_cell,
    collect_random_grasps,
    collect_sharded,
    csr,
    episode_issues,
    finetune_from_records,
    reproducibility_experiment,
    run_episodes,
    train_from_records,
)
from ..constants import ObjectProfile, PlannerName, PlannerSettings, ScorerKind
from ..exceptions import UsageError
from ..geometry import Seed
from ..planners import GraspPlanner, make_planner
from ..reaching import train_reacher
from ..services.config_service import CellConfig, ConfigService, validate_cell
from ..services.dataset_service import DatasetService
from ..services.manifest_service import ManifestService, RunManifest
from ..services.model_service import ModelService
from ..services.report_service import ReportService
from ..workcell import Workcell, calibrate_cell

logger = logging.getLogger(__name__)

FINETUNE_EPOCHS = 10


class CommandHandler:
    """Runs one parsed command against a cell and records a manifest."""

    def __init__(self, args: argparse.Namespace, argv: List[str], cell: CellConfig, version: str):
        """Initialize command handler.

        Args:
            args: Parsed command line
            argv: The raw arguments, stored in the manifest
            cell: Cell configuration the command runs on
            version: Tool version for the manifest
        """
        self.args = args
        self.argv = list(argv)
        self.cell = cell
        self.version = version
        self.out = Path(args.out)
        self.seed = int(args.seed)
        self.commands = self._build_command_registry()

    def _build_command_registry(self) -> Dict[str, Callable[[], Dict[str, str]]]:
        """Build the command registry mapping command names to handlers."""
        return {
            "calibrate": self._handle_calibrate,
            "collect": self._handle_collect,
            "train": self._handle_train,
            "finetune": self._handle_finetune,
            "eval": self._handle_eval,
            "reach": self._handle_reach,
            "reproduce": self._handle_reproduce,
            "ablate": self._handle_ablate,
        }

    def execute(self, command: str) -> Dict[str, str]:
        """Run ``command`` and write its manifest.

        Returns:
            Artifact names mapped to the paths written.
        """
        handler = self.commands.get(command)
        if handler is None:
            raise UsageError(f"Unknown command: {command}")
        ok, issues = validate_cell(self.cell)
        if not ok:
            raise UsageError("Invalid cell configuration: " + "; ".join(issues))

        self.out.mkdir(parents=True, exist_ok=True)
        artifacts = handler()
        manifest = RunManifest(
            command=command,
            argv=self.argv,
            config=ConfigService.dumps(self.cell),
            seed=self.seed,
            artifacts=artifacts,
            version=self.version,
        )
        artifacts["manifest"] = ManifestService.write(str(self.out), manifest)
        return artifacts

    def _path(self, name: str) -> str:
        return str(self.out / name)

    def _planner(self) -> GraspPlanner:
        model = ModelService.load(self.args.model) if getattr(self.args, "model", None) else None
        return make_planner(
            PlannerName(self.args.planner),
            model,
            self.cell.gripper,
            self.cell.d_slip,
            self.cell.candidates_per_cluster,
            self.cell.top_k,
        )

    def _handle_calibrate(self) -> Dict[str, str]:
        """Fit the camera calibration and noise model; write the calibrated config."""
        report = calibrate_cell(self.cell, Seed(self.seed), per_axis=self.args.per_axis)
        calibrated = self.cell.with_calibration(report.calibration, report.noise_model)
        nm = report.noise_model
        summary = {
            "calibration_residual_cm": report.fit_residual,
            "heldout_error_cm": report.heldout_error,
            "alpha": nm.alpha,
            "beta": nm.beta,
            "alpha_y": nm.alpha_y,
            "beta_y": nm.beta_y,
            "noise_residual_cm": nm.residual,
        }
        print(f"Calibration residual {report.fit_residual:.3f} cm, held-out error {report.heldout_error:.3f} cm")
        print(f"Noise model alpha={nm.alpha:.4f} beta={nm.beta:.4f}")
        return {
            "config": ConfigService.save(calibrated, self._path("config.ini")),
            "summary": ReportService.write_json(self._path("calibration.json"), summary),
        }

    def _handle_collect(self) -> Dict[str, str]:
        """Collect random grasps on one or more cells."""
        n = self.args.grasps
        if n < 1:
            raise UsageError(f"--grasps must be at least 1, got {n}")
        if self.args.cells > 1:
            cells = [replace(self.cell, cell_id=self.cell.cell_id + i) for i in range(self.args.cells)]
            records = collect_sharded(cells, n, self.seed, self.args.workers)
        else:
            records = collect_random_grasps(self.cell, n, self.seed)
        rate = float(np.mean([r.success for r in records]))
        print(f"Collected {len(records)} grasps, success rate {rate:.3f}")
        return {"dataset": DatasetService.write(self._path("dataset"), records)}

    def _handle_train(self) -> Dict[str, str]:
        """Train a scorer on a dataset."""
        crop_size = getattr(self.args, "crop_size", PlannerSettings.CROP_SIZE)
        if crop_size < 1:
            raise UsageError(f"--crop-size must be at least 1, got {crop_size}")
        records = DatasetService.read(self.args.dataset)
        model = train_from_records(records, ScorerKind(self.args.kind), self.seed, self.cell.scorer, crop_size)
        print(f"Trained {model.kind.value} scorer, held-out balanced accuracy {model.accuracy:.4f}")
        return {"model": ModelService.save(model, self._path("scorer.rpls"))}

    def _handle_finetune(self) -> Dict[str, str]:
        """Warm-start a scorer on data from another cell."""
        base = ModelService.load(self.args.model)
        records = DatasetService.read(self.args.dataset)
        hyper = replace(self.cell.scorer, epochs=self.args.epochs or FINETUNE_EPOCHS)
        model = finetune_from_records(base, records, self.seed, hyper)
        print(f"Fine-tuned {model.kind.value} scorer, held-out balanced accuracy {model.accuracy:.4f}")
        return {"model": ModelService.save(model, self._path("scorer.rpls"))}

    def _handle_eval(self) -> Dict[str, str]:
        """Bin-clearing runs with one planner."""
        runs = self.args.runs or self.cell.runs
        planner = self._planner()
        profile = ObjectProfile(self.args.profile)
        root = Seed(self.seed)
        wc = Workcell(self.cell, root.child("calibrate"))
        seeds = [root.child("run", i).value for i in range(runs)]
        logs = run_episodes(wc.cell, planner, profile, seeds, self.args.workers, wc)
        for log in logs:
            for issue in episode_issues(log, wc.cell):
                logger.warning(f"Episode seed {log.seed}: {issue}")
        curves = [csr(log) for log in logs]
        mean, padded = aggregate_runs(curves, wc.cell.max_attempts)
        name = planner.name.value
        summary = ReportService.csr_summary(name, profile.value, curves, mean)
        print(f"{name} on {profile.value}: final CSR {[c.final for c in curves]}, mean {summary['mean_final_csr']:.2f}")
        return {
            "csr": ReportService.write_csr_csv(self._path("csr.csv"), padded, mean),
            "summary": ReportService.write_json(self._path("summary.json"), summary),
            "plot": ReportService.plot_csr(self._path("csr.svg"), {name: padded}, f"{name} / {profile.value}"),
        }

    def _handle_reach(self) -> Dict[str, str]:
        """Train the reaching policy and write its learning curve."""
        epochs = self.args.epochs or self.cell.reach.epochs
        result = train_reacher(self.cell.arm, epochs, Seed(self.seed), self.cell.reach)
        final = result.curve.mean_distance[-1]
        print(f"Reaching: untrained {result.initial_distance:.3f} cm, after {epochs} epochs {final:.3f} cm")
        return {"learning_curve": ReportService.write_learning_curve(self._path("learning_curve.csv"), result.curve)}

    def _handle_reproduce(self) -> Dict[str, str]:
        """Run the same planner on a second, aligned cell and compare."""
        root = Seed(self.seed)
        cell_a = Workcell(self.cell, root.child("calibrate")).cell
        aligned = build_aligned_cell(
            cell_a, self.seed, self.args.translation, self.args.rotation, align=not self.args.no_align
        )
        runs = self.args.runs or self.cell.runs
        report = reproducibility_experiment(
            cell_a, aligned.cell, self._planner(), runs, self.seed, ObjectProfile(self.args.profile), self.args.workers
        )
        summary = ReportService.reproducibility_summary(report)
        if aligned.alignment is not None:
            summary["alignment_discrepancy_cm"] = aligned.alignment.discrepancy
            summary["alignment_iterations"] = aligned.alignment.iterations
        print(
            f"Calibration error A {report.calibration_error_a:.3f} cm, B {report.calibration_error_b:.3f} cm; "
            f"mean final CSR difference {report.difference:.2f}"
        )
        return {"summary": ReportService.write_json(self._path("reproducibility.json"), summary)}

    def _handle_ablate(self) -> Dict[str, str]:
        """Scorer accuracy against training-set size."""
        records = DatasetService.read(self.args.dataset)
        try:
            sizes = [int(v) for v in self.args.sizes.split(",") if v.strip()]
        except ValueError as e:
            raise UsageError(f"--sizes must be comma-separated integers: {e}") from e
        rows = ablation(records, sizes, ScorerKind(self.args.kind), self.seed, self.cell.scorer)
        for row in rows:
            print(f"{row.size:>8d}  {row.accuracy:.4f}")
        return {"ablation": ReportService.write_ablation(self._path("ablation.csv"), rows)}


def load_manifest_argv(path: str) -> Tuple[List[str], str]:
    """(argv, config snapshot) of a manifest, for re-running it."""
    manifest = ManifestService.read(path)
    return manifest.argv, manifest.config


def normalized_cell(text: Optional[str], config_path: Optional[str]) -> CellConfig:
    """The cell a command runs on, passed once through its own text form."""
    cell = ConfigService.loads(text) if text is not None else ConfigService(config_path).cell
    return ConfigService.loads(ConfigService.dumps(cell))
