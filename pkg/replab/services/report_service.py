"""Report Service - Writes CSR curves, summaries, plots and learning curves."""

import csv
import json
import logging
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..reaching import LearningCurve  # noqa: E402

if TYPE_CHECKING:
    from ..benchmark import AblationRow, CsrCurve, ReproducibilityReport

logger = logging.getLogger(__name__)

# One colour per planner, in the order planners are listed
PLANNER_COLORS = ("tab:blue", "tab:orange", "tab:green", "tab:red", "tab:purple", "tab:brown", "tab:gray")


def _ensure_parent(path: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def _num(value: float) -> str:
    return repr(float(value))


class ReportService:
    """Service for experiment outputs."""

    @staticmethod
    def write_csr_csv(path: str, runs: Sequence[np.ndarray], mean: np.ndarray) -> str:
        """Columns: attempt, run_1 .. run_k, mean."""
        target = _ensure_parent(path)
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["attempt"] + [f"run_{i + 1}" for i in range(len(runs))] + ["mean"])
            for a in range(len(mean)):
                writer.writerow([a + 1] + [int(r[a]) for r in runs] + [_num(mean[a])])
        logger.info(f"Wrote CSR table to {path}")
        return path

    @staticmethod
    def csr_summary(planner: str, profile: str, curves: Sequence["CsrCurve"], mean: np.ndarray) -> Dict[str, object]:
        finals = [c.final for c in curves]
        return {
            "planner": planner,
            "profile": profile,
            "runs": len(curves),
            "attempts": [len(c) for c in curves],
            "final_csr": finals,
            "mean_final_csr": float(np.mean(finals)),
            "mean_curve": [float(v) for v in mean],
        }

    @staticmethod
    def write_json(path: str, payload: Mapping[str, object]) -> str:
        target = _ensure_parent(path)
        with open(target, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path

    @staticmethod
    def plot_csr(path: str, series: Mapping[str, Sequence[np.ndarray]], title: str = "") -> str:
        """SVG plot: thin curves per run, a thick mean curve, one colour per planner."""
        target = _ensure_parent(path)
        plt.rcParams["svg.hashsalt"] = "replab"
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for i, (planner, runs) in enumerate(series.items()):
            color = PLANNER_COLORS[i % len(PLANNER_COLORS)]
            attempts = np.arange(1, len(runs[0]) + 1)
            for run in runs:
                ax.plot(attempts, run, color=color, linewidth=0.8, alpha=0.5)
            ax.plot(attempts, np.mean(runs, axis=0), color=color, linewidth=2.5, label=planner)
        ax.set_xlabel("grasp attempts")
        ax.set_ylabel("objects grasped")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left")
        ax.grid(True, linewidth=0.3)
        fig.tight_layout()
        fig.savefig(target, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
        logger.info(f"Wrote CSR plot to {path}")
        return path

    @staticmethod
    def write_learning_curve(path: str, curve: LearningCurve) -> str:
        target = _ensure_parent(path)
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "mean_final_distance_cm", "best_so_far_cm"])
            for epoch, mean, best in curve.rows():
                writer.writerow([epoch, _num(mean), _num(best)])
        logger.info(f"Wrote learning curve ({len(curve.epochs)} epochs) to {path}")
        return path

    @staticmethod
    def write_ablation(path: str, rows: Sequence["AblationRow"]) -> str:
        target = _ensure_parent(path)
        with open(target, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["training_grasps", "balanced_accuracy"])
            for row in rows:
                writer.writerow([row.size, _num(row.accuracy)])
        return path

    @staticmethod
    def reproducibility_summary(report: "ReproducibilityReport") -> Dict[str, object]:
        rows: List[float] = [float(v) for v in report.mean_a]
        return {
            "calibration_error_cm": [report.calibration_error_a, report.calibration_error_b],
            "final_csr_a": list(report.finals_a),
            "final_csr_b": list(report.finals_b),
            "mean_final_csr_difference": report.difference,
            "misaligned": report.misaligned,
            "mean_curve_a": rows,
            "mean_curve_b": [float(v) for v in report.mean_b],
        }
