"""Configuration Service - Loads and saves simulated cell configurations."""

import configparser
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..arm import ArmModel, GripperSpec
from ..calibration import CalibrationModel, NoiseModel
from ..camera import CameraIntrinsics, default_camera_pose
from ..constants import (
    CollectionSettings,
    EpisodeSettings,
    GripperDefaults,
    MESSAGES,
    PATHS,
    PlannerSettings,
)
from ..exceptions import ConfigurationError, UsageError
from ..geometry import RigidTransform
from ..planners import TrainingConfig
from ..reaching import ReachConfig
from .platform_service import PlatformService

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "REPLAB_CONFIG"
SECTIONS = (
    "cell",
    "arm",
    "gripper",
    "camera",
    "controller",
    "perception",
    "planner",
    "benchmark",
    "scorer",
    "reaching",
)


@dataclass(frozen=True)
class CellConfig:
    """Everything that defines one simulated workcell and its benchmark protocol.

    ``controller`` is the cell's true (hidden) positioning distortion;
    ``noise_model`` and ``calibration`` are what calibration has fitted, or
    None when the cell has not been calibrated yet.
    """

    cell_id: int = 1
    object_set_seed: int = 7
    soft_fraction: float = 0.5
    d_slip: float = GripperDefaults.SLIP_DISTANCE
    arm: ArmModel = field(default_factory=ArmModel)
    gripper: GripperSpec = field(default_factory=GripperSpec)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    camera_pose: RigidTransform = field(default_factory=default_camera_pose)
    depth_noise: float = 0.15
    controller: NoiseModel = field(default_factory=lambda: NoiseModel(0.87, 0.0))
    noise_model: Optional[NoiseModel] = None
    calibration: Optional[CalibrationModel] = None
    calibration_pairs: int = 25
    eps: float = 1.5
    min_pts: int = 10
    cluster_excess: float = EpisodeSettings.CLUSTER_EXCESS_FACTOR
    candidates_per_cluster: int = PlannerSettings.CANDIDATES_PER_CLUSTER
    top_k: int = PlannerSettings.TOP_K
    random_region: Tuple[float, float, float] = PlannerSettings.RANDOM_REGION
    episode_objects: int = EpisodeSettings.OBJECT_COUNT
    max_attempts: int = EpisodeSettings.MAX_ATTEMPTS
    sweep_after: int = EpisodeSettings.SWEEP_AFTER_FAILURES
    runs: int = EpisodeSettings.RUNS
    reset_every: int = CollectionSettings.RESET_EVERY
    min_objects: int = CollectionSettings.MIN_OBJECTS
    scorer: TrainingConfig = field(default_factory=TrainingConfig)
    reach: ReachConfig = field(default_factory=ReachConfig)

    def with_calibration(self, calibration: CalibrationModel, noise_model: NoiseModel) -> "CellConfig":
        return replace(self, calibration=calibration, noise_model=noise_model)


def get_config_search_paths(config_file: str = PATHS["CONFIG_FILE"]) -> List[str]:
    """Get list of configuration file search paths in priority order."""
    env_config = os.getenv(CONFIG_ENV_VAR)
    if env_config and os.path.exists(env_config):
        return [env_config]

    user_config = PlatformService.get_config_dir() / config_file
    if user_config.exists():
        return [str(user_config)]

    cwd_config = Path.cwd() / config_file
    if cwd_config.exists():
        return [str(cwd_config)]

    return []


def _f(value: float) -> str:
    return repr(float(value))


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _noise_section(nm: NoiseModel) -> Dict[str, str]:
    out = {"alpha": _f(nm.alpha), "beta": _f(nm.beta), "residual": _f(nm.residual)}
    if nm.alpha_y is not None:
        out["alpha_y"] = _f(nm.alpha_y)
        out["beta_y"] = _f(nm.beta if nm.beta_y is None else nm.beta_y)
    return out


def _read_noise(section: configparser.SectionProxy, default: NoiseModel) -> NoiseModel:
    alpha_y = section.get("alpha_y")
    beta_y = section.get("beta_y")
    return NoiseModel(
        section.getfloat("alpha", fallback=default.alpha),
        section.getfloat("beta", fallback=default.beta),
        section.getfloat("residual", fallback=0.0),
        float(alpha_y) if alpha_y is not None else None,
        float(beta_y) if beta_y is not None else None,
    )


def _read_pose(text: str) -> RigidTransform:
    """Camera pose as 12 values (3x4 row-major) or 6 (translation, rotation vector)."""
    values = _floats(text)
    if len(values) == 12:
        m = np.array(values).reshape(3, 4)
        return RigidTransform(m[:, :3], m[:, 3])
    if len(values) == 6:
        return RigidTransform.from_params(values)
    raise ConfigurationError(f"Camera pose needs 6 or 12 values, got {len(values)}")


def cell_to_parser(cell: CellConfig) -> configparser.ConfigParser:
    """Serialize a cell; floats use repr so they read back exactly."""
    parser = configparser.ConfigParser()
    parser["cell"] = {
        "cell_id": str(cell.cell_id),
        "object_set_seed": str(cell.object_set_seed),
        "soft_fraction": _f(cell.soft_fraction),
        "d_slip": _f(cell.d_slip),
    }
    arm = cell.arm
    parser["arm"] = {
        "upper_arm": _f(arm.upper_arm),
        "forearm": _f(arm.forearm),
        "tool": _f(arm.tool),
        "base_x": _f(arm.base_x),
        "base_y": _f(arm.base_y),
        "base_z": _f(arm.base_z),
        "max_velocity": _f(arm.max_velocity),
        "servo_noise_xy": _f(arm.servo_noise_xy),
        "servo_noise_z": _f(arm.servo_noise_z),
        "limits": "; ".join(f"{_f(lo)}, {_f(hi)}" for lo, hi in arm.limits),
    }
    g = cell.gripper
    parser["gripper"] = {
        "min_width": _f(g.min_width),
        "max_width": _f(g.max_width),
        "jaw_length": _f(g.jaw_length),
        "soft_tolerance": _f(g.soft_tolerance),
        "floor_clearance": _f(g.floor_clearance),
    }
    k = cell.intrinsics
    parser["camera"] = {
        "fx": _f(k.fx),
        "fy": _f(k.fy),
        "cx": _f(k.cx),
        "cy": _f(k.cy),
        "width": str(k.width),
        "height": str(k.height),
        "pose": ", ".join(_f(v) for v in cell.camera_pose.as_matrix()[:3, :].ravel()),
        "depth_noise": _f(cell.depth_noise),
    }
    parser["controller"] = _noise_section(cell.controller)
    if cell.noise_model is not None:
        parser["noise_model"] = _noise_section(cell.noise_model)
    if cell.calibration is not None:
        parser["calibration"] = {
            "matrix": ", ".join(_f(v) for v in cell.calibration.matrix.ravel()),
            "residual": _f(cell.calibration.residual),
        }
    parser["perception"] = {
        "eps": _f(cell.eps),
        "min_pts": str(cell.min_pts),
        "cluster_excess": _f(cell.cluster_excess),
        "calibration_pairs": str(cell.calibration_pairs),
    }
    parser["planner"] = {
        "candidates_per_cluster": str(cell.candidates_per_cluster),
        "top_k": str(cell.top_k),
        "random_region": ", ".join(_f(v) for v in cell.random_region),
    }
    parser["benchmark"] = {
        "episode_objects": str(cell.episode_objects),
        "max_attempts": str(cell.max_attempts),
        "sweep_after": str(cell.sweep_after),
        "runs": str(cell.runs),
        "reset_every": str(cell.reset_every),
        "min_objects": str(cell.min_objects),
    }
    s = cell.scorer
    parser["scorer"] = {
        "epochs": str(s.epochs),
        "batch_size": str(s.batch_size),
        "learning_rate": _f(s.learning_rate),
        "l2": _f(s.l2),
        "holdout_fraction": _f(s.holdout_fraction),
    }
    r = cell.reach
    parser["reaching"] = {
        "horizon": str(r.horizon),
        "dt": _f(r.dt),
        "epochs": str(r.epochs),
        "population": str(r.population),
        "elites": str(r.elites),
        "eval_targets": str(r.eval_targets),
    }
    return parser


def parser_to_cell(parser: configparser.ConfigParser) -> CellConfig:
    """Build a cell from parsed INI; missing keys fall back to defaults."""
    d = CellConfig()
    for name in SECTIONS:
        if name not in parser:
            parser[name] = {}

    try:
        cell = parser["cell"]
        arm = parser["arm"]
        limits = _floats(arm["limits"]) if "limits" in arm else [v for pair in d.arm.limits for v in pair]
        arm_model = ArmModel(
            arm.getfloat("upper_arm", fallback=d.arm.upper_arm),
            arm.getfloat("forearm", fallback=d.arm.forearm),
            arm.getfloat("tool", fallback=d.arm.tool),
            arm.getfloat("base_x", fallback=d.arm.base_x),
            arm.getfloat("base_y", fallback=d.arm.base_y),
            arm.getfloat("base_z", fallback=d.arm.base_z),
            tuple(zip(limits[0::2], limits[1::2])),
            arm.getfloat("max_velocity", fallback=d.arm.max_velocity),
            arm.getfloat("servo_noise_xy", fallback=d.arm.servo_noise_xy),
            arm.getfloat("servo_noise_z", fallback=d.arm.servo_noise_z),
        )
        g = parser["gripper"]
        gripper = GripperSpec(
            g.getfloat("min_width", fallback=d.gripper.min_width),
            g.getfloat("max_width", fallback=d.gripper.max_width),
            g.getfloat("jaw_length", fallback=d.gripper.jaw_length),
            g.getfloat("soft_tolerance", fallback=d.gripper.soft_tolerance),
            g.getfloat("floor_clearance", fallback=d.gripper.floor_clearance),
        )
        cam = parser["camera"]
        intrinsics = CameraIntrinsics(
            cam.getfloat("fx", fallback=d.intrinsics.fx),
            cam.getfloat("fy", fallback=d.intrinsics.fy),
            cam.getfloat("cx", fallback=d.intrinsics.cx),
            cam.getfloat("cy", fallback=d.intrinsics.cy),
            cam.getint("width", fallback=d.intrinsics.width),
            cam.getint("height", fallback=d.intrinsics.height),
        )
        pose = _read_pose(cam["pose"]) if "pose" in cam else d.camera_pose

        noise_model = _read_noise(parser["noise_model"], NoiseModel()) if "noise_model" in parser else None
        calibration = None
        if "calibration" in parser:
            c = parser["calibration"]
            calibration = CalibrationModel(np.array(_floats(c["matrix"])), c.getfloat("residual", fallback=0.0))

        per = parser["perception"]
        plan = parser["planner"]
        bench = parser["benchmark"]
        sc = parser["scorer"]
        rc = parser["reaching"]
        return CellConfig(
            cell_id=cell.getint("cell_id", fallback=d.cell_id),
            object_set_seed=cell.getint("object_set_seed", fallback=d.object_set_seed),
            soft_fraction=cell.getfloat("soft_fraction", fallback=d.soft_fraction),
            d_slip=cell.getfloat("d_slip", fallback=d.d_slip),
            arm=arm_model,
            gripper=gripper,
            intrinsics=intrinsics,
            camera_pose=pose,
            depth_noise=cam.getfloat("depth_noise", fallback=d.depth_noise),
            controller=_read_noise(parser["controller"], d.controller),
            noise_model=noise_model,
            calibration=calibration,
            calibration_pairs=per.getint("calibration_pairs", fallback=d.calibration_pairs),
            eps=per.getfloat("eps", fallback=d.eps),
            min_pts=per.getint("min_pts", fallback=d.min_pts),
            cluster_excess=per.getfloat("cluster_excess", fallback=d.cluster_excess),
            candidates_per_cluster=plan.getint("candidates_per_cluster", fallback=d.candidates_per_cluster),
            top_k=plan.getint("top_k", fallback=d.top_k),
            random_region=tuple(_floats(plan["random_region"])) if "random_region" in plan else d.random_region,
            episode_objects=bench.getint("episode_objects", fallback=d.episode_objects),
            max_attempts=bench.getint("max_attempts", fallback=d.max_attempts),
            sweep_after=bench.getint("sweep_after", fallback=d.sweep_after),
            runs=bench.getint("runs", fallback=d.runs),
            reset_every=bench.getint("reset_every", fallback=d.reset_every),
            min_objects=bench.getint("min_objects", fallback=d.min_objects),
            scorer=TrainingConfig(
                sc.getint("epochs", fallback=d.scorer.epochs),
                sc.getint("batch_size", fallback=d.scorer.batch_size),
                sc.getfloat("learning_rate", fallback=d.scorer.learning_rate),
                sc.getfloat("l2", fallback=d.scorer.l2),
                sc.getfloat("holdout_fraction", fallback=d.scorer.holdout_fraction),
            ),
            reach=ReachConfig(
                horizon=rc.getint("horizon", fallback=d.reach.horizon),
                dt=rc.getfloat("dt", fallback=d.reach.dt),
                epochs=rc.getint("epochs", fallback=d.reach.epochs),
                population=rc.getint("population", fallback=d.reach.population),
                elites=rc.getint("elites", fallback=d.reach.elites),
                eval_targets=rc.getint("eval_targets", fallback=d.reach.eval_targets),
            ),
        )
    except (ValueError, KeyError) as e:
        raise ConfigurationError(f"Invalid cell configuration: {e}") from e


class ConfigService:
    """Service for loading, validating and saving cell configurations."""

    def __init__(self, config_file: Optional[str] = None):
        if config_file is not None and not os.path.exists(config_file):
            raise UsageError(MESSAGES["CONFIG_NOT_FOUND"].format(path=config_file))
        if config_file is None:
            search_paths = get_config_search_paths()
            config_file = search_paths[0] if search_paths else None

        self.config_file = config_file
        self.config = configparser.ConfigParser()
        if self.config_file:
            self.config.read(self.config_file)
            logger.info(f"Loaded cell configuration from {self.config_file}")
        else:
            logger.info("No configuration file found, using the default cell")
        self.cell = parser_to_cell(self.config)

    def get_config_file_path(self) -> Optional[str]:
        """Get the path to the currently loaded config file."""
        return self.config_file

    def validate_config(self) -> Tuple[bool, List[str]]:
        """Validate configuration and return any issues."""
        return validate_cell(self.cell)

    @staticmethod
    def save(cell: CellConfig, path: str) -> str:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            cell_to_parser(cell).write(fh)
        logger.info(f"Wrote cell configuration to {path}")
        return path

    @staticmethod
    def dumps(cell: CellConfig) -> str:
        """INI text of a cell, as stored in run manifests."""
        lines: List[str] = []
        parser = cell_to_parser(cell)
        for section in parser.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{key} = {value}" for key, value in parser[section].items())
            lines.append("")
        return "\n".join(lines)

    @staticmethod
    def loads(text: str) -> CellConfig:
        parser = configparser.ConfigParser()
        parser.read_string(text)
        return parser_to_cell(parser)


def validate_cell(cell: CellConfig) -> Tuple[bool, List[str]]:
    """Range checks that the dataclass constructors do not already enforce."""
    issues = []
    if not cell.arm.covers_workspace():
        issues.append("Arm: reachable envelope does not cover the workspace floor")
    if cell.d_slip <= 0.0:
        issues.append("Cell: d_slip must be positive")
    if not 0.0 <= cell.soft_fraction <= 1.0:
        issues.append("Cell: soft_fraction must be within [0, 1]")
    if cell.depth_noise < 0.0:
        issues.append("Camera: depth_noise must be non-negative")
    if cell.eps <= 0.0:
        issues.append("Perception: eps must be positive")
    if cell.min_pts < 1:
        issues.append("Perception: min_pts must be at least 1")
    if cell.candidates_per_cluster < 1 or cell.top_k < 1:
        issues.append("Planner: candidates_per_cluster and top_k must be at least 1")
    if any(v < 0.0 for v in cell.random_region):
        issues.append("Planner: random_region must be non-negative")
    if cell.max_attempts < 1 or cell.episode_objects < 1:
        issues.append("Benchmark: max_attempts and episode_objects must be at least 1")
    if cell.reach.elites < 1 or cell.reach.elites > cell.reach.population:
        issues.append("Reaching: elites must be within [1, population]")
    for name, nm in (("controller", cell.controller), ("noise_model", cell.noise_model)):
        if nm is not None and abs(nm.alpha) < 0.1:
            issues.append(f"{name}: alpha is too small to invert")
    return len(issues) == 0, issues
