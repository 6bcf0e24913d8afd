"""Constants and enumerations for the REPLAB simulator."""

from enum import Enum


class ObjectProfile(str, Enum):
    """Object distributions used for training and evaluation."""

    SEEN = "seen"
    UNSEEN = "unseen"


class PrimitiveKind(str, Enum):
    """Analytic solids objects are built from."""

    ELLIPSOID = "ellipsoid"
    BOX = "box"
    CAPSULE = "capsule"


class ShapeKind(str, Enum):
    """Object shape families."""

    ELLIPSOID = "ellipsoid"
    BOX = "box"
    CAPSULE = "capsule"
    COMPOSITE = "composite"


class FailureReason(str, Enum):
    """Why a grasp attempt failed."""

    EMPTY_JAWS = "empty-jaws"
    WIDTH_TOO_WIDE = "width-too-wide"
    WIDTH_TOO_NARROW = "width-too-narrow"
    SLIP = "slip"
    COLLISION = "collision"


class PlannerName(str, Enum):
    """Grasp planners selectable from the command line."""

    RANDOM_XYZ_THETA = "random-xyztheta"
    RANDOM_THETA = "random-theta"
    PRINCIPAL_AXIS = "principal-axis"
    CROPPED = "cropped"
    FULL = "full"
    ORACLE = "oracle"
    NULL = "null"


class ScorerKind(str, Enum):
    """Learned grasp scorer input kinds."""

    CROPPED = "cropped"
    FULL = "full"


class Workspace:
    """Cell floor geometry, robot frame, centimetres."""

    X_MIN = -17.5
    X_MAX = 17.5
    Y_MIN = -20.0
    Y_MAX = 20.0
    FLOOR_Z = 0.0


class GripperDefaults:
    """Parallel-jaw gripper limits."""

    MIN_WIDTH = 1.0
    MAX_WIDTH = 3.0
    JAW_LENGTH = 2.0
    SOFT_TOLERANCE = 0.5
    FLOOR_CLEARANCE = 0.3
    SLIP_DISTANCE = 0.75


class EpisodeSettings:
    """Bin-clearing protocol."""

    OBJECT_COUNT = 20
    MAX_ATTEMPTS = 60
    SWEEP_AFTER_FAILURES = 10
    CLUSTER_EXCESS_FACTOR = 1.5
    RUNS = 3


class CollectionSettings:
    """Random data collection."""

    RESET_EVERY = 20
    MIN_OBJECTS = 3
    DEFAULT_GRASPS = 8000
    TRAINING_SET_SIZE = 100


class PlannerSettings:
    """Candidate sampling and selection."""

    CANDIDATES_PER_CLUSTER = 512
    TOP_K = 5
    THETA_BINS = 18
    CROP_SIZE = 24
    FULL_IMAGE_SHAPE = (24, 32)
    RANDOM_REGION = (2.0, 2.0, 1.0)


class ScatterSettings:
    """Bin-dump scattering and settling."""

    SIGMA = 8.0
    MAX_ITERATIONS = 200
    MAX_INTERPENETRATION = 0.2
    SWEEP_SIGMA = 3.0


class ReachSettings:
    """Reaching task defaults."""

    HORIZON = 100
    DT = 0.05
    MAX_VELOCITY = 1.0
    EPOCHS = 25
    EVAL_TARGETS = 10


# Default messages
MESSAGES = {
    "CONFIG_NOT_FOUND": "Configuration file '{path}' not found",
    "NO_CLUSTERS": "No clusters to plan on",
    "NO_CANDIDATES": "No grasp candidates to score",
    "UNREACHABLE": "Target ({x:.2f}, {y:.2f}, {z:.2f}) is outside the reachable envelope",
    "SCATTER_FAILED": "Overlap separation did not converge after {iterations} iterations",
    "OVERLAP_LEFT": "Objects interpenetrate by {depth:.3f} cm after settling, limit {limit} cm",
    "ALIGN_FAILED": "Camera alignment did not converge, final discrepancy {discrepancy:.3f} cm",
    "SINGLE_CLASS": "Training data holds a single class",
    "TOO_FEW_EXAMPLES": "Need at least {minimum} labelled examples, got {count}",
    "OUT_OF_VIEW": "Candidate projects outside the image at pixel ({u:.1f}, {v:.1f})",
    "NO_FLOOR": "Camera sees no floor pixels; check the camera pose",
    "DEGENERATE_CALIBRATION": "Calibration needs at least 4 non-coplanar correspondences",
    "DEGENERATE_NOISE_FIT": "Noise fit needs at least two distinct target coordinates",
    "SMALL_ALPHA": "Noise model gain alpha={alpha} is too small to invert",
}


# File paths
PATHS = {
    "CONFIG_FILE": "config.ini",
    "MANIFEST_FILE": "manifest.json",
    "DATASET_INDEX": "index.json",
    "DATASET_RECORDS": "records.bin",
    "DATASET_DEPTH": "depth.bin",
}
