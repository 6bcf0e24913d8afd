"""Perception - background subtraction, DBSCAN clustering and per-cluster moments."""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .calibration import CalibrationModel
from .camera import PointCloud
from .constants import EpisodeSettings, Workspace
from .exceptions import InvalidArgumentError
from .geometry import Vec3, eig2_sym

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1.5
DEFAULT_MIN_PTS = 10
FLOOR_MARGIN = 0.5
MIN_EIGENVALUE = 1e-9


@dataclass(frozen=True, eq=False)
class Cluster:
    """Robot-frame points of one detected object."""

    id: int
    points: np.ndarray
    indices: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def members(self) -> List[Vec3]:
        return [Vec3.from_array(p) for p in self.points]


@dataclass(frozen=True, eq=False)
class ClusterStats:
    center: Vec3
    corr2: np.ndarray
    eigenvalues: Tuple[float, float]
    major_axis: np.ndarray
    confidence: float

    @property
    def major_angle(self) -> float:
        return float(np.arctan2(self.major_axis[1], self.major_axis[0]))


def subtract_background(
    cloud: PointCloud,
    calib: CalibrationModel,
    floor_z: float = Workspace.FLOOR_Z,
    bounds: Tuple[float, float, float, float] = (Workspace.X_MIN, Workspace.X_MAX, Workspace.Y_MIN, Workspace.Y_MAX),
) -> np.ndarray:
    """Robot-frame points that are neither floor nor outside the workspace, shape (N, 3)."""
    if len(cloud) == 0:
        return np.zeros((0, 3))
    return calib.apply(cloud.points)[foreground_mask(cloud, calib, floor_z, bounds)]


def dbscan(points: np.ndarray, eps: float = DEFAULT_EPS, min_pts: int = DEFAULT_MIN_PTS) -> List[Cluster]:
    """Density-based clustering.

    A core point has at least ``min_pts`` points (itself included) within
    ``eps``. Clusters are connected components of the core points; a border
    point joins its nearest core. Clusters come out ordered by their smallest
    member index.
    """
    if eps <= 0.0 or min_pts < 1:
        raise InvalidArgumentError(
            f"dbscan needs eps > 0 and min_pts >= 1, got eps={eps}, min_pts={min_pts}", module="perception"
        )
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return []

    counts = cKDTree(pts).query_ball_point(pts, eps, return_length=True)
    core = counts >= min_pts

    labels = np.full(n, -1, dtype=int)
    core_idx = np.flatnonzero(core)
    if len(core_idx) == 0:
        return []
    # only core-core edges matter for connectivity
    core_tree = cKDTree(pts[core_idx])
    edges = core_tree.query_pairs(eps, output_type="ndarray")
    m = len(core_idx)
    graph = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(m, m))
    _, component = csgraph.connected_components(graph, directed=False)
    labels[core_idx] = component

    border = np.flatnonzero(~core)
    if len(border):
        dist, nearest = core_tree.query(pts[border], distance_upper_bound=eps * (1.0 + 1e-9))
        attached = np.isfinite(dist)
        labels[border[attached]] = component[nearest[attached]]

    clusters = []
    found, first = np.unique(labels[labels >= 0], return_index=True)
    order = found[np.argsort(first)].tolist()
    for new_id, old in enumerate(order):
        idx = np.flatnonzero(labels == old)
        clusters.append(Cluster(new_id, pts[idx], idx))
    logger.debug(f"DBSCAN: {n} points, {len(core_idx)} core, {len(clusters)} clusters")
    return clusters


def cluster_stats(c: Cluster) -> ClusterStats:
    """Centroid, centred (x, y) second moment and its principal axes."""
    if len(c) == 0:
        raise InvalidArgumentError("cluster_stats needs a non-empty cluster", module="perception")
    center = c.points.mean(axis=0)
    xy = c.points[:, :2] - center[:2]
    corr2 = xy.T @ xy / len(xy)
    corr2 = 0.5 * (corr2 + corr2.T)
    eig = eig2_sym(corr2)
    l1, l2 = eig.values
    return ClusterStats(
        center=Vec3.from_array(center),
        corr2=corr2,
        eigenvalues=(float(l1), float(l2)),
        major_axis=eig.vectors[0],
        confidence=float(max(1.0, l1 / max(l2, MIN_EIGENVALUE))),
    )


def clustering_failed(
    clusters: Sequence[Cluster],
    remaining: int,
    excess_factor: float = EpisodeSettings.CLUSTER_EXCESS_FACTOR,
) -> bool:
    """True when no cluster was found or far more clusters than objects remain."""
    return len(clusters) == 0 or len(clusters) > excess_factor * remaining


class ClusterTarget(NamedTuple):
    """A detected cluster with its moments."""

    cluster: Cluster
    stats: ClusterStats


def foreground_mask(
    cloud: PointCloud,
    calib: CalibrationModel,
    floor_z: float = Workspace.FLOOR_Z,
    bounds: Tuple[float, float, float, float] = (Workspace.X_MIN, Workspace.X_MAX, Workspace.Y_MIN, Workspace.Y_MAX),
) -> np.ndarray:
    """Which cloud points survive background subtraction."""
    if len(cloud) == 0:
        return np.zeros(0, dtype=bool)
    pts = calib.apply(cloud.points)
    x_min, x_max, y_min, y_max = bounds
    return (
        (pts[:, 2] > floor_z + FLOOR_MARGIN)
        & (pts[:, 0] >= x_min)
        & (pts[:, 0] <= x_max)
        & (pts[:, 1] >= y_min)
        & (pts[:, 1] <= y_max)
    )


def perceive(
    cloud: PointCloud,
    calib: CalibrationModel,
    floor_z: float = Workspace.FLOOR_Z,
    eps: float = DEFAULT_EPS,
    min_pts: int = DEFAULT_MIN_PTS,
) -> List[ClusterTarget]:
    """Background subtraction, clustering and moments in one pass."""
    points = subtract_background(cloud, calib, floor_z)
    return [ClusterTarget(c, cluster_stats(c)) for c in dbscan(points, eps, min_pts)]
