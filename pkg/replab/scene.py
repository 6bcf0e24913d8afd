"""Scene - objects on the cell floor, bin-dump scattering and the grasp outcome model.

Every object is a union of analytic primitives resting on the floor. A
primitive is described in its own frame with the floor at z=0; its centre
sits at height ``half_extents[2]``.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .arm import GripperSpec
from .constants import (
    CollectionSettings,
    EpisodeSettings,
    FailureReason,
    GripperDefaults,
    MESSAGES,
    ObjectProfile,
    PrimitiveKind,
    ScatterSettings,
    ShapeKind,
    Workspace,
)
from .exceptions import InvalidArgumentError, ScatterError
from .geometry import GraspPose, RandomSource, as_generator

logger = logging.getLogger(__name__)

# Settling stops once no disk pair overlaps more than this
SETTLE_TARGET = 0.1
SETTLE_MARGIN = 0.05
# Padding on primitive bounding spheres when culling rays
BOUND_SLACK = 1e-6

FAILURE_ORDER = (
    FailureReason.EMPTY_JAWS,
    FailureReason.WIDTH_TOO_WIDE,
    FailureReason.WIDTH_TOO_NARROW,
    FailureReason.SLIP,
    FailureReason.COLLISION,
)


def _rot2(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Primitive:
    """One analytic solid of an object.

    ``half_extents`` is (a, b, c): semi-axes for an ellipsoid, half sizes for a
    box, and (half length including caps, radius, radius) for a capsule lying
    along local x.
    """

    kind: PrimitiveKind
    half_extents: Tuple[float, float, float]
    offset: Tuple[float, float] = (0.0, 0.0)
    yaw: float = 0.0

    def __post_init__(self) -> None:
        a, b, c = (float(v) for v in self.half_extents)
        if min(a, b, c) <= 0.0:
            raise InvalidArgumentError(f"Primitive extents must be positive, got {self.half_extents}", module="scene")
        if self.kind == PrimitiveKind.CAPSULE and (abs(b - c) > 1e-12 or a < b):
            raise InvalidArgumentError("Capsule needs (half_length, r, r) with half_length >= r", module="scene")
        object.__setattr__(self, "kind", PrimitiveKind(self.kind))
        object.__setattr__(self, "half_extents", (a, b, c))
        object.__setattr__(self, "offset", (float(self.offset[0]), float(self.offset[1])))

    @property
    def height(self) -> float:
        return 2.0 * self.half_extents[2]

    def footprint_disks(self) -> np.ndarray:
        """Disks (x, y, r) in the object frame covering the primitive's footprint."""
        a, b = self.half_extents[0], self.half_extents[1]
        major, minor = (a, b) if a >= b else (b, a)
        k = max(1, int(math.ceil(major / minor)))
        piece = major / k
        along = -major + (2.0 * np.arange(k) + 1.0) * piece
        local = np.column_stack([along, np.zeros(k)]) if a >= b else np.column_stack([np.zeros(k), along])
        centres = local @ _rot2(self.yaw).T + np.asarray(self.offset)
        return np.column_stack([centres, np.full(k, math.hypot(piece, minor))])

    def to_dict(self) -> Dict[str, object]:
        return {
            "kind": self.kind.value,
            "half_extents": list(self.half_extents),
            "offset": list(self.offset),
            "yaw": self.yaw,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "Primitive":
        return cls(
            PrimitiveKind(data["kind"]),
            tuple(data["half_extents"]),  # type: ignore[arg-type]
            tuple(data.get("offset", (0.0, 0.0))),  # type: ignore[arg-type]
            float(data.get("yaw", 0.0)),  # type: ignore[arg-type]
        )

    # --- geometry in the primitive frame -------------------------------------------------

    def contains_local(self, p: np.ndarray) -> np.ndarray:
        a, b, c = self.half_extents
        x, y, z = p[:, 0], p[:, 1], p[:, 2] - c
        if self.kind == PrimitiveKind.ELLIPSOID:
            return (x / a) ** 2 + (y / b) ** 2 + (z / c) ** 2 <= 1.0
        if self.kind == PrimitiveKind.BOX:
            return (np.abs(x) <= a) & (np.abs(y) <= b) & (np.abs(z) <= c)
        core = a - b
        dx = np.maximum(np.abs(x) - core, 0.0)
        return dx * dx + y * y + z * z <= b * b

    def ray_local(self, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
        """First positive hit distance per ray, inf on miss."""
        a, b, c = self.half_extents
        o = origin - np.array([0.0, 0.0, c])
        if self.kind == PrimitiveKind.ELLIPSOID:
            return _ray_ellipsoid(o, dirs, np.array([a, b, c]))
        if self.kind == PrimitiveKind.BOX:
            return _ray_box(o, dirs, np.array([a, b, c]))
        return _ray_capsule(o, dirs, a - b, b)

    def chord_local(
        self, qx: np.ndarray, qy: np.ndarray, wx: np.ndarray, wy: np.ndarray, h: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Interval (lo, hi) where the horizontal line q + s*w at height h crosses the solid.

        Lines are given in the primitive frame; NaN marks a miss.
        """
        a, b, c = self.half_extents
        dz = h - c
        if self.kind == PrimitiveKind.ELLIPSOID:
            k2 = 1.0 - (dz / c) ** 2
            with np.errstate(divide="ignore", invalid="ignore"):
                k = np.sqrt(np.where(k2 > 0.0, k2, np.nan))
                return _chord_ellipse(qx, qy, wx, wy, a * k, b * k)
        if self.kind == PrimitiveKind.BOX:
            lo, hi = _chord_rect(qx, qy, wx, wy, a, b)
            inside = np.abs(dz) <= c
            return np.where(inside, lo, np.nan), np.where(inside, hi, np.nan)
        core = a - b
        w2 = b * b - dz * dz
        with np.errstate(invalid="ignore"):
            half = np.sqrt(np.where(w2 > 0.0, w2, np.nan))
        parts = [
            _chord_rect(qx, qy, wx, wy, core, half),
            _chord_ellipse(qx - core, qy, wx, wy, half, half),
            _chord_ellipse(qx + core, qy, wx, wy, half, half),
        ]
        with np.errstate(invalid="ignore"):
            lows = np.stack([p[0] for p in parts])
            highs = np.stack([p[1] for p in parts])
            hit = np.any(~np.isnan(lows), axis=0)
            lo = np.where(hit, np.nanmin(np.where(np.isnan(lows), np.inf, lows), axis=0), np.nan)
            hi = np.where(hit, np.nanmax(np.where(np.isnan(highs), -np.inf, highs), axis=0), np.nan)
        return lo, hi


def _ray_ellipsoid(o: np.ndarray, d: np.ndarray, axes: np.ndarray) -> np.ndarray:
    os_ = o / axes
    ds = d / axes
    qa = np.einsum("ij,ij->i", ds, ds)
    qb = 2.0 * ds @ os_
    qc = float(os_ @ os_) - 1.0
    disc = qb * qb - 4.0 * qa * qc
    t = np.full(len(d), np.inf)
    hit = disc >= 0.0
    root = (-qb[hit] - np.sqrt(disc[hit])) / (2.0 * qa[hit])
    t[hit] = np.where(root > 0.0, root, np.inf)
    return t


def _ray_box(o: np.ndarray, d: np.ndarray, half: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
        near = np.nanmax(np.fmin(t1, t2), axis=1)
        far = np.nanmin(np.fmax(t1, t2), axis=1)
    hit = (far >= near) & (near > 0.0)
    return np.where(hit, near, np.inf)


def _ray_sphere(o: np.ndarray, d: np.ndarray, centre: np.ndarray, r: float) -> np.ndarray:
    oc = o - centre
    qa = np.einsum("ij,ij->i", d, d)
    qb = 2.0 * d @ oc
    qc = float(oc @ oc) - r * r
    disc = qb * qb - 4.0 * qa * qc
    with np.errstate(invalid="ignore"):
        root = (-qb - np.sqrt(disc)) / (2.0 * qa)
    return np.where((disc >= 0.0) & (root > 0.0), root, np.inf)


def _ray_capsule(o: np.ndarray, d: np.ndarray, core: float, r: float) -> np.ndarray:
    qa = d[:, 1] ** 2 + d[:, 2] ** 2
    qb = 2.0 * (o[1] * d[:, 1] + o[2] * d[:, 2])
    qc = o[1] ** 2 + o[2] ** 2 - r * r
    disc = qb * qb - 4.0 * qa * qc
    with np.errstate(divide="ignore", invalid="ignore"):
        root = (-qb - np.sqrt(disc)) / (2.0 * qa)
        x = o[0] + root * d[:, 0]
    side = np.where((disc >= 0.0) & (qa > 0.0) & (root > 0.0) & (np.abs(x) <= core), root, np.inf)
    caps = np.minimum(
        _ray_sphere(o, d, np.array([core, 0.0, 0.0]), r),
        _ray_sphere(o, d, np.array([-core, 0.0, 0.0]), r),
    )
    return np.minimum(side, caps)


def _chord_ellipse(qx, qy, wx, wy, ea, eb) -> Tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore", invalid="ignore"):
        qa = (wx / ea) ** 2 + (wy / eb) ** 2
        qb = 2.0 * (qx * wx / ea**2 + qy * wy / eb**2)
        qc = (qx / ea) ** 2 + (qy / eb) ** 2 - 1.0
        disc = qb * qb - 4.0 * qa * qc
        root = np.sqrt(np.where(disc >= 0.0, disc, np.nan))
        return (-qb - root) / (2.0 * qa), (-qb + root) / (2.0 * qa)


def _chord_rect(qx, qy, wx, wy, ha, hb) -> Tuple[np.ndarray, np.ndarray]:
    lo = np.full(np.broadcast(qx, qy, wx, wy, ha, hb).shape, -np.inf)
    hi = np.full_like(lo, np.inf)
    for q, w, h in ((qx, wx, ha), (qy, wy, hb)):
        q, w, h = np.broadcast_arrays(q, w, h)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-h - q) / w
            t2 = (h - q) / w
        parallel = np.abs(w) < 1e-12
        inside = np.abs(q) <= h
        s_lo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.fmin(t1, t2))
        s_hi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.fmax(t1, t2))
        lo = np.maximum(lo, s_lo)
        hi = np.minimum(hi, s_hi)
    valid = (lo <= hi) & ~np.isnan(lo) & ~np.isnan(hi)
    return np.where(valid, lo, np.nan), np.where(valid, hi, np.nan)


@dataclass(frozen=True)
class ObjectShape:
    """Rigid object: one or more primitives fused in a common frame.

    Construction checks that at least one grasp on the isolated object
    succeeds with the default gripper.
    """

    kind: ShapeKind
    primitives: Tuple[Primitive, ...]
    color: Tuple[int, int, int] = (200, 120, 60)
    soft: bool = False
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ShapeKind(self.kind))
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives:
            raise InvalidArgumentError("ObjectShape needs at least one primitive", module="scene")
        if self.find_feasible_grasp() is None:
            raise InvalidArgumentError(
                f"Object '{self.name}' has no feasible grasp for the default gripper", module="scene"
            )

    @property
    def height(self) -> float:
        return max(p.height for p in self.primitives)

    def footprint_disks(self) -> np.ndarray:
        return np.vstack([p.footprint_disks() for p in self.primitives])

    @property
    def max_extent(self) -> float:
        """Largest dimension; exact for one primitive, a disk-cover bound for composites."""
        if len(self.primitives) == 1:
            a, b, c = self.primitives[0].half_extents
            return 2.0 * max(a, b, c)
        disks = self.footprint_disks()
        span = 0.0
        for i in range(len(disks)):
            d = np.hypot(disks[:, 0] - disks[i, 0], disks[:, 1] - disks[i, 1]) + disks[:, 2] + disks[i, 2]
            span = max(span, float(d.max()))
        return max(span, self.height)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership of object-frame points (floor at z=0)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(pts), dtype=bool)
        for p in self.primitives:
            local_xy = (pts[:, :2] - np.asarray(p.offset)) @ _rot2(p.yaw)
            inside |= p.contains_local(np.column_stack([local_xy, pts[:, 2]]))
        return inside

    def find_feasible_grasp(self) -> Optional[GraspPose]:
        """Search for a grasp that succeeds on this shape alone at the origin."""
        instance = ObjectInstance(0, self, 0.0, 0.0, 0.0)
        scene = Scene((instance,), bounds=(-1e3, 1e3, -1e3, 1e3))
        gripper = GripperSpec()

        # across each primitive's minor axis first
        seeds = []
        for p in self.primitives:
            a, b, c = p.half_extents
            across = p.yaw + (math.pi / 2 if a >= b else 0.0)
            for z in (gripper.floor_clearance, max(gripper.floor_clearance, c - 0.5 * gripper.jaw_length)):
                seeds.append((p.offset[0], p.offset[1], z, across))
        batch = np.array(seeds)
        result = grasp_success_batch(scene, batch[:, 0], batch[:, 1], batch[:, 2], batch[:, 3], gripper)
        if result.success.any():
            return GraspPose.from_array(batch[int(np.argmax(result.success))])

        disks = self.footprint_disks()
        reach = float(np.max(np.hypot(disks[:, 0], disks[:, 1]) + disks[:, 2]))
        grid = np.arange(-reach, reach + 1e-9, 0.5)
        gx, gy, gz, gt = np.meshgrid(
            grid,
            grid,
            np.arange(gripper.floor_clearance, self.height, 0.5),
            np.linspace(0.0, math.pi, 18, endpoint=False),
            indexing="ij",
        )
        gx, gy, gz, gt = (v.ravel() for v in (gx, gy, gz, gt))
        result = grasp_success_batch(scene, gx, gy, gz, gt, gripper)
        if result.success.any():
            i = int(np.argmax(result.success))
            return GraspPose(float(gx[i]), float(gy[i]), float(gz[i]), float(gt[i]))
        return None

    def to_dict(self) -> Dict[str, object]:
        return {
            "kind": self.kind.value,
            "primitives": [p.to_dict() for p in self.primitives],
            "color": list(self.color),
            "soft": self.soft,
            "name": self.name,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "ObjectShape":
        return cls(
            ShapeKind(data["kind"]),
            tuple(Primitive.from_dict(p) for p in data["primitives"]),  # type: ignore[union-attr]
            tuple(data.get("color", (200, 120, 60))),  # type: ignore[arg-type]
            bool(data.get("soft", False)),
            str(data.get("name", "")),
        )


@dataclass(frozen=True)
class ObjectInstance:
    """A shape placed on the floor at (x, y) with heading ``yaw``."""

    id: int
    shape: ObjectShape
    x: float
    y: float
    yaw: float

    def primitive_frames(self) -> List[Tuple[Primitive, float, float, float]]:
        """(primitive, world x, world y, world yaw) for each primitive."""
        rot = _rot2(self.yaw)
        frames = []
        for p in self.shape.primitives:
            cx, cy = rot @ np.asarray(p.offset) + np.array([self.x, self.y])
            frames.append((p, float(cx), float(cy), self.yaw + p.yaw))
        return frames

    def world_disks(self) -> np.ndarray:
        disks = self.shape.footprint_disks()
        xy = disks[:, :2] @ _rot2(self.yaw).T + np.array([self.x, self.y])
        return np.column_stack([xy, disks[:, 2]])

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        local_xy = (pts[:, :2] - np.array([self.x, self.y])) @ _rot2(self.yaw)
        return self.shape.contains(np.column_stack([local_xy, pts[:, 2]]))


@dataclass(frozen=True)
class Scene:
    """Objects resting on the cell floor."""

    objects: Tuple[ObjectInstance, ...]
    floor_z: float = Workspace.FLOOR_Z
    bounds: Tuple[float, float, float, float] = (Workspace.X_MIN, Workspace.X_MAX, Workspace.Y_MIN, Workspace.Y_MAX)

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("Object ids in a scene must be unique", module="scene")

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def object_ids(self) -> List[int]:
        return [o.id for o in self.objects]

    def remove(self, object_id: int) -> "Scene":
        return replace(self, objects=tuple(o for o in self.objects if o.id != object_id))

    def in_bounds(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x_min, x_max, y_min, y_max = self.bounds
        return (x >= x_min) & (x <= x_max) & (y >= y_min) & (y <= y_max)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Object id occupying each point, -1 where free space."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        owner = np.full(len(pts), -1, dtype=int)
        for obj in self.objects:
            owner[(owner < 0) & obj.contains(pts)] = obj.id
        return owner

    def raycast(self, origin: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Nearest object hit per ray: (distance along ray, object id); inf and -1 on miss.

        Each primitive is only intersected with the rays that pass through its
        bounding sphere.
        """
        origin = np.asarray(origin, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        best = np.full(len(dirs), np.inf)
        label = np.full(len(dirs), -1, dtype=int)
        lengths = np.einsum("ij,ij->i", dirs, dirs)
        for obj in self.objects:
            for p, cx, cy, yaw in obj.primitive_frames():
                centre = np.array([cx, cy, self.floor_z + p.half_extents[2]]) - origin
                radius = math.sqrt(sum(h * h for h in p.half_extents)) + BOUND_SLACK
                along = dirs @ centre
                miss2 = float(centre @ centre) - along**2 / lengths
                inside = float(centre @ centre) <= radius * radius
                rays = np.flatnonzero((miss2 <= radius * radius) & ((along > 0.0) | inside))
                if len(rays) == 0:
                    continue
                rot = _rot2(yaw)
                o_xy = (origin[:2] - np.array([cx, cy])) @ rot
                o_local = np.array([o_xy[0], o_xy[1], origin[2] - self.floor_z])
                d_local = np.column_stack([dirs[rays, :2] @ rot, dirs[rays, 2]])
                t = p.ray_local(o_local, d_local)
                closer = t < best[rays]
                best[rays[closer]] = t[closer]
                label[rays[closer]] = obj.id
        return best, label

    def max_interpenetration(self) -> float:
        return _max_penetration([o.world_disks() for o in self.objects])

    def to_dict(self) -> Dict[str, object]:
        return {
            "floor_z": self.floor_z,
            "bounds": list(self.bounds),
            "objects": [
                {"id": o.id, "x": o.x, "y": o.y, "yaw": o.yaw, "shape": o.shape.to_dict()} for o in self.objects
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "Scene":
        objects = tuple(
            ObjectInstance(int(o["id"]), ObjectShape.from_dict(o["shape"]), o["x"], o["y"], o["yaw"])
            for o in data["objects"]  # type: ignore[union-attr]
        )
        return cls(objects, float(data.get("floor_z", 0.0)), tuple(data["bounds"]))  # type: ignore[arg-type]


# --- grasp outcome ------------------------------------------------------------------------


@dataclass
class GraspBatchResult:
    """Per-grasp outcome of :func:`grasp_success_batch`.

    ``reason`` indexes :data:`FAILURE_ORDER` (-1 on success); ``object_id`` is
    the single object between the jaws or -1.
    """

    success: np.ndarray
    reason: np.ndarray
    object_id: np.ndarray
    width: np.ndarray
    offset: np.ndarray

    def failure(self, i: int) -> Optional[FailureReason]:
        r = int(self.reason[i])
        return None if r < 0 else FAILURE_ORDER[r]


def _object_hull(
    obj: ObjectInstance,
    x: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    heights: np.ndarray,
    floor_z: float,
    reach: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Extent of ``obj`` along each jaw line, merged from intervals touching the jaw span.

    ``heights`` has shape (levels, N); returns (lo, hi) of that shape with NaN
    where the object does not reach the jaws.
    """
    intervals = []
    for p, cx, cy, yaw in obj.primitive_frames():
        c, s = math.cos(yaw), math.sin(yaw)
        dx, dy = x - cx, y - cy
        qx, qy = c * dx + s * dy, -s * dx + c * dy
        rel = theta - yaw
        wx, wy = np.cos(rel), np.sin(rel)
        intervals.append(p.chord_local(qx[None], qy[None], wx[None], wy[None], heights - floor_z))

    hull_lo = np.full(heights.shape, np.nan)
    hull_hi = np.full(heights.shape, np.nan)
    for _ in range(len(intervals)):
        for lo, hi in intervals:
            ref_lo = np.where(np.isnan(hull_lo), -reach, np.fmin(hull_lo, -reach))
            ref_hi = np.where(np.isnan(hull_hi), reach, np.fmax(hull_hi, reach))
            with np.errstate(invalid="ignore"):
                touch = (lo <= ref_hi) & (hi >= ref_lo)
            hull_lo = np.where(touch, np.fmin(hull_lo, lo), hull_lo)
            hull_hi = np.where(touch, np.fmax(hull_hi, hi), hull_hi)
    return hull_lo, hull_hi


def grasp_success_batch(
    scene: Scene,
    x: np.ndarray,
    y: np.ndarray,
    z: np.ndarray,
    theta: np.ndarray,
    gripper: GripperSpec,
    d_slip: float = GripperDefaults.SLIP_DISTANCE,
) -> GraspBatchResult:
    """Deterministic outcome of N top-down grasps on ``scene``.

    Checks run in order: workspace and floor clearance (collision), objects
    between the open jaws (none is empty-jaws, several is collision), grasped
    width against the gripper range, then the contact midpoint offset (slip).
    """
    x, y, z, theta = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, y, z, theta))
    n = len(x)
    reach = 0.5 * gripper.max_width
    # jaws close along one line, so only the cross-section at z counts
    heights = z[None, :]

    touched = np.zeros(n, dtype=int)
    object_id = np.full(n, -1, dtype=int)
    width = np.full(n, np.nan)
    offset = np.full(n, np.nan)
    soft = np.zeros(n, dtype=bool)
    for obj in scene.objects:
        lo, hi = (v[0] for v in _object_hull(obj, x, y, theta, heights, scene.floor_z, reach))
        w = hi - lo
        hit = ~np.isnan(w)
        touched += hit
        if not hit.any():
            continue
        mid = 0.5 * (lo + hi)
        object_id = np.where(hit, obj.id, object_id)
        width = np.where(hit, w, width)
        offset = np.where(hit, mid, offset)
        soft = np.where(hit, obj.shape.soft, soft)

    code = {reason: i for i, reason in enumerate(FAILURE_ORDER)}
    reason = np.full(n, -1, dtype=int)

    def mark(mask: np.ndarray, r: FailureReason) -> None:
        reason[(reason < 0) & mask] = code[r]

    mark(~scene.in_bounds(x, y), FailureReason.COLLISION)
    mark(z < scene.floor_z + gripper.floor_clearance, FailureReason.COLLISION)
    mark(touched == 0, FailureReason.EMPTY_JAWS)
    mark(touched > 1, FailureReason.COLLISION)
    with np.errstate(invalid="ignore"):
        mark(width > gripper.max_width + np.where(soft, gripper.soft_tolerance, 0.0), FailureReason.WIDTH_TOO_WIDE)
        mark(width < gripper.min_width, FailureReason.WIDTH_TOO_NARROW)
        mark(np.abs(offset) > d_slip, FailureReason.SLIP)

    single = touched == 1
    return GraspBatchResult(
        success=reason < 0,
        reason=reason,
        object_id=np.where(single, object_id, -1),
        width=np.where(single, width, np.nan),
        offset=np.where(single, offset, np.nan),
    )


@dataclass(frozen=True)
class GraspOutcome:
    success: bool
    object_id: Optional[int] = None
    reason: Optional[FailureReason] = None


def execute_grasp(
    scene: Scene,
    g: GraspPose,
    gripper: GripperSpec,
    d_slip: float = GripperDefaults.SLIP_DISTANCE,
) -> Tuple[GraspOutcome, Scene]:
    """Run one grasp; a lifted object leaves the scene."""
    res = grasp_success_batch(scene, [g.x], [g.y], [g.z], [g.theta], gripper, d_slip)
    if res.success[0]:
        oid = int(res.object_id[0])
        logger.debug(f"Grasp at ({g.x:.2f}, {g.y:.2f}, {g.z:.2f}) lifted object {oid}")
        return GraspOutcome(True, oid), scene.remove(oid)
    return GraspOutcome(False, None, res.failure(0)), scene


# --- object generation --------------------------------------------------------------------


def _random_color(rng: np.random.Generator) -> Tuple[int, int, int]:
    return tuple(int(v) for v in rng.integers(40, 256, size=3))  # type: ignore[return-value]


def _random_primitive(
    rng: np.random.Generator, max_length: float, offset=(0.0, 0.0), yaw: float = 0.0
) -> Primitive:
    kind = PrimitiveKind(rng.choice([k.value for k in PrimitiveKind]))
    width = rng.uniform(1.2, 2.6)
    length = rng.uniform(max(2.0, width), max_length)
    if kind == PrimitiveKind.CAPSULE:
        extents = (0.5 * length, 0.5 * width, 0.5 * width)
    else:
        extents = (0.5 * length, 0.5 * width, rng.uniform(0.75, 2.0))
    return Primitive(kind, extents, offset, yaw)


def random_object(rng: RandomSource, profile: ObjectProfile, soft_fraction: float = 0.5, index: int = 0) -> ObjectShape:
    """Draw one object from the seen or unseen distribution.

    Seen objects are single primitives; unseen ones are 2-4 primitives fused
    in a chain. Shapes without a feasible grasp are redrawn.
    """
    gen = as_generator(rng, "objects")
    for _ in range(100):
        soft = bool(gen.random() < soft_fraction)
        color = _random_color(gen)
        try:
            if ObjectProfile(profile) == ObjectProfile.SEEN:
                prim = _random_primitive(gen, 8.0)
                shape = ObjectShape(ShapeKind(prim.kind.value), (prim,), color, soft, f"seen-{index:03d}")
            else:
                shape = ObjectShape(
                    ShapeKind.COMPOSITE, _composite_primitives(gen), color, soft, f"unseen-{index:03d}"
                )
        except InvalidArgumentError:
            continue
        if shape.max_extent <= 10.0:
            return shape
    raise InvalidArgumentError(f"Could not draw a valid {profile} object after 100 attempts", module="scene")


def _composite_primitives(rng: np.random.Generator) -> Tuple[Primitive, ...]:
    count = int(rng.integers(2, 5))
    prims = [_random_primitive(rng, 5.0)]
    for _ in range(count - 1):
        parent = prims[int(rng.integers(len(prims)))]
        along = parent.half_extents[0] * 0.8 * rng.choice([-1.0, 1.0])
        anchor = np.asarray(parent.offset) + _rot2(parent.yaw) @ np.array([along, 0.0])
        yaw = parent.yaw + rng.choice([-1.0, 1.0]) * rng.uniform(math.pi / 4, 3 * math.pi / 4)
        child = _random_primitive(rng, 5.0, yaw=yaw)
        centre = anchor + _rot2(yaw) @ np.array([0.6 * child.half_extents[0], 0.0])
        prims.append(replace(child, offset=(float(centre[0]), float(centre[1]))))
    mean = np.mean([p.offset for p in prims], axis=0)
    return tuple(replace(p, offset=(p.offset[0] - mean[0], p.offset[1] - mean[1])) for p in prims)


def generate_object_set(
    profile: ObjectProfile, count: int, seed: RandomSource, soft_fraction: float = 0.5
) -> List[ObjectShape]:
    """Fixed, seed-determined list of object shapes."""
    if count < 1:
        raise InvalidArgumentError(f"Object set needs count >= 1, got {count}", module="scene")
    gen = as_generator(seed, f"objects-{ObjectProfile(profile).value}")
    return [random_object(gen, profile, soft_fraction, i) for i in range(count)]


def generate_training_set(
    seed: RandomSource, count: int = CollectionSettings.TRAINING_SET_SIZE, soft_fraction: float = 0.5
) -> List[ObjectShape]:
    """Seen-profile pool random collection draws from."""
    return generate_object_set(ObjectProfile.SEEN, count, seed, soft_fraction)


def evaluation_object_set(
    profile: ObjectProfile, seed: RandomSource, count: int = EpisodeSettings.OBJECT_COUNT, soft_fraction: float = 0.5
) -> List[ObjectShape]:
    """Fixed evaluation objects: seen ones are the head of the training pool, unseen ones a separate draw."""
    if ObjectProfile(profile) == ObjectProfile.SEEN:
        return generate_training_set(seed, max(count, CollectionSettings.TRAINING_SET_SIZE), soft_fraction)[:count]
    return generate_object_set(ObjectProfile.UNSEEN, count, seed, soft_fraction)


# --- scattering ---------------------------------------------------------------------------


def _max_penetration(disk_sets: Sequence[np.ndarray]) -> float:
    worst = 0.0
    for i in range(len(disk_sets)):
        for j in range(i + 1, len(disk_sets)):
            a, b = disk_sets[i], disk_sets[j]
            d = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
            worst = max(worst, float(np.max(a[:, None, 2] + b[None, :, 2] - d)))
    return worst


def _clamp_into(disks: np.ndarray, bounds: Tuple[float, float, float, float]) -> np.ndarray:
    x_min, x_max, y_min, y_max = bounds
    shift = np.zeros(2)
    shift[0] = max(0.0, x_min - np.min(disks[:, 0] - disks[:, 2])) - max(0.0, np.max(disks[:, 0] + disks[:, 2]) - x_max)
    shift[1] = max(0.0, y_min - np.min(disks[:, 1] - disks[:, 2])) - max(0.0, np.max(disks[:, 1] + disks[:, 2]) - y_max)
    return shift


def _settle(
    shapes: Sequence[ObjectShape],
    xy: np.ndarray,
    yaws: np.ndarray,
    bounds: Tuple[float, float, float, float],
    rng: np.random.Generator,
    max_iterations: int,
    target: float = SETTLE_TARGET,
) -> Tuple[np.ndarray, int]:
    if len(shapes) == 0:
        return xy.copy(), 0
    local = []
    for shape, yaw in zip(shapes, yaws):
        disks = shape.footprint_disks()
        local.append(np.column_stack([disks[:, :2] @ _rot2(yaw).T, disks[:, 2]]))
    owner = np.concatenate([np.full(len(d), i) for i, d in enumerate(local)])
    radii = np.concatenate([d[:, 2] for d in local])
    xy = xy.copy()

    for iteration in range(max_iterations + 1):
        for i, d in enumerate(local):
            xy[i] += _clamp_into(np.column_stack([d[:, :2] + xy[i], d[:, 2]]), bounds)
        centres = np.vstack([d[:, :2] + xy[i] for i, d in enumerate(local)])
        diff = centres[None, :, :] - centres[:, None, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        pen = radii[:, None] + radii[None, :] - dist
        pen[owner[:, None] == owner[None, :]] = -np.inf
        if len(radii) == 0 or np.max(pen) <= target:
            return xy, iteration
        if iteration == max_iterations:
            break

        worst: Dict[Tuple[int, int], Tuple[float, int, int]] = {}
        for a, b in zip(*np.nonzero(np.triu(pen > 0.0, k=1))):
            key = (int(owner[a]), int(owner[b]))
            if key not in worst or pen[a, b] > worst[key][0]:
                worst[key] = (float(pen[a, b]), int(a), int(b))
        moves = np.zeros_like(xy)
        for (oa, ob), (depth, a, b) in worst.items():
            if dist[a, b] > 1e-9:
                direction = diff[a, b] / dist[a, b]
            else:
                angle = rng.uniform(0.0, 2.0 * math.pi)
                direction = np.array([math.cos(angle), math.sin(angle)])
            step = 0.5 * (depth + SETTLE_MARGIN) * direction
            moves[oa] -= step
            moves[ob] += step
        xy += moves
    raise ScatterError(MESSAGES["SCATTER_FAILED"].format(iterations=max_iterations), iterations=max_iterations)


def _separated(scene: Scene, limit: float) -> Scene:
    worst = scene.max_interpenetration()
    if worst > limit:
        raise ScatterError(MESSAGES["OVERLAP_LEFT"].format(depth=worst, limit=limit))
    return scene


def _settle_target(limit: float) -> float:
    return min(SETTLE_TARGET, 0.5 * limit)


def _build_scene(
    shapes: Sequence[ObjectShape], xy: np.ndarray, yaws: np.ndarray, ids: Sequence[int], floor_z: float, bounds
) -> Scene:
    return Scene(
        tuple(
            ObjectInstance(i, s, float(p[0]), float(p[1]), float(yaw))
            for i, s, p, yaw in zip(ids, shapes, xy, yaws)
        ),
        floor_z,
        bounds,
    )


def scatter(
    objects: Sequence[ObjectShape],
    seed: RandomSource,
    sigma: float = ScatterSettings.SIGMA,
    bounds: Tuple[float, float, float, float] = (Workspace.X_MIN, Workspace.X_MAX, Workspace.Y_MIN, Workspace.Y_MAX),
    floor_z: float = Workspace.FLOOR_Z,
    max_iterations: int = ScatterSettings.MAX_ITERATIONS,
    max_interpenetration: float = ScatterSettings.MAX_INTERPENETRATION,
) -> Scene:
    """Bin-dump ``objects`` around the workspace centre and push them apart.

    Raises:
        ScatterError: If overlaps remain after ``max_iterations`` separation steps, or any
            object pair still interpenetrates by more than ``max_interpenetration``.
    """
    gen = as_generator(seed, "scene")
    x_min, x_max, y_min, y_max = bounds
    centre = np.array([0.5 * (x_min + x_max), 0.5 * (y_min + y_max)])
    xy = np.empty((len(objects), 2))
    for i in range(len(objects)):
        for _ in range(100):
            p = centre + sigma * gen.standard_normal(2)
            if x_min <= p[0] <= x_max and y_min <= p[1] <= y_max:
                break
        xy[i] = np.clip(p, [x_min, y_min], [x_max, y_max])
    yaws = gen.uniform(-math.pi, math.pi, size=len(objects))
    settled, iterations = _settle(objects, xy, yaws, bounds, gen, max_iterations, _settle_target(max_interpenetration))
    logger.debug(f"Scattered {len(objects)} objects, settled in {iterations} iterations")
    return _separated(_build_scene(objects, settled, yaws, range(len(objects)), floor_z, bounds), max_interpenetration)


def scatter_with_retry(objects: Sequence[ObjectShape], seed: RandomSource, attempts: int = 10, **kwargs) -> Scene:
    """Re-dump with fresh randomness until separation converges."""
    gen = as_generator(seed, "scene")
    last: Optional[ScatterError] = None
    for attempt in range(attempts):
        try:
            return scatter(objects, gen, **kwargs)
        except ScatterError as e:
            logger.warning(f"Scatter attempt {attempt + 1}/{attempts} failed: {e}")
            last = e
    assert last is not None
    raise last


def sweep(
    scene: Scene,
    seed: RandomSource,
    sigma: float = ScatterSettings.SWEEP_SIGMA,
    attempts: int = 10,
    max_interpenetration: float = ScatterSettings.MAX_INTERPENETRATION,
) -> Scene:
    """Jostle the remaining objects the way a sweeping arm motion would.

    Object ids are preserved. If separation keeps failing, or leaves a pair
    deeper than ``max_interpenetration``, the scene is returned unchanged.
    """
    if not scene.objects:
        return scene
    gen = as_generator(seed, "scene")
    shapes = [o.shape for o in scene.objects]
    base = np.array([[o.x, o.y] for o in scene.objects])
    target = _settle_target(max_interpenetration)
    for attempt in range(attempts):
        xy = base + sigma * gen.standard_normal(base.shape)
        yaws = np.array([o.yaw for o in scene.objects]) + gen.uniform(-math.pi, math.pi, size=len(shapes))
        try:
            settled, _ = _settle(shapes, xy, yaws, scene.bounds, gen, ScatterSettings.MAX_ITERATIONS, target)
            swept = _build_scene(shapes, settled, yaws, scene.object_ids, scene.floor_z, scene.bounds)
            return _separated(swept, max_interpenetration)
        except ScatterError as e:
            logger.warning(f"Sweep attempt {attempt + 1}/{attempts} failed: {e}")
    logger.warning("Sweep gave up; leaving the scene as it was")
    return scene


def reference_scene() -> Scene:
    """Fixed arrangement of boxes used to align a camera against the nominal cell."""
    layout = [
        ((-10.0, -8.0, 0.0), (3.0, 1.0, 1.5)),
        ((9.0, -10.0, 0.6), (1.2, 2.5, 2.5)),
        ((-8.0, 11.0, -0.4), (2.5, 1.2, 1.0)),
        ((8.0, 9.0, 0.3), (1.1, 1.1, 3.0)),
        ((0.0, 0.0, 0.9), (4.0, 1.2, 2.0)),
    ]
    objects = []
    for i, ((x, y, yaw), extents) in enumerate(layout):
        shape = ObjectShape(ShapeKind.BOX, (Primitive(PrimitiveKind.BOX, extents),), name=f"fixture-{i}")
        objects.append(ObjectInstance(i, shape, x, y, yaw))
    return Scene(tuple(objects))
