"""Dataset Service - Reads and writes grasp datasets.

A dataset is a directory with three files:

- ``index.json``: format name and version, the record layout, the record
  count, the depth image layout and the camera view of every cell.
- ``records.bin``: fixed-width little-endian records, one per grasp.
- ``depth.bin``: uint16 depth images of one shape, in hundredths of a
  centimetre; a record's ``depth_ref`` is the position of its image.
"""

import json
import logging
from pathlib import Path
from typing import BinaryIO, Dict, List, Optional, Sequence, Tuple

from ..constants import PATHS
from ..exceptions import DatasetFormatError, InvalidArgumentError
from ..records import DEPTH_DTYPE, DEPTH_UNIT, RECORD_FIELDS, RECORD_FORMAT, RECORD_SIZE, CameraView, GraspRecord

logger = logging.getLogger(__name__)

FORMAT_NAME = "replab-grasps"
FORMAT_VERSION = 2


def _index(
    count: int, images: int, shape: Optional[Tuple[int, int]], views: Dict[int, CameraView]
) -> Dict[str, object]:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "record_format": RECORD_FORMAT,
        "record_size": RECORD_SIZE,
        "fields": list(RECORD_FIELDS),
        "record_count": count,
        "depth": {
            "dtype": DEPTH_DTYPE,
            "unit_cm": DEPTH_UNIT,
            "shape": list(shape) if shape else None,
            "count": images,
        },
        "views": {str(cell): view.to_dict() for cell, view in sorted(views.items())},
    }


class DatasetWriter:
    """Append-only writer for one dataset directory.

    The index is rewritten on :meth:`close`, so a directory is only valid
    once the writer has been closed. Every depth image of a dataset has the
    same shape and every cell one camera view.
    """

    def __init__(self, path: str):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.count = 0
        self.images = 0
        self.shape: Optional[Tuple[int, int]] = None
        self.views: Dict[int, CameraView] = {}
        self._records: Optional[BinaryIO] = open(self.path / PATHS["DATASET_RECORDS"], "wb")
        self._depth: Optional[BinaryIO] = open(self.path / PATHS["DATASET_DEPTH"], "wb")

    def append(self, record: GraspRecord) -> None:
        if self._records is None or self._depth is None:
            raise DatasetFormatError(f"Dataset writer for {self.path} is closed")
        shape = (int(record.depth.shape[0]), int(record.depth.shape[1]))
        if self.shape is None:
            self.shape = shape
        elif shape != self.shape:
            raise DatasetFormatError(f"Depth image {shape} does not match the dataset's {self.shape}")
        view = self.views.setdefault(record.cell_id, record.view)
        if view is not record.view and not view.same_as(record.view):
            raise DatasetFormatError(f"Cell {record.cell_id} has records from two camera views")
        self._records.write(record.pack(self.images))
        self._depth.write(record.depth_bytes())
        self.images += 1
        self.count += 1

    def extend(self, records: Sequence[GraspRecord]) -> None:
        for record in records:
            self.append(record)

    def close(self) -> None:
        if self._records is None or self._depth is None:
            return
        self._records.close()
        self._depth.close()
        self._records = self._depth = None
        with open(self.path / PATHS["DATASET_INDEX"], "w", encoding="utf-8") as fh:
            json.dump(_index(self.count, self.images, self.shape, self.views), fh, indent=2, sort_keys=True)
            fh.write("\n")
        logger.info(f"Wrote {self.count} grasp records to {self.path}")

    def __enter__(self) -> "DatasetWriter":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


class DatasetService:
    """Service for grasp dataset directories."""

    @staticmethod
    def write(path: str, records: Sequence[GraspRecord]) -> str:
        with DatasetWriter(path) as writer:
            writer.extend(records)
        return path

    @staticmethod
    def read_index(path: str) -> Dict[str, object]:
        index_path = Path(path) / PATHS["DATASET_INDEX"]
        try:
            with open(index_path, encoding="utf-8") as fh:
                index = json.load(fh)
        except FileNotFoundError as e:
            raise DatasetFormatError(f"No dataset index at {index_path}") from e
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"Dataset index {index_path} is not valid JSON: {e}") from e
        if index.get("format") != FORMAT_NAME or index.get("version") != FORMAT_VERSION:
            raise DatasetFormatError(
                f"Unsupported dataset format {index.get('format')!r} version {index.get('version')!r}"
            )
        if index.get("record_format") != RECORD_FORMAT or index.get("record_size") != RECORD_SIZE:
            raise DatasetFormatError(f"Dataset {path} uses record layout {index.get('record_format')!r}")
        depth = index.get("depth") or {}
        if depth.get("dtype") != DEPTH_DTYPE or depth.get("unit_cm") != DEPTH_UNIT:
            raise DatasetFormatError(f"Dataset {path} stores depth as {depth.get('dtype')!r}")
        return index

    @staticmethod
    def _views(index: Dict[str, object]) -> Dict[int, CameraView]:
        try:
            return {int(cell): CameraView.from_dict(view) for cell, view in index["views"].items()}  # type: ignore
        except (AttributeError, KeyError, ValueError, InvalidArgumentError) as e:
            raise DatasetFormatError(f"Dataset index has unreadable camera views: {e}") from e

    @classmethod
    def read(cls, path: str) -> List[GraspRecord]:
        """All records of a dataset, exactly as written.

        Raises:
            DatasetFormatError: On a missing or foreign index, truncated files
                or a record whose depth ref or cell has no image or view.
        """
        index = cls.read_index(path)
        count = int(index["record_count"])  # type: ignore[call-overload]
        layout: Dict[str, object] = index["depth"]  # type: ignore[assignment]
        images = int(layout["count"])  # type: ignore[call-overload]
        views = cls._views(index)
        image_size = 0
        if layout["shape"] is not None:
            rows, cols = layout["shape"]  # type: ignore[misc]
            image_size = int(rows) * int(cols) * 2
        base = Path(path)
        records = (base / PATHS["DATASET_RECORDS"]).read_bytes()
        depth = (base / PATHS["DATASET_DEPTH"]).read_bytes()
        if len(records) != count * RECORD_SIZE or len(depth) != images * image_size:
            raise DatasetFormatError(
                f"Dataset {path} should hold {count} records and {images} images; "
                f"found {len(records)} record bytes, {len(depth)} depth bytes"
            )
        out = []
        for i in range(count):
            data = records[i * RECORD_SIZE : (i + 1) * RECORD_SIZE]
            ref = GraspRecord.depth_ref(data)
            cell = int.from_bytes(data[:2], "little")
            if ref >= images:
                raise DatasetFormatError(f"Record {i} refers to depth image {ref} of {images}")
            if cell not in views:
                raise DatasetFormatError(f"Record {i} is from cell {cell}, which has no camera view")
            try:
                record = GraspRecord.unpack(data, depth[ref * image_size : (ref + 1) * image_size], views[cell])
            except (ValueError, InvalidArgumentError) as e:
                raise DatasetFormatError(f"Record {i} of {path} is unreadable: {e}") from e
            out.append(record)
        logger.debug(f"Read {count} grasp records from {path}")
        return out

    @classmethod
    def merge(cls, paths: Sequence[str], out: str) -> str:
        """Merge shard directories into one, ordered by (cell id, ordinal).

        Raises:
            DatasetFormatError: If two shards hold the same (cell id, ordinal).
        """
        merged = sorted((r for p in paths for r in cls.read(p)), key=lambda r: (r.cell_id, r.ordinal))
        for a, b in zip(merged, merged[1:]):
            if (a.cell_id, a.ordinal) == (b.cell_id, b.ordinal):
                raise DatasetFormatError(f"Shards overlap at cell {a.cell_id}, ordinal {a.ordinal}")
        return cls.write(out, merged)
