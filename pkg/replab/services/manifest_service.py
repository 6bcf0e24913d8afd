"""Manifest Service - Records what a command ran so it can be run again."""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

from ..constants import PATHS
from ..exceptions import UsageError

logger = logging.getLogger(__name__)


@dataclass
class RunManifest:
    """Command, arguments, config snapshot, seed and outputs of one run.

    No timestamps are stored, so re-running a manifest into the same
    directory writes identical files, the manifest included.
    """

    command: str
    argv: List[str]
    config: str
    seed: int
    artifacts: Dict[str, str] = field(default_factory=dict)
    version: str = "0.0.0-dev"


class ManifestService:
    """Service for run manifests."""

    @staticmethod
    def path_for(out_dir: str) -> Path:
        return Path(out_dir) / PATHS["MANIFEST_FILE"]

    @classmethod
    def write(cls, out_dir: str, manifest: RunManifest) -> str:
        target = cls.path_for(out_dir)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as fh:
            json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")
        logger.info(f"Wrote run manifest to {target}")
        return str(target)

    @staticmethod
    def read(path: str) -> RunManifest:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
            return RunManifest(**data)
        except FileNotFoundError as e:
            raise UsageError(f"Manifest {path} not found") from e
        except (json.JSONDecodeError, TypeError) as e:
            raise UsageError(f"{path} is not a run manifest: {e}") from e
