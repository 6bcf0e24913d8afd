"""Model Service - Saves and loads trained grasp scorers."""

import logging
from pathlib import Path

from ..exceptions import InvalidArgumentError, InvalidModelError
from ..planners import ScorerModel

logger = logging.getLogger(__name__)


class ModelService:
    """Service for scorer model files."""

    @staticmethod
    def save(model: ScorerModel, path: str) -> str:
        target = Path(path)
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(model.to_bytes())
        logger.info(f"Saved {model.kind.value} scorer ({model.parameter_count} parameters) to {path}")
        return path

    @staticmethod
    def load(path: str) -> ScorerModel:
        """Read a scorer file.

        Raises:
            InvalidModelError: If the file is missing or not a scorer.
        """
        try:
            data = Path(path).read_bytes()
        except FileNotFoundError as e:
            raise InvalidModelError(f"Scorer file {path} not found") from e
        try:
            model = ScorerModel.from_bytes(data)
        except InvalidArgumentError as e:
            raise InvalidModelError(f"{path}: {e}") from e
        logger.debug(f"Loaded {model.kind.value} scorer from {path}")
        return model
