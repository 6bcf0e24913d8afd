"""Services module for replab."""

from .config_service import CellConfig, ConfigService
from .dataset_service import DatasetService, DatasetWriter
from .manifest_service import ManifestService, RunManifest
from .model_service import ModelService
from .platform_service import PlatformService
from .report_service import ReportService

__all__ = [
    "CellConfig",
    "ConfigService",
    "DatasetService",
    "DatasetWriter",
    "ManifestService",
    "RunManifest",
    "ModelService",
    "PlatformService",
    "ReportService",
]
