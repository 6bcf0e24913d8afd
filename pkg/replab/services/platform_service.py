"""Platform Service - Where per-user replab configuration lives."""

import os
import sys
from pathlib import Path

APP_DIR_NAME = "replab"


class PlatformService:
    """Service for platform-specific paths."""

    @staticmethod
    def is_windows() -> bool:
        """Check if running on Windows."""
        return sys.platform == "win32"

    @classmethod
    def get_config_dir(cls) -> Path:
        """Get the configuration directory path.

        Returns:
            - Windows: %APPDATA%\\replab
            - macOS/Linux: $XDG_CONFIG_HOME/replab or ~/.config/replab
        """
        if cls.is_windows():
            base = os.environ.get("APPDATA")
            if base:
                return Path(base) / APP_DIR_NAME
            return Path.home() / "AppData" / "Roaming" / APP_DIR_NAME
        xdg_config = os.environ.get("XDG_CONFIG_HOME")
        if xdg_config:
            return Path(xdg_config) / APP_DIR_NAME
        return Path.home() / ".config" / APP_DIR_NAME
