"""replab - simulated REPLAB workcell and grasping/reaching benchmark harness."""

# Version is read from package metadata (set in pyproject.toml)
try:
    from importlib.metadata import PackageNotFoundError, version

    try:
        __version__ = version("replab-sim")
    except PackageNotFoundError:
        # Package not installed (development mode)
        __version__ = "0.0.0-dev"
except ImportError:
    __version__ = "0.0.0-dev"

__author__ = "Brz"
__email__ = "brz@brznet.fr"

from .replab import main  # noqa: E402

__all__ = ["main", "__version__"]
