"""Exception hierarchy; each error names the module contract it belongs to."""

from typing import Optional


class ReplabError(Exception):
    """Base class for all simulator errors.

    ``module`` names the contract that failed; a raise site may override the
    class default.
    """

    module = "replab"

    def __init__(self, message: str = "", module: Optional[str] = None):
        super().__init__(message)
        if module is not None:
            self.module = module


class InvalidArgumentError(ReplabError):
    """Input violates an operation's precondition."""


class ConfigurationError(ReplabError):
    """Cell or camera configuration cannot be used."""

    module = "config"


class ReachabilityError(ReplabError):
    """Target lies outside the arm's reachable envelope or joint limits."""

    module = "arm"


class ScatterError(ReplabError):
    """Objects could not be separated after scattering."""

    module = "scene"

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


class DegenerateInputError(ReplabError):
    """Not enough independent data for a fit or metric."""

    module = "calibration"


class InvalidModelError(ReplabError):
    """A fitted model cannot be applied."""

    module = "calibration"


class AlignmentFailedError(ReplabError):
    """Camera alignment did not reach the discrepancy tolerance."""

    module = "calibration"

    def __init__(self, message: str, discrepancy: float, pose: Optional[object] = None):
        super().__init__(message)
        self.discrepancy = discrepancy
        self.pose = pose


class NoTargetError(ReplabError):
    """A planner has nothing to plan on."""

    module = "planners"


class OutOfViewError(ReplabError):
    """A candidate projects outside the camera image."""

    module = "planners"


class DegenerateDataError(ReplabError):
    """Training data cannot produce a scorer."""

    module = "planners"


class DatasetFormatError(ReplabError):
    """A dataset directory does not match the expected layout."""

    module = "benchmark"


class UsageError(ReplabError):
    """Bad command-line usage."""

    module = "cli"
