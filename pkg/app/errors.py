"""
Exception hierarchy for curve matching.

Every failure raised by the package derives from ElasticMatchingError.
InputError covers bad files, bad configuration and unsupported requests;
NumericalError covers geometry and optimizer failures. The CLI maps the two
families onto exit codes 1 and 2.
"""
from typing import Optional


class ElasticMatchingError(Exception):
    """Base class for all package errors"""


class InputError(ElasticMatchingError):
    """Raised when user-supplied input cannot be used"""


class NumericalError(ElasticMatchingError):
    """Raised when a computation cannot produce a valid result"""


class ParseError(InputError):
    """
    Raised when a curve, feature, config or animation file is malformed.

    Args:
        message: What went wrong
        path: File being parsed, when known
        line: 1-based line number, when known
    """

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class UnsupportedChannel(InputError):
    """Raised for animation channels other than Euler rotations and root translation"""


class InvalidCurve(InputError):
    """Raised when samples, grids or topology do not describe a valid curve"""


class InvalidWarp(InputError):
    """Raised when reparametrization samples are not monotone onto [0, 2*pi]"""


class ConfigError(InputError):
    """Raised when a run configuration fails validation"""


class MethodUnavailable(InputError):
    """Raised when an optimizer cannot handle the requested problem"""


class RegularityViolation(NumericalError):
    """Raised when a curve derivative drops to (near) zero"""


class NotConnectable(NumericalError):
    """Raised when two open curves have anti-parallel SRV values somewhere"""


class ProjectionDiverged(NumericalError):
    """Raised when the closure projection misses its tolerance"""


class InfeasibleMask(NumericalError):
    """Raised when no monotone lattice path reaches the end under the slope mask"""


class InfeasibleHardBounds(NumericalError):
    """Raised when every admissible lattice path violates a hard feature bound"""


class LineSearchFailed(NumericalError):
    """Raised when backtracking finds no step satisfying the Armijo condition"""


class InsufficientCrossings(NumericalError):
    """Raised when an animation has fewer knee crossings than requested"""
