"""Exception hierarchy with CLI exit-code mapping.

Exit-code contract:
    0  success
    1  tolerance failure (a computed invariant missed its acceptance bound)
    2  usage / configuration / input-data error
    3  modeling-assumption violation (spectral singularity on the real axis,
       nonzero winding number, non-simple or overlapping discrete eigenvalue)
"""

from __future__ import annotations


class AknsError(Exception):
    """Base class for all package errors."""

    exit_code = 1

    def __init__(self, message: str, *, stage: str | None = None):
        self.stage = stage
        if stage:
            message = f"[{stage}] {message}"
        super().__init__(message)


class ToleranceError(AknsError):
    """A required numerical invariant exceeded its tolerance."""

    exit_code = 1


class ConfigError(AknsError):
    """Bad configuration, unusable input file, or schema mismatch."""

    exit_code = 2


class AdmissibilityError(ConfigError):
    """Potential fails the decay test justifying domain truncation."""


class AssumptionViolation(AknsError):
    """The data violates an assumption of the underlying theory.

    Subclasses name the specific assumption; the CLI maps them to exit
    code 3 so callers can distinguish "the method does not apply" from
    plain numerical failure.
    """

    exit_code = 3
    assumption = "modeling assumption"


class SpectralSingularityError(AssumptionViolation):
    """A transition-matrix block is singular at (or too near) a real k."""

    assumption = "spectral singularity"


class WindingError(AssumptionViolation):
    """The central scattering entry has a nonzero winding number."""

    assumption = "nonzero winding number"


class NonSimpleZeroError(AssumptionViolation):
    """A discrete eigenvalue is non-simple or two eigenvalues overlap."""

    assumption = "non-simple zero"
