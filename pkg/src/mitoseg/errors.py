"""Exception hierarchy shared by all mitoseg modules.

Every validation failure raises a subclass of :class:`MitosegError`, so the
CLI can map library errors to exit code 2 and keep exit code 1 for genuine
internal failures.
"""


class MitosegError(Exception):
    """Base class for all errors raised by this package."""


class VolumeFormatError(MitosegError):
    """Volume file is not valid EMV1 (bad magic, malformed header)."""


class UnsupportedDtypeError(VolumeFormatError):
    """Volume file declares a dtype code outside the supported set."""


class SizeMismatchError(VolumeFormatError):
    """Volume payload size disagrees with the header dimensions."""


class InvalidArgumentError(MitosegError):
    """Arguments violate an operation's contract (shape mismatch, bad grid, ...)."""


class DomainError(MitosegError):
    """Array values fall outside the domain an operation requires."""


class UnsupportedThresholdError(InvalidArgumentError):
    """IoU threshold at or below 0.5; one-to-one matching is no longer implied."""


class DegenerateTargetError(DomainError):
    """Binary target is all-foreground or all-background; class weights are undefined."""


class MissingNeighborError(InvalidArgumentError):
    """A slice restoration was requested for a frame without both axial neighbors."""
