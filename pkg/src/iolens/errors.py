"""Exception types shared across the toolkit."""


class IolensError(Exception):
    """Base class for all toolkit errors."""


class NotInCatalog(IolensError):
    """Syscall name is not one of the 42 supported syscalls."""


class MalformedInput(IolensError):
    """A replay stream failed to parse.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class Unsupported(IolensError):
    """Live capture is not available on this platform/configuration."""


class SpawnFailed(IolensError):
    """The traced command could not be started."""


class LaneOutOfRange(IolensError):
    """Ring-buffer lane index outside the configured lane count."""


class UnknownSession(IolensError):
    """No session with that name exists in the store."""


class StorageFull(IolensError):
    """The store's backing device has no space left."""


class MalformedSpec(IolensError):
    """A query/aggregate spec is invalid (bad range, bad metric, ...)."""


class ImmutableField(IolensError):
    """update_field targeted a field outside the mutable enrichment block."""


class MalformedPattern(IolensError):
    """A detector name pattern is empty or not a string."""
