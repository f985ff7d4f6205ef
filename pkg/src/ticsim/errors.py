"""Exception hierarchy shared by every subsystem."""


class TicsError(Exception):
    """Base class for all simulator errors."""


class DomainError(TicsError, ValueError):
    """An argument lies outside the domain of an operation."""


class NotSynchronized(TicsError):
    """A slave clock was read before it was ever synchronized."""


class BusBusy(TicsError):
    """A transaction was started while the bus was still occupied."""


class BusTimeout(TicsError):
    """No endpoint answered a poll within the response timeout."""

    def __init__(self, message, transaction=None):
        super().__init__(message)
        self.transaction = transaction


class ConfigError(TicsError):
    """The configuration document is malformed or inconsistent."""

    def __init__(self, message, path=()):
        self.path = tuple(path)
        where = "/".join(str(p) for p in self.path)
        super().__init__(f"{where}: {message}" if where else message)


class NameNotFound(TicsError, LookupError):
    """A device or property name is not in the registry."""


class UsageError(TicsError):
    """An API was used out of order (double release, alarm without monitor...)."""


class RangeError(TicsError, ValueError):
    """A value does not fit its declared range or register width."""


class Overcommitted(TicsError):
    """Scheduled bus frame time exceeds the 48 ms period budget."""


class CommandRejected(TicsError):
    """A time-tagged command was refused by the executive."""

    def __init__(self, reason, command=None):
        super().__init__(f"command rejected: {reason}")
        self.reason = reason
        self.command = command


class Late(CommandRejected):
    """Execute event is in the future but closer than the minimum lead."""


class Past(CommandRejected):
    """Execute event is not in the future."""


class ArchiveIoError(TicsError, OSError):
    """Writing the monitor archive failed; the file on disk is partial."""

    def __init__(self, message, records_written=0):
        super().__init__(message)
        self.records_written = records_written
        self.partial = True
