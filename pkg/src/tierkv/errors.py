"""Exception types shared across the engine."""


class TierKVError(Exception):
    """Base class for all engine errors."""


class ConfigError(TierKVError):
    """Invalid configuration or mismatched dimensions supplied by the caller."""


class IntegrityError(TierKVError):
    """Internal consistency violation (engine bug); the run must abort."""


class TraceFormatError(TierKVError):
    """Malformed trace file."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
