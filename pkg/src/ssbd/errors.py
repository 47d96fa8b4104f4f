"""Exception hierarchy shared by the engine, models and harness."""


class SSBDError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SSBDError, ValueError):
    """A configuration value is out of range or inconsistent."""


class InvalidTokenError(SSBDError, ValueError):
    pass


class MalformedLogitsError(SSBDError, ValueError):
    pass


class TransportError(SSBDError):
    """The remote backend could not be reached."""


class ProtocolError(SSBDError):
    """The remote backend answered with a body that breaks the wire format."""


class CacheLogicError(SSBDError, RuntimeError):
    """The cache ledger was asked for something impossible; indicates a decoder bug."""


class UndefinedMetricError(SSBDError, ValueError):
    pass


class TranscriptError(SSBDError, ValueError):
    """Malformed or inconsistent transcript input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SessionError(SSBDError):
    """Wraps an error raised while decoding one update of a session."""

    def __init__(self, session_id: str, t: int, cause: Exception):
        self.session_id = session_id
        self.t = t
        self.cause = cause
        super().__init__(f"session {session_id!r}, update t={t}: {cause}")
