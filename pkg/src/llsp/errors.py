"""Exception hierarchy for llsp.

Every error raised on purpose by the package derives from :class:`LlspError`
and carries the process exit code the command line uses for it.
Anything else escaping ``main`` is an internal failure.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_INTERNAL = 5
EXIT_RESOURCE = 6


class LlspError(Exception):
    exit_code = EXIT_INTERNAL


class ConfigError(LlspError):
    """Invalid run configuration or unknown option value."""

    exit_code = EXIT_CONFIG


class SelectionError(ConfigError):
    """Bad experiment selection: parse failure, overflow or duplicate index."""


class DataError(LlspError):
    """Input data missing, malformed or of the wrong shape."""

    exit_code = EXIT_DATA


class NumericError(LlspError):
    exit_code = EXIT_NUMERIC


class RankDeficiencyError(NumericError):
    """The system is numerically rank deficient for the requested method.

    Raised instead of silently switching methods, so callers that asked for
    normal equations or QR know their full-rank assumption failed.
    """

    def __init__(self, message, method=None):
        super().__init__(
            "{} (use the SVD minimum-norm path for rank-deficient systems)".format(message)
            if "SVD" not in message else message
        )
        self.method = method

    def __reduce__(self):
        return (type(self), (self.args[0], self.method))


class ExtractionError(NumericError):
    """A solver failure annotated with where on the grid it happened."""

    def __init__(self, message, segment_id=None, omega=None, tau=None):
        super().__init__(message)
        self.segment_id = segment_id
        self.omega = omega
        self.tau = tau

    def __reduce__(self):
        return (type(self), (self.args[0], self.segment_id, self.omega, self.tau))


class ResourceLimitError(LlspError):
    """A configured memory cap would be exceeded."""

    exit_code = EXIT_RESOURCE


def exit_code_for(err : BaseException) -> int:
    if isinstance(err, LlspError):
        return err.exit_code
    return EXIT_INTERNAL
