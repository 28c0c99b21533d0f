"""Exception types shared across the scanner, policy engine, proxy and CLI."""


class ShapegateError(Exception):
    """Base class for all errors raised by this package."""


class NetworkError(ShapegateError):
    """Connect or timeout failure while fetching a target."""

    def __init__(self, url, cause):
        super().__init__(f"network error fetching {url}: {cause}")
        self.url = url
        self.cause = cause


class TlsError(ShapegateError):
    """TLS validation failed and invalid certificates were not accepted."""

    def __init__(self, url, cause):
        super().__init__(f"TLS error fetching {url}: {cause}")
        self.url = url
        self.cause = cause


class RedirectLoopError(ShapegateError):
    """The redirect chain exceeded the configured maximum length."""


class ReportShapeError(ShapegateError):
    """A report does not contain exactly one result per known test."""


class PolicyParseError(ShapegateError):
    """A policy document could not be parsed."""

    def __init__(self, message, line=None, position=None):
        if line is not None:
            message = f"{message} (line {line}, column {position})"
        super().__init__(message)
        self.line = line
        self.position = position


class SanitizeInputError(ShapegateError):
    """Input to the PDF sanitizer is not a PDF."""


class StartupError(ShapegateError):
    """A server failed to bind or start."""


class UsageError(ShapegateError):
    """An operation was invoked with an unsupported argument."""
