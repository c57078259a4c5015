"""Exception hierarchy shared across the pipeline."""


class CardiolinkError(Exception):
    """Base class for all library errors."""


class ParseError(CardiolinkError):
    """Input bytes do not conform to the expected file format."""


class ValidationError(CardiolinkError):
    """Well-formed input violates a domain invariant."""


class ConfigError(CardiolinkError):
    """Invalid configuration or unusable parameter combination."""


class QcError(CardiolinkError):
    """Quality control cannot proceed (degenerate stats, empty panel)."""


class TransportError(CardiolinkError):
    """Remote catalog fetch failed with no usable cache."""


class StatusError(TransportError):
    """Remote endpoint answered with a non-success HTTP status."""

    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"HTTP {status}: {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt
