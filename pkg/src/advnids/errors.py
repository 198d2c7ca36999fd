"""Exception hierarchy shared by every stage of the toolkit."""


class AdvNidsError(Exception):
    """Base class for all toolkit errors."""


class ContractViolation(AdvNidsError, ValueError):
    """A documented precondition of an operation was not met."""


class ParseError(AdvNidsError, ValueError):
    """A data file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(AdvNidsError, ValueError):
    """Data does not agree with its declared schema."""


class StaleArtifactError(AdvNidsError):
    """An upstream pipeline artifact is missing or out of date."""

    def __init__(self, message: str, stage: str):
        super().__init__(message)
        self.stage = stage


class InvariantViolation(AdvNidsError):
    """An internal guarantee of the toolkit did not hold; indicates a bug."""
