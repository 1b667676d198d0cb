"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input violates an operation's precondition (bad range, empty mask, ...)."""


class FormatError(DomainError):
    """A file or byte stream does not parse; carries the failing byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DivergenceError(DomainError):
    """Training loss exceeded the divergence guard."""
