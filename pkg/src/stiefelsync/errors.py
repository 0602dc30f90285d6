"""Shared exception types."""


class ParameterError(ValueError):
    """A caller-supplied parameter is outside its valid range."""


class ParseError(ValueError):
    """A text input file is malformed. Carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class NumericalError(RuntimeError):
    """An iterative numerical routine failed to converge.

    Diagnostic state (iteration counts, best estimates) is attached as
    keyword attributes.
    """

    def __init__(self, message, **info):
        super().__init__(message)
        for key, value in info.items():
            setattr(self, key, value)
        self.info = info
