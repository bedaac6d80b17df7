"""Exception hierarchy shared across the toolkit."""


class LemirError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(LemirError, ValueError):
    """An argument violates an operation's preconditions."""


class RuleIncompatibleError(LemirError):
    """A transformation rule cannot be applied to the given form.

    Callers scoring candidates treat this as score -infinity.
    """


class RuleParseError(LemirError, ValueError):
    """A rule string does not match the canonical grammar."""


class CorpusFormatError(LemirError, ValueError):
    """A corpus file is malformed.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class AlignmentError(LemirError, ValueError):
    """Two supposedly parallel token/sentence sequences do not line up."""
