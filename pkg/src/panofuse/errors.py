"""Exception hierarchy.

Everything raised on bad input derives from :class:`PanofuseError`, so callers
(the CLI in particular) can catch one type and map it to an exit code.
"""


class PanofuseError(Exception):
    pass


class ValidationError(PanofuseError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class UnknownClass(ValidationError):
    pass


class StuffDetection(ValidationError):
    pass


class NonFiniteLogit(ValidationError):
    pass


class MissingCenters(ValidationError):
    pass


class NoStuffClasses(ValidationError):
    pass


class InfeasibleSpec(PanofuseError):
    pass


class FormatError(PanofuseError):
    """Malformed file contents."""


class BadMagic(FormatError):
    pass


class UnsupportedDtype(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class DimOverflow(FormatError):
    pass


class MalformedJson(FormatError):
    pass


class NegativeBoxSize(FormatError, ValidationError):
    pass


class ScoreOutOfRange(FormatError, ValidationError):
    pass


class IdMismatch(FormatError):
    pass


class AreaMismatch(FormatError):
    pass
