class LyapnetError(Exception):
    """Base class for errors raised by this package."""


class ParseError(LyapnetError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f"line {line}, column {col}: " if line is not None else ""
        super().__init__(where + message)


class UnknownVariable(ParseError):
    pass


class ArityError(LyapnetError):
    pass


class UnknownSystem(LyapnetError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class NonFinite(LyapnetError, ArithmeticError):
    pass


class SchemaError(LyapnetError, ValueError):
    pass


class ShapeMismatch(LyapnetError, ValueError):
    pass
