"""Exception hierarchy shared by all latsym modules."""


class LatsymError(Exception):
    """Base class for every error raised by latsym."""


class DSLSyntaxError(LatsymError):
    def __init__(self, message, line, column, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at line {line}, column {column}{detail}")


class EvaluationError(LatsymError):
    """Arithmetic failure while evaluating an expression (division by zero, bad log, ...)."""

    def __init__(self, message, pos=None):
        self.pos = pos
        where = f" at line {pos[0]}, column {pos[1]}" if pos else ""
        super().__init__(message + where)


class UnboundError(EvaluationError):
    pass


class SchemeError(LatsymError):
    """A scheme definition violates its structural invariants."""


class SingularJacobianError(LatsymError):
    pass


class ConvergenceError(LatsymError):
    pass


class InsufficientSeedError(LatsymError):
    def __init__(self, message, missing=()):
        self.missing = tuple(missing)
        super().__init__(message)


class PropagationError(LatsymError):
    def __init__(self, message, site=None):
        self.site = site
        super().__init__(message if site is None else f"{message} at (m, n) = {site}")


class CatalogError(LatsymError):
    pass


class UnknownSchemeError(CatalogError):
    pass


class InvalidParameterError(CatalogError):
    pass


class BasisError(LatsymError):
    """Ansatz basis functions are numerically dependent on the probe set."""


class SpanEscapeError(LatsymError):
    def __init__(self, message, residual):
        self.residual = residual
        super().__init__(f"{message} (re-expansion residual {residual:.3g})")


class SamplingError(LatsymError):
    pass


class FlowError(LatsymError):
    pass


class LimitError(LatsymError):
    pass
