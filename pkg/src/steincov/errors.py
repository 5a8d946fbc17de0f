"""Exception hierarchy. Every error raised by the package derives from SteinError."""


class SteinError(Exception):
    """Base class for all package errors."""


class NonFiniteValue(SteinError, ArithmeticError):
    pass


class InvalidRange(SteinError, ValueError):
    pass


class InvalidParameter(SteinError, ValueError):
    pass


class NoConvergence(SteinError, ArithmeticError):
    pass


class NotSampleable(SteinError):
    pass


class NotSelfAdjoint(SteinError, ValueError):
    def __init__(self, msg, asymmetry=None):
        super().__init__(msg)
        self.asymmetry = asymmetry


class DimensionMismatch(SteinError, ValueError):
    pass


class NotIntegrable(SteinError, ArithmeticError):
    pass


class DivisionByZeroWeight(SteinError, ZeroDivisionError):
    def __init__(self, msg, location=None):
        super().__init__(msg)
        self.location = location


class NotLogConcave(SteinError, ValueError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class TailUnderflow(SteinError, ArithmeticError):
    pass


class NotDecreasing(SteinError, ValueError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class ZeroDenominator(SteinError, ZeroDivisionError):
    pass


class BoundaryViolation(SteinError):
    pass


class InfiniteSupport(SteinError, ValueError):
    pass


class NotExact(SteinError, TypeError):
    pass


class NonLatticePoint(SteinError, ValueError):
    pass
