class ATVGarchError(Exception):
    """Base class for errors raised by atvgarch."""


class NonPositiveVariance(ATVGarchError, FloatingPointError):
    """A conditional variance in the recursion was not strictly positive."""


class InfeasibleStart(ATVGarchError, ValueError):
    """Starting values violate the parameter constraints."""


class RankDeficientRegressors(ATVGarchError, ArithmeticError):
    """Auxiliary regression regressors are (numerically) collinear."""


class ParseError(ATVGarchError, ValueError):
    pass


class EmptySeries(ATVGarchError, ValueError):
    pass


class NonPositivePrice(ATVGarchError, ValueError):
    pass


class DegenerateQuantiles(ATVGarchError, ValueError):
    pass
