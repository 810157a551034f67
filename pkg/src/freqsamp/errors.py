"""Exception hierarchy shared by every subpackage."""


class FreqSampError(Exception):
    """Base class for all errors raised by freqsamp."""


class ConfigurationError(FreqSampError, ValueError):
    """Inconsistent modules, grids, channel counts or config files."""


class DomainError(FreqSampError, ValueError):
    """An argument lies outside the domain of an operation."""


class InvalidGridError(DomainError):
    pass


class ShapeError(FreqSampError, ValueError):
    pass


class NonHermitianError(FreqSampError, ValueError):
    pass


class NumericalError(FreqSampError, ArithmeticError):
    """A computation produced non-finite or untrustworthy numbers."""


class SingularDenominatorError(NumericalError):
    def __init__(self, message, bin_index=None):
        super().__init__(message)
        self.bin_index = bin_index


class IllConditionedError(NumericalError):
    def __init__(self, message, bin_index=None, condition=None):
        super().__init__(message)
        self.bin_index = bin_index
        self.condition = condition
