"""Exception hierarchy.

The CLI maps :class:`DataError` and :class:`ConfigError` to exit code 1 and
:class:`NumericalError` to exit code 2.
"""


class ProxyFairError(Exception):
    pass


class DataError(ProxyFairError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)


class ConfigError(ProxyFairError, ValueError):
    pass


class ContractError(ProxyFairError, ValueError):
    """An operation was called with inputs violating its precondition."""


class NumericalError(ProxyFairError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message, epoch=None, trace=None):
        self.epoch = epoch
        self.trace = trace
        super().__init__(message)


class ConvergenceError(NumericalError):
    def __init__(self, message, last_iterate=None, residuals=None):
        self.last_iterate = last_iterate
        self.residuals = residuals
        super().__init__(message)
