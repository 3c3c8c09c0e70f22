"""Exception types raised by the toolkit."""


class MpnetError(ValueError):
    """Base class for every analysis error the toolkit raises."""


class ParseError(MpnetError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class ValidationError(MpnetError):
    pass


class DegenerateError(MpnetError):
    """The input admits no meaningful value for the requested statistic."""


class ConvergenceError(MpnetError):
    def __init__(self, message, n_converged=0):
        super().__init__(message)
        self.n_converged = n_converged
