"""Exception types shared across the pipeline."""


class InputError(ValueError):
    """An argument is outside the domain an operation accepts."""


class UndefinedCorrelationError(InputError):
    """A correlation was requested for a constant vector."""


class NotComputableError(ValueError):
    """A statistic needs more significant scores than are available."""


class DataError(ValueError):
    """Input files are inconsistent or malformed.

    ``line`` holds the 1-based line number in the offending file when known.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class TrainingDivergedError(RuntimeError):
    """The training objective became non-finite.

    The last model with a finite objective is kept on ``model``.
    """

    def __init__(self, message, model=None, history=None):
        super().__init__(message)
        self.model = model
        self.history = history
