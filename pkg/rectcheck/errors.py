class RectcheckError(Exception):
    """Base class for all errors raised by rectcheck."""


class ParseError(RectcheckError):
    """A syntax error in one of the text formats. Line and column are 1-based;
    column is None when the whole line is at fault.
    """

    def __init__(self, message, line=None, column=None, source=None):
        self.message = message
        self.line = line
        self.column = column
        self.source = source
        super().__init__(str(self))

    def __str__(self):
        where = []
        if self.source:
            where.append(str(self.source))
        if self.line is not None:
            where.append(f'line {self.line}')
        if self.column is not None:
            where.append(f'column {self.column}')
        if where:
            return f'{", ".join(where)}: {self.message}'
        return self.message


class ModelError(RectcheckError):
    """A structurally invalid model: dimension mismatches, unknown variables,
    unaligned thresholds and the like.
    """


class StateLimitExceeded(RectcheckError):
    """The state cap was hit. ``stats`` holds the counts gathered so far."""

    def __init__(self, limit, stats=None):
        self.limit = limit
        self.stats = stats
        super().__init__(f'state limit of {limit} exceeded')


class IntegrationError(RectcheckError):
    """Numeric integration produced non-finite values."""


class StepTooCoarse(RectcheckError):
    """A trajectory sample jumped more than one interval in a dimension."""

    def __init__(self, sample, dim, jump):
        self.sample = sample
        self.dim = dim
        self.jump = jump
        super().__init__(
            f'sample {sample} jumps {jump} intervals in dimension {dim}; '
            f'decrease the integration step')


class WorkerError(RectcheckError):
    """A worker process failed. ``details`` is the worker's traceback text."""

    def __init__(self, worker, details):
        self.worker = worker
        self.details = details
        super().__init__(f'worker {worker} failed:\n{details}')
