"""Exception hierarchy shared across the package."""


class CausalNNError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CausalNNError, ValueError):
    pass


class ShapeError(CausalNNError, ValueError):
    pass


class InputError(CausalNNError, ValueError):
    pass


class DomainError(CausalNNError, ValueError):
    pass


class StateError(CausalNNError, RuntimeError):
    pass


class UnsupportedOperationError(CausalNNError, TypeError):
    pass


class EstimationError(CausalNNError, RuntimeError):
    pass


class DivergenceError(EstimationError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) at epoch {epoch}")


class BenchmarkError(CausalNNError, RuntimeError):
    pass


class ParseError(CausalNNError, ValueError):
    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
