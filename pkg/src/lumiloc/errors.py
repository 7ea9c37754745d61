"""Exception hierarchy shared across the package."""


class LumilocError(Exception):
    """Base class for all package errors."""


class ContractViolation(LumilocError, ValueError):
    """An operation was called with arguments that break its preconditions."""


class EmptyInputError(ContractViolation):
    """An operation that requires data received an empty input."""


class NumericOverflowError(LumilocError, ArithmeticError):
    """A sanctioned numeric operation produced NaN or Inf."""


class DivergenceError(LumilocError):
    """Training produced a non-finite loss; carries the offending epoch."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class CsvParseError(LumilocError, ValueError):
    """A dataset file violated the CSV schema; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class SearchError(LumilocError):
    """Every trial of a hyperparameter search failed."""
