"""
Exception and warning types shared by the library, CLI and dashboard
"""
from typing import Optional


class TDSError(Exception):
    """Base class for data errors raised by the library"""

    exit_code = 2

    def __init__(self, message: str, *, hint: Optional[str] = None) -> None:
        super().__init__(message)
        self.message = message
        self.hint = hint


class UsageError(TDSError):
    """Raised when command-line input is malformed"""

    exit_code = 1


class SchemaError(TDSError):
    """A required column is missing or the metric arity does not match"""

    def __init__(self, message: str, *, column: Optional[str] = None, **kwargs) -> None:
        super().__init__(message, **kwargs)
        self.column = column


class ParseError(TDSError):
    """A cell could not be parsed"""

    def __init__(self, message: str, *, row: Optional[int] = None,
                 column: Optional[str] = None, **kwargs) -> None:
        super().__init__(message, **kwargs)
        self.row = row
        self.column = column


class EmptyInputError(TDSError):
    """The input has a header but no data rows"""


class DomainError(TDSError):
    """A value lies outside the domain of a transform"""

    def __init__(self, message: str, *, row: Optional[int] = None,
                 metric: Optional[str] = None, **kwargs) -> None:
        super().__init__(message, **kwargs)
        self.row = row
        self.metric = metric


class NoCandidatesError(TDSError):
    """No training data is left to select from"""


class ParameterError(TDSError):
    """An argument is outside its allowed range"""


class ShapeError(TDSError):
    """Vectors or instances have incompatible dimensions"""


class UndefinedMeasureError(TDSError):
    """A measure is undefined for the given data (e.g. AUC on one class)"""


class SampleSizeError(TDSError):
    """Too few usable pairs for a statistical test"""


class DegenerateDPRWarning(UserWarning):
    """The training set has no buggy instances, so DPR is 0"""


class ConvergenceWarning(UserWarning):
    """An iterative trainer stopped at its iteration cap"""


class DegenerateModelWarning(UserWarning):
    """A classifier was trained on a single class"""
