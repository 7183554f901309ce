"""Exception hierarchy for promocure"""

from typing import Any, Dict, Optional, Sequence

import numpy as np


class PromocureError(Exception):
    """Base class for every error raised by promocure"""

    exit_code = 1


class ConfigValidationError(PromocureError):
    """A run configuration failed validation"""

    exit_code = 1

    def __init__(self, message: str, fields: Optional[Dict[str, str]] = None):
        self.fields = dict(fields or {})
        if self.fields:
            details = "; ".join(f"{path}: {msg}" for path, msg in self.fields.items())
            message = f"{message} ({details})"
        super().__init__(message)


class DataValidationError(PromocureError):
    """Input data violates the current status data contract"""

    exit_code = 1

    def __init__(self, message: str, row: Optional[int] = None):
        self.row = row
        if row is not None:
            message = f"data row {row}: {message}"
        super().__init__(message)


class DataParseError(DataValidationError):
    """A row of a delimited input file could not be parsed"""


class DimensionError(PromocureError, ValueError):
    """Parameter or covariate sizes do not match the dataset"""

    exit_code = 1


class NumericalError(PromocureError):
    """A numerical stage produced unusable values"""

    exit_code = 2


class MapConvergenceError(NumericalError):
    """The posterior-mode search did not converge"""

    def __init__(self, message: str, best_point: Sequence[float], best_value: float):
        self.best_point = np.asarray(best_point, dtype=float).copy()
        self.best_value = float(best_value)
        super().__init__(f"{message} (best log-posterior {self.best_value:.6g})")


class StudyFailureError(NumericalError):
    """One or more replicates of a simulation study failed"""

    def __init__(self, failed: int, total: int, report: Any = None):
        self.failed = failed
        self.total = total
        self.report = report
        super().__init__(f"{failed} of {total} replicates failed")
