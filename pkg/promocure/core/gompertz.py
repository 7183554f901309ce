"""Gompertz baseline law S(t) = exp(-(b/a)(e^{at} - 1))"""

from typing import Union

import numpy as np

from promocure.core.errors import DataValidationError
from promocure.models.schemas import GompertzParams

ArrayLike = Union[float, np.ndarray]


def _out(values: np.ndarray) -> ArrayLike:
    return float(values) if np.ndim(values) == 0 else values


def _cumulative_hazard(p: GompertzParams, t: ArrayLike) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DataValidationError("Gompertz time must be nonnegative")
    return (p.b / p.a) * np.expm1(p.a * t)


def gompertz_survival(p: GompertzParams, t: ArrayLike) -> ArrayLike:
    return _out(np.exp(-_cumulative_hazard(p, t)))


def gompertz_cdf(p: GompertzParams, t: ArrayLike) -> ArrayLike:
    return _out(-np.expm1(-_cumulative_hazard(p, t)))


def gompertz_inverse_survival(p: GompertzParams, s: ArrayLike) -> ArrayLike:
    """t = (1/a) log(1 - (a/b) log s) for s in (0, 1]"""
    s = np.asarray(s, dtype=float)
    if np.any(~(s > 0)) or np.any(s > 1):
        raise DataValidationError("survival probability must lie in (0, 1]")
    return _out(np.log1p(-(p.a / p.b) * np.log(s)) / p.a)
