"""
Current status data: validation, monitoring grid and the NPMLE plateau check
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.optimize import isotonic_regression

from promocure.core.errors import DataParseError, DataValidationError, DimensionError
from promocure.utils.helpers import sniff_delimiter, write_table

logger = logging.getLogger(__name__)


def _frozen(values: np.ndarray) -> np.ndarray:
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class Observation:
    """One subject: monitoring time u, status delta = I(T <= u), covariates x with x[0] == 1"""

    u: float
    delta: int
    x: np.ndarray

    def __post_init__(self):
        x = _frozen(self.x)
        object.__setattr__(self, "x", x)
        if not np.isfinite(self.u) or self.u <= 0:
            raise DataValidationError(f"monitoring time must be positive and finite, got {self.u}")
        if self.delta not in (0, 1):
            raise DataValidationError(f"status must be 0 or 1, got {self.delta}")
        if x.ndim != 1 or x.size == 0 or x[0] != 1.0:
            raise DataValidationError("covariate vector must start with the intercept 1")
        if not np.all(np.isfinite(x)):
            raise DataValidationError("covariates must be finite")


@dataclass(frozen=True)
class MonitoringGrid:
    """Distinct monitoring times s_1 < ... < s_n0 where the baseline step CDF may jump"""

    knots: np.ndarray

    def __post_init__(self):
        knots = _frozen(self.knots)
        object.__setattr__(self, "knots", knots)
        if knots.ndim != 1 or knots.size == 0:
            raise DataValidationError("a grid needs at least one knot")
        if not np.all(np.isfinite(knots)) or knots[0] <= 0:
            raise DataValidationError("knots must be positive and finite")
        if np.any(np.diff(knots) <= 0):
            raise DataValidationError("knots must be strictly increasing")

    @property
    def n0(self) -> int:
        return int(self.knots.size)

    def count_at_or_below(self, t: Union[float, np.ndarray]) -> Union[int, np.ndarray]:
        """max{l : s_l <= t}, 0 when t < s_1"""
        counts = np.searchsorted(self.knots, t, side="right")
        return int(counts) if np.ndim(counts) == 0 else counts

    def __eq__(self, other) -> bool:
        return isinstance(other, MonitoringGrid) and np.array_equal(self.knots, other.knots)

    def __hash__(self) -> int:
        return hash(self.knots.tobytes())


def build_grid(times: Sequence[float]) -> MonitoringGrid:
    """Sorted, deduplicated monitoring times"""
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        raise DataValidationError("cannot build a grid from no monitoring times")
    if not np.all(np.isfinite(times)) or np.any(times <= 0):
        raise DataValidationError("monitoring times must be positive and finite")
    return MonitoringGrid(np.unique(times))


class CurrentStatusDataset:
    """Immutable table of (u_i, delta_i, x_i) with its monitoring grid.

    ``knot_index[i]`` is the 1-based position k_i of u_i on the grid, so that the
    baseline step CDF at u_i involves eta_1..eta_{k_i}. Covariate rows are stored with
    the intercept column first.
    """

    def __init__(self, u: np.ndarray, delta: np.ndarray, X: np.ndarray, grid: MonitoringGrid):
        self.u = _frozen(u)
        self.delta = np.array(delta, dtype=np.int8)
        self.delta.setflags(write=False)
        self.X = _frozen(X)
        self.grid = grid

        if self.X.ndim != 2 or self.X.shape[0] != self.u.size or self.delta.size != self.u.size:
            raise DimensionError("u, delta and covariate rows must have equal length")
        if self.X.shape[1] < 1:
            raise DimensionError("covariate matrix needs the intercept column")

        index = np.asarray(grid.count_at_or_below(self.u), dtype=np.intp)
        if self.u.size and (np.any(index < 1) or np.any(grid.knots[index - 1] != self.u)):
            raise DataValidationError("every monitoring time must be a grid knot")
        self.knot_index = index
        self.knot_index.setflags(write=False)

    @classmethod
    def from_arrays(
        cls,
        u: Sequence[float],
        delta: Sequence[int],
        covariates: Optional[Union[Sequence[Sequence[float]], np.ndarray]] = None,
    ) -> "CurrentStatusDataset":
        """Validate raw columns, synthesize the intercept and derive the grid"""
        u = np.asarray(u, dtype=float).ravel()
        delta_raw = np.asarray(delta, dtype=float).ravel()
        n = u.size
        if n == 0:
            raise DataValidationError("dataset has no observations")
        if delta_raw.size != n:
            raise DimensionError("u and delta must have equal length")
        if covariates is None:
            covariates = np.empty((n, 0))
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 1:
            covariates = covariates.reshape(n, -1) if n else covariates.reshape(0, 0)
        if covariates.shape[0] != n:
            raise DimensionError("covariate rows must match the number of observations")

        for i in range(n):
            if not np.isfinite(u[i]) or u[i] <= 0:
                raise DataValidationError(f"monitoring time must be positive, got {u[i]}", row=i + 1)
            if delta_raw[i] not in (0.0, 1.0):
                raise DataValidationError(f"status must be 0 or 1, got {delta_raw[i]}", row=i + 1)
            if not np.all(np.isfinite(covariates[i])):
                raise DataValidationError("covariates must be finite", row=i + 1)

        X = np.column_stack([np.ones(n), covariates])
        return cls(u, delta_raw.astype(np.int8), X, build_grid(u))

    @classmethod
    def empty(cls, grid: MonitoringGrid, n_covariates: int = 0) -> "CurrentStatusDataset":
        """No observations on a supplied grid; used for prior-only runs"""
        return cls(np.empty(0), np.empty(0, dtype=np.int8), np.empty((0, n_covariates + 1)), grid)

    @property
    def n(self) -> int:
        return int(self.u.size)

    @property
    def n_theta(self) -> int:
        """k + 1: intercept plus slopes"""
        return int(self.X.shape[1])

    @property
    def observations(self) -> Tuple[Observation, ...]:
        return tuple(Observation(float(u), int(d), x) for u, d, x in zip(self.u, self.delta, self.X))

    def subset(self, mask: Sequence[bool]) -> "CurrentStatusDataset":
        """Observations selected by ``mask``, on a grid rebuilt from their own times"""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.u.shape:
            raise DimensionError("mask must have one entry per observation")
        if not mask.any():
            raise DataValidationError("subset selects no observations")
        return CurrentStatusDataset.from_arrays(self.u[mask], self.delta[mask], self.X[mask, 1:])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"CurrentStatusDataset(n={self.n}, k={self.n_theta - 1}, n0={self.grid.n0})"


def _ragged_row(path: Path, sep: str) -> Optional[int]:
    """1-based data row whose field count differs from the header, if any"""
    if len(sep) != 1:
        return None
    with open(path, "r", newline="") as f:
        lines = (line.split("#", 1)[0] for line in f)
        rows = csv.reader((line for line in lines if line.strip()), delimiter=sep)
        width = len(next(rows, []))
        for index, fields in enumerate(rows, start=1):
            if len(fields) != width:
                return index
    return None


@dataclass(frozen=True)
class ColumnSchema:
    """Column mapping for a delimited current status table"""

    time_col: str = "u"
    status_col: str = "delta"
    covariate_cols: Tuple[str, ...] = ()
    delimiter: Optional[str] = None


def load_dataset(path: Union[str, Path], schema: ColumnSchema = ColumnSchema()) -> CurrentStatusDataset:
    """Read a delimited table (header required, '#' lines ignored) into a dataset"""
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"data file not found: {path}")

    sep = schema.delimiter or sniff_delimiter(path)
    try:
        frame = pd.read_csv(path, sep=sep, comment="#", dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataValidationError(f"data file {path} is empty")
    except pd.errors.ParserError as exc:
        raise DataParseError(f"malformed table in {path}: {exc}", row=_ragged_row(path, sep))

    columns = [schema.time_col, schema.status_col, *schema.covariate_cols]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataValidationError(f"columns not found in {path}: {', '.join(missing)}")
    if frame.empty:
        raise DataValidationError(f"data file {path} has no observations")

    parsed: Dict[str, np.ndarray] = {}
    for column in columns:
        raw = frame[column].str.strip()
        values = pd.to_numeric(raw, errors="coerce")
        bad = np.flatnonzero(values.isna().to_numpy())
        if bad.size:
            row = int(bad[0])
            text = raw.iloc[row]
            reason = "missing value" if text == "" else f"'{text}' is not a number"
            raise DataParseError(f"column '{column}': {reason}", row=row + 1)
        parsed[column] = values.to_numpy(dtype=float)

    covariates = np.column_stack([parsed[c] for c in schema.covariate_cols]) if schema.covariate_cols else None
    data = CurrentStatusDataset.from_arrays(parsed[schema.time_col], parsed[schema.status_col], covariates)
    logger.info("loaded %s: n=%d, %d covariates, %d distinct monitoring times", path, data.n, data.n_theta - 1, data.grid.n0)
    return data


@dataclass(frozen=True)
class NpmleEstimate:
    """Isotonic NPMLE of the survival function at the grid knots"""

    knots: np.ndarray
    survival: np.ndarray
    counts: np.ndarray = field(repr=False)
    event_fraction: np.ndarray = field(repr=False)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"knot": self.knots, "survival": self.survival})


def npmle_survival(data: CurrentStatusDataset) -> NpmleEstimate:
    """Pool-adjacent-violators fit of F on per-knot event fractions, returned as S = 1 - F"""
    if data.n == 0:
        raise DataValidationError("NPMLE needs at least one observation")
    n0 = data.grid.n0
    slots = data.knot_index - 1
    counts = np.bincount(slots, minlength=n0).astype(float)
    events = np.bincount(slots, weights=data.delta.astype(float), minlength=n0)

    observed = counts > 0
    fraction = np.zeros(n0)
    fraction[observed] = events[observed] / counts[observed]
    fitted = isotonic_regression(fraction[observed], weights=counts[observed], increasing=True).x

    cdf = np.zeros(n0)
    cdf[observed] = fitted
    # knots without subjects inherit the value to their left
    cdf = np.maximum.accumulate(cdf)
    survival = np.clip(1.0 - cdf, 0.0, 1.0)
    return NpmleEstimate(data.grid.knots, survival, counts, fraction)


def npmle_by_group(data: CurrentStatusDataset, covariate: int) -> Dict[float, NpmleEstimate]:
    """NPMLE separately for each distinct value of covariate column ``covariate`` (1-based)"""
    if not 1 <= covariate < data.n_theta:
        raise DimensionError(f"covariate index must be in 1..{data.n_theta - 1}")
    column = data.X[:, covariate]
    return {float(value): npmle_survival(data.subset(column == value)) for value in np.unique(column)}


def write_npmle(estimate: NpmleEstimate, path: Union[str, Path], header_lines: Sequence[str] = ()) -> Path:
    return write_table(estimate.to_frame(), path, header_lines)


def group_to_midpoints(times: Sequence[float], breaks: Sequence[float]) -> np.ndarray:
    """Replace each time by the midpoint of its interval [b_j, b_j+1); the last interval is closed"""
    times = np.asarray(times, dtype=float)
    breaks = np.asarray(breaks, dtype=float)
    if breaks.size < 2 or np.any(np.diff(breaks) <= 0):
        raise DataValidationError("breaks must hold at least two strictly increasing values")
    if np.any(times < breaks[0]) or np.any(times > breaks[-1]):
        raise DataValidationError(f"times must lie in [{breaks[0]}, {breaks[-1]}]")
    slot = np.clip(np.searchsorted(breaks, times, side="right") - 1, 0, breaks.size - 2)
    return (breaks[slot] + breaks[slot + 1]) / 2.0
