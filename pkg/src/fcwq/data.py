"""Return series construction and rolling-window views.

Returns are percentage log-returns, ``100 * ln(P_t / P_{t-1})``, dated at the
later price. No demeaning is applied anywhere in the package: the models and
scores assume zero conditional mean.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised for malformed price or return input."""


@dataclass(frozen=True)
class ReturnSeries:
    dates: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        returns = np.asarray(self.returns, dtype=float)
        if dates.ndim != 1 or returns.ndim != 1:
            raise DataError("dates and returns must be one-dimensional")
        if len(dates) != len(returns):
            raise DataError(f"{len(dates)} dates but {len(returns)} returns")
        if len(dates) > 1 and not np.all(np.diff(dates) > np.timedelta64(0, "D")):
            bad = int(np.argmax(np.diff(dates) <= np.timedelta64(0, "D"))) + 1
            raise DataError(f"dates not strictly increasing at row {bad}")
        if not np.all(np.isfinite(returns)):
            bad = int(np.argmax(~np.isfinite(returns)))
            raise DataError(f"non-finite return at row {bad}")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", returns)

    def __len__(self) -> int:
        return len(self.returns)

    def __getitem__(self, key: slice) -> "ReturnSeries":
        if not isinstance(key, slice):
            raise TypeError("ReturnSeries supports slicing only")
        return ReturnSeries(self.dates[key], self.returns[key])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"date": pd.to_datetime(self.dates), "return": self.returns})


@dataclass(frozen=True)
class WindowSpec:
    """Rolling scheme: ``in_sample_n`` observations per window, ``out_sample_h`` origins."""

    in_sample_n: int
    out_sample_h: int

    def __post_init__(self):
        if self.in_sample_n < 1:
            raise DataError("in-sample size must be positive")
        if self.out_sample_h < 0:
            raise DataError("out-of-sample size must be non-negative")

    def check(self, length: int) -> None:
        if self.in_sample_n + self.out_sample_h > length:
            raise DataError(
                f"N + H = {self.in_sample_n + self.out_sample_h} exceeds series length {length}"
            )


@dataclass(frozen=True)
class Window:
    """Estimation window ``h`` (0-based): observations ``start .. stop - 1``.

    The forecast produced from this window targets observation ``stop``.
    """

    h: int
    start: int
    stop: int
    series: ReturnSeries

    @property
    def returns(self) -> np.ndarray:
        return self.series.returns


def rolling_windows(series: ReturnSeries, spec: WindowSpec) -> list[Window]:
    """All ``H`` fixed-length windows; window ``h`` covers ``h .. N + h - 1``."""
    spec.check(len(series))
    n = spec.in_sample_n
    return [Window(h, h, h + n, series[h:h + n]) for h in range(spec.out_sample_h)]


def returns_from_prices(prices) -> np.ndarray:
    prices = np.asarray(prices, dtype=float)
    if prices.ndim != 1 or len(prices) < 2:
        raise DataError("need at least two prices")
    if not np.all(np.isfinite(prices)) or np.any(prices <= 0):
        bad = int(np.argmax(~np.isfinite(prices) | (prices <= 0)))
        raise DataError(f"invalid price at row {bad}")
    return 100.0 * np.diff(np.log(prices))


def _read_csv(path: str | Path, column: str) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if frame.shape[0] < 1:
        raise DataError(f"{path} has no rows")
    date_col = "date" if "date" in frame.columns else frame.columns[0]
    if column not in frame.columns:
        raise DataError(f"column {column!r} not in {list(frame.columns)}")
    try:
        dates = pd.to_datetime(frame[date_col], format="ISO8601").to_numpy("datetime64[D]")
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparsable date in {path}: {exc}") from None
    values = pd.to_numeric(frame[column], errors="coerce").to_numpy(float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DataError(f"missing or unparsable {column!r} value at row {bad[0]}")
    steps = np.diff(dates)
    if np.any(steps <= np.timedelta64(0, "D")):
        raise DataError(f"dates not strictly increasing at row {int(np.argmax(steps <= np.timedelta64(0, 'D'))) + 1}")
    return dates, values


def load_prices(path: str | Path, column: str = "close") -> ReturnSeries:
    """Read a price column from CSV and return percentage log-returns.

    Row ``t`` of the output is dated at price ``t + 1`` of the input.
    """
    dates, prices = _read_csv(path, column)
    if len(prices) < 2:
        raise DataError("need at least two price rows")
    return ReturnSeries(dates[1:], returns_from_prices(prices))


def load_returns(path: str | Path, column: str = "return") -> ReturnSeries:
    """Read pre-computed returns (already in percent) from CSV."""
    dates, values = _read_csv(path, column)
    return ReturnSeries(dates, values)
