"""CSV ingestion of price or return series and descriptive statistics."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import pandas as pd

from atvgarch.exceptions import DegenerateQuantiles, EmptySeries, NonPositivePrice, ParseError
from atvgarch.model import SeriesData

__all__ = ["DatasetConfig", "SummaryStats", "read_values", "load_returns", "summary"]

logger = logging.getLogger(__name__)

# Moors kurtosis of the standard normal distribution
MOORS_NORMAL = 1.233


@dataclass(frozen=True)
class DatasetConfig:
    """
    Where and how to read a series.

    ``kind="prices"`` converts to log-returns, ``kind="returns"`` passes the
    values through. Returns are multiplied by ``scale``.
    """

    path: Union[str, Path]
    date_column: str = "date"
    value_column: str = "value"
    kind: Literal["prices", "returns"] = "prices"
    scale: float = 10.0
    start: Optional[str] = None
    end: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError("scale factor must be positive")
        if self.kind not in ("prices", "returns"):
            raise ValueError(f"unknown value kind {self.kind!r}")


def read_values(config: DatasetConfig) -> tuple[np.ndarray, int]:
    """
    Read the value column, applying the optional date filter.

    Returns the values and the number of rows dropped for missing data.
    """
    try:
        df = pd.read_csv(config.path, encoding="utf-8", float_precision="round_trip")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ParseError(f"cannot read {config.path}: {exc}") from exc
    if config.value_column not in df.columns:
        raise ParseError(f"column {config.value_column!r} not found in {config.path}")
    if config.start or config.end:
        if config.date_column not in df.columns:
            raise ParseError(f"date filtering needs column {config.date_column!r}")
        dates = pd.to_datetime(df[config.date_column], errors="coerce")
        keep = pd.Series(True, index=df.index)
        if config.start:
            keep &= dates >= pd.Timestamp(config.start)
        if config.end:
            keep &= dates <= pd.Timestamp(config.end)
        df = df[keep]
    values = pd.to_numeric(df[config.value_column], errors="coerce")
    n_missing = int(values.isna().sum())
    if n_missing:
        logger.info("dropped %d rows with missing or non-numeric values", n_missing)
    return values.dropna().to_numpy(dtype=float), n_missing


def load_returns(config: DatasetConfig) -> SeriesData:
    """
    Load a return series, scaled by ``config.scale``.

    Raises
    ------
    ParseError, EmptySeries, NonPositivePrice
    """
    values, _ = read_values(config)
    if config.kind == "prices":
        if np.any(values <= 0):
            raise NonPositivePrice("log-returns need strictly positive prices")
        returns = np.log(values[1:] / values[:-1])
    else:
        returns = values
    if returns.size == 0:
        raise EmptySeries(f"no returns could be formed from {config.path}")
    return SeriesData(config.scale * returns)


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    sd: float
    median: float
    min: float
    max: float
    skewness: float
    kurtosis: float
    robust_skewness: float
    robust_kurtosis: float

    @property
    def excess_kurtosis(self) -> float:
        return self.kurtosis - 3.0

    def to_dict(self) -> dict:
        return asdict(self)

    def format_row(self, name: str = "series", decimals: int = 3) -> str:
        vals = [self.mean, self.sd, self.median, self.min, self.max, self.skewness,
                self.kurtosis, self.robust_skewness, self.robust_kurtosis]
        head = ["Mean", "Sd", "Med", "Min", "Max", "Skew", "Kurt", "R Skew", "R Kurt"]
        w = 9
        return "\n".join([
            f"{'Series':<10}" + "".join(f"{h:>{w}}" for h in head),
            f"{name:<10}" + "".join(f"{v:>{w}.{decimals}f}" for v in vals),
        ])


def summary(series: Union[SeriesData, np.ndarray]) -> SummaryStats:
    """
    Moment and quantile-based summary statistics.

    Skewness and kurtosis use the population-moment formulas ``m3 / m2^1.5``
    and ``m4 / m2^2`` (kurtosis is not in excess form). Robust skewness is
    Bowley's quartile skewness, robust kurtosis is Moors' octile kurtosis minus
    its value under normality. Quantiles use linear interpolation between
    order statistics.
    """
    x = series.values if isinstance(series, SeriesData) else np.asarray(series, dtype=float)
    if x.size < 4:
        raise ValueError("summary statistics need at least 4 observations")
    d = x - x.mean()
    m2 = np.mean(d**2)
    m3 = np.mean(d**3)
    m4 = np.mean(d**4)
    q1, q2, q3 = np.quantile(x, [0.25, 0.5, 0.75])
    if q3 == q1:
        raise DegenerateQuantiles("upper and lower quartiles coincide")
    e1, e2, e3, e5, e6, e7 = np.quantile(x, [1 / 8, 2 / 8, 3 / 8, 5 / 8, 6 / 8, 7 / 8])
    if e6 == e2:
        raise DegenerateQuantiles("second and sixth octiles coincide")
    return SummaryStats(
        mean=float(x.mean()),
        sd=float(np.std(x, ddof=1)),
        median=float(q2),
        min=float(x.min()),
        max=float(x.max()),
        skewness=float(m3 / m2**1.5) if m2 > 0 else float("nan"),
        kurtosis=float(m4 / m2**2) if m2 > 0 else float("nan"),
        robust_skewness=float((q3 + q1 - 2.0 * q2) / (q3 - q1)),
        robust_kurtosis=float(((e7 - e5) + (e3 - e1)) / (e6 - e2) - MOORS_NORMAL),
    )
