"""
Calibration of the market constants from daily OHLC bars.

The day price is (open + high + low + close) / 4; mu is its average, sigma the
root mean squared day-to-day change, and gamma a close-to-midrange bid-ask
spread estimate on log prices.
"""

import datetime
import logging
import math
import re
import warnings
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .exceptions import DataError, UnsortedDataWarning

logger = logging.getLogger(__name__)

COLUMNS = ('date', 'open', 'high', 'low', 'close')


@dataclass(frozen=True)
class DailyBar:
    date: datetime.date
    open: float
    high: float
    low: float
    close: float

    @property
    def day_price(self) -> float:
        return (self.open + self.high + self.low + self.close) / 4.0

    def problem(self) -> Optional[str]:
        """Description of the first violated invariant, or None."""
        prices = (self.open, self.high, self.low, self.close)
        if not all(math.isfinite(p) and p > 0 for p in prices):
            return "prices must be positive"
        if not self.low <= min(self.open, self.close):
            return "low exceeds open or close"
        if not max(self.open, self.close) <= self.high:
            return "high is below open or close"
        return None


@dataclass(frozen=True)
class CalibrationResult:
    mu: float
    sigma: float
    gamma: float
    n_days: int

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_params_fragment(self) -> Dict[str, float]:
        """Fields mergeable into an AuctionParams document (mu* = mu^mm = mu)."""
        return {'mu_star': self.mu, 'mu_mm': self.mu, 'sigma': self.sigma, 'gamma': self.gamma}


def load_bars(csv_path: str) -> List[DailyBar]:
    """
    Read date,open,high,low,close rows.

    Rows out of date order are sorted, with an UnsortedDataWarning. Blank lines
    are skipped. Malformed rows raise DataError carrying the 1-based file line.
    """
    try:
        frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.EmptyDataError:
        raise DataError("no data", path=csv_path)
    except pd.errors.ParserError as e:
        found = re.search(r'line (\d+)', str(e))
        line = int(found.group(1)) if found else None
        raise DataError(f"malformed CSV: {e}", line=line, path=csv_path)

    header = tuple(str(c).strip().lower() for c in frame.columns)
    if header != COLUMNS:
        raise DataError(f"expected header {','.join(COLUMNS)}, got {','.join(header)}",
                        line=1, path=csv_path)
    if frame.empty:
        raise DataError("no data", path=csv_path)

    bars = []
    for offset, row in enumerate(frame.itertuples(index=False, name=None)):
        line = offset + 2
        if all(not isinstance(v, str) or not v.strip() for v in row):
            continue
        try:
            date = datetime.date.fromisoformat(row[0].strip())
            open_, high, low, close = (float(v) for v in row[1:])
        except (ValueError, TypeError, AttributeError):
            raise DataError(f"line {line}: malformed row", line=line, path=csv_path)
        bar = DailyBar(date, open_, high, low, close)
        problem = bar.problem()
        if problem:
            raise DataError(f"line {line}: {problem}", line=line, path=csv_path)
        bars.append(bar)
    if not bars:
        raise DataError("no data", path=csv_path)

    if any(b.date < a.date for a, b in zip(bars, bars[1:])):
        message = f"{csv_path}: rows are not in date order; sorted by date"
        logger.warning(message)
        warnings.warn(message, UnsortedDataWarning, stacklevel=2)
        bars.sort(key=lambda b: b.date)
    logger.debug("Loaded %d bars from %s", len(bars), csv_path)
    return bars


def _frame(bars: Sequence[DailyBar]) -> pd.DataFrame:
    return pd.DataFrame.from_records([asdict(b) for b in bars], columns=list(COLUMNS))


def day_prices(bars: Sequence[DailyBar]) -> np.ndarray:
    frame = _frame(bars)
    return frame[['open', 'high', 'low', 'close']].mean(axis=1).to_numpy()


def estimate_mu(bars: Sequence[DailyBar]) -> float:
    if not bars:
        raise DataError("no data")
    return float(np.mean(day_prices(bars)))


def estimate_sigma(bars: Sequence[DailyBar]) -> float:
    if len(bars) < 2:
        raise DataError("sigma needs at least two bars")
    changes = np.diff(day_prices(bars))
    return float(np.sqrt(np.mean(np.square(changes))))


def estimate_gamma(bars: Sequence[DailyBar]) -> float:
    """
    Mean over consecutive days of sqrt(max(4 (c_t - m_t)(c_t - m_{t+1}), 0)),
    m the (low + high) / 2 midrange, all on natural-log prices.
    """
    if len(bars) < 2:
        raise DataError("gamma needs at least two bars")
    logs = np.log(_frame(bars)[['high', 'low', 'close']])
    mid = (logs['low'] + logs['high']) / 2.0
    product = 4.0 * (logs['close'] - mid) * (logs['close'] - mid.shift(-1))
    gamma = np.sqrt(product.iloc[:-1].clip(lower=0.0))
    return float(gamma.mean())


def calibrate(bars: Sequence[DailyBar]) -> CalibrationResult:
    result = CalibrationResult(
        mu=estimate_mu(bars),
        sigma=estimate_sigma(bars),
        gamma=estimate_gamma(bars),
        n_days=len(bars),
    )
    logger.info("Calibrated %d days: mu=%.4f sigma=%.4f gamma=%.6f",
                result.n_days, result.mu, result.sigma, result.gamma)
    return result
