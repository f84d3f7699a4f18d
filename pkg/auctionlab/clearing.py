"""
Volume-maximizing uniform-price clearing with and without the strategic seller.

Scalar functions take explicit price lists; the ``*_arrays`` variants work on
per-path sums and counts and are what the Monte Carlo engine calls.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class ClearingOutcome:
    price: float
    trader_included: bool


def _check_prices(prices: Sequence[float]) -> None:
    if len(prices) == 0:
        raise ValueError("Price list cannot be empty")


def clear_no_trader(prices: Sequence[float]) -> float:
    """Clearing price of the market makers alone: the mean limit price."""
    _check_prices(prices)
    return math.fsum(prices) / len(prices)


def clear(prices: Sequence[float], trader_price: float) -> ClearingOutcome:
    """
    Clear the auction with the strategic seller's limit price.

    The seller is included iff the market makers' mean is strictly above the
    seller's price; a tie takes the exclusion branch.
    """
    _check_prices(prices)
    total = math.fsum(prices)
    n = len(prices)
    if total / n > trader_price:
        return ClearingOutcome((total + trader_price) / (n + 1), True)
    return ClearingOutcome(total / n, False)


def executed_volume(
    prices: Sequence[float],
    trader_price: Optional[float],
    candidate: float,
    K: float,
) -> float:
    """
    Executed volume if the auction cleared at ``candidate``.

    Market maker i buys K(p_i - c) when p_i > c and sells K(c - p_i) when
    p_i < c; the seller (if present) adds K(c - p) to the sell side once
    c >= p. The executed volume is the smaller side.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    buy = 0.0
    sell = 0.0
    for p in prices:
        if p > candidate:
            buy += K * (p - candidate)
        elif p < candidate:
            sell += K * (candidate - p)
    if trader_price is not None and candidate >= trader_price:
        sell += K * (candidate - trader_price)
    return min(buy, sell)


def trader_payoff(
    outcome: ClearingOutcome,
    trader_price: float,
    efficient_price: float,
    K: float,
    fee_at_arrival: float = 0.0,
) -> float:
    """Seller's payoff K(P_cl - P)(P_cl - P*) net of the fee K(P_cl - P)xi(tau)."""
    if not (outcome.trader_included and trader_price <= outcome.price):
        return 0.0
    volume = K * (outcome.price - trader_price)
    return volume * (outcome.price - efficient_price) - volume * fee_at_arrival


def clear_two_sided(sum_prices: float, n: int, trader_price: float) -> float:
    """Clearing price when the trader always executes, as buyer or seller."""
    return (sum_prices + trader_price) / (n + 1)


# Vectorised forms over simulated paths ---------------------------------------

def clear_arrays(
    sums: np.ndarray,
    counts: np.ndarray,
    trader_price: np.ndarray,
    present: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Clear many auctions at once.

    Args:
        sums: sum of market-maker prices in the pool at the close
        counts: number of market-maker orders in the pool (>= 1)
        trader_price: the seller's submitted price
        present: whether the seller reached the auction before the close

    Returns:
        (clearing prices, inclusion flags)
    """
    mean = sums / counts
    included = present & (mean > trader_price)
    price = np.where(included, (sums + trader_price) / (counts + 1), mean)
    return price, included


def payoff_arrays(
    price: np.ndarray,
    included: np.ndarray,
    trader_price: np.ndarray,
    efficient_price: np.ndarray,
    K: float,
    fee_at_arrival: float = 0.0,
) -> np.ndarray:
    executed = included & (trader_price <= price)
    volume = K * (price - trader_price)
    return np.where(executed, volume * (price - efficient_price - fee_at_arrival), 0.0)
