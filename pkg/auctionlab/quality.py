"""
Market-quality functionals seen by the exchange.

Scoring happens under the true means while the trader's policy comes from
its beliefs; both realisations share the same underlying draws.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .clearing import clear_two_sided
from .engine import (
    EstimatorConfig, Estimate, Moments, RawDraws, arrival_measure, map_blocks,
    merge_moments, realize, settle,
)
from .model import AuctionParams, Beliefs, ClosingRule, FeeSchedule
from .trader import DEFAULT_GRID, MuGrid, MuTable, closed_form_mu_bar

logger = logging.getLogger(__name__)


def mq_no_trader(params: AuctionParams) -> float:
    """sigma^2 (1 + (1 - exp(-T lambda)) / (T lambda)), exact."""
    rate = params.horizon * params.lam
    return params.sigma ** 2 * (1.0 - math.expm1(-rate) / rate)


@dataclass(frozen=True)
class QualityRow:
    tau: int
    trader_value: Estimate
    mq: Estimate
    mq_rho: Dict[float, Estimate]
    price_impact: Estimate
    expected_mu_hat: Estimate


@dataclass(frozen=True)
class QualityReport:
    rows: Tuple[QualityRow, ...]
    rhos: Tuple[float, ...] = ()
    baseline: float = float('nan')

    def row(self, tau: int) -> QualityRow:
        for row in self.rows:
            if row.tau == tau:
                return row
        raise KeyError(tau)

    def regulator_arrival(self, rho: Optional[float] = None) -> int:
        """Arrival time the exchange would pick: argmin of MQ (or MQ^rho), earliest on ties."""
        if rho is None:
            scores = [r.mq.value for r in self.rows]
        else:
            scores = [r.mq_rho[rho].value for r in self.rows]
        return self.rows[int(np.argmin(scores))].tau

    def to_frame(self) -> pd.DataFrame:
        records: List[Dict[str, Any]] = []
        for row in self.rows:
            record: Dict[str, Any] = {
                'tau': row.tau,
                'trader_value': row.trader_value.value,
                'trader_value_se': row.trader_value.stderr,
                'mq': row.mq.value,
                'mq_se': row.mq.stderr,
            }
            for rho in self.rhos:
                record[f'mq_rho_{rho:g}'] = row.mq_rho[rho].value
                record[f'mq_rho_{rho:g}_se'] = row.mq_rho[rho].stderr
            record.update({
                'price_impact': row.price_impact.value,
                'price_impact_se': row.price_impact.stderr,
                'expected_mu_hat': row.expected_mu_hat.value,
                'expected_mu_hat_se': row.expected_mu_hat.stderr,
            })
            records.append(record)
        return pd.DataFrame.from_records(records)

    def series(self) -> pd.DataFrame:
        """Long-format (series, x, y, stderr) curves of MQ^rho against tau."""
        records = [
            {'series': f'mq_rho_{rho:g}', 'x': row.tau,
             'y': row.mq_rho[rho].value, 'stderr': row.mq_rho[rho].stderr}
            for rho in self.rhos for row in self.rows
        ]
        return pd.DataFrame.from_records(records, columns=['series', 'x', 'y', 'stderr'])

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format='%.10g')


def _quality_block(
    start: int,
    count: int,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    seed: int,
    policy: Optional[MuTable],
    times: Tuple[int, ...],
    rhos: Tuple[float, ...],
) -> Dict[Any, Moments]:
    draws = RawDraws.draw(seed, params.horizon, start, count)
    measure = arrival_measure(params, fee)
    truth = realize(draws, params, (params.mu_star, params.mu_mm), measure, fee, closing)
    believed = None
    if policy is not None:
        believed = realize(draws, params, (beliefs.mu_g_star, beliefs.mu_g_mm), measure, fee, closing)

    stats: Dict[Any, Moments] = {}
    for tau in times:
        scored = settle(truth, params, fee, tau, policy)
        spread = scored.price - scored.efficient_price
        stats[('mq', tau)] = Moments.of(np.square(spread))
        for rho in rhos:
            stats[('mq_rho', rho, tau)] = Moments.of(np.exp(rho * np.abs(spread)))
        stats[('impact', tau)] = Moments.of(np.square(scored.no_trader_price - scored.price))
        if believed is not None:
            stats[('mu_hat', tau)] = Moments.of(scored.mu_hat)
            stats[('value', tau)] = Moments.of(settle(believed, params, fee, tau, policy).payoff)
    return stats


def quality_table(
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    rho_list: Sequence[float],
    cfg: EstimatorConfig,
    times: Optional[Sequence[int]] = None,
    table: Optional[MuTable] = None,
    trader: bool = True,
    grid: MuGrid = DEFAULT_GRID,
    cache_dir: Optional[str] = None,
) -> QualityReport:
    """
    Quality of the auction for every arrival time, on common paths.

    With ``trader`` False the strategic seller never shows up and every row
    describes the market makers alone.
    """
    times = tuple(params.time_grid if times is None else times)
    rhos = tuple(float(r) for r in rho_list)
    policy = None
    if trader:
        policy = table or MuTable.build(params, beliefs, fee, closing, cfg, grid, times, cache_dir)
    parts = map_blocks(_quality_block, cfg, params, beliefs, fee, closing, cfg.seed,
                       policy, times, rhos)
    stats = merge_moments(parts)
    missing = Estimate(float('nan'), float('nan'))
    rows = []
    for tau in times:
        rows.append(QualityRow(
            tau=tau,
            trader_value=stats[('value', tau)].estimate if trader else Estimate(0.0, 0.0),
            mq=stats[('mq', tau)].estimate,
            mq_rho={rho: stats[('mq_rho', rho, tau)].estimate for rho in rhos},
            price_impact=stats[('impact', tau)].estimate,
            expected_mu_hat=stats[('mu_hat', tau)].estimate if trader else missing,
        ))
    report = QualityReport(tuple(rows), rhos, mq_no_trader(params))
    logger.info("Quality table over %d arrival times, regulator's choice tau=%d",
                len(times), report.regulator_arrival())
    return report


def evaluate_quality(
    tau: int,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    rho_list: Sequence[float],
    cfg: EstimatorConfig,
    table: Optional[MuTable] = None,
    trader: bool = True,
    grid: MuGrid = DEFAULT_GRID,
    cache_dir: Optional[str] = None,
) -> QualityRow:
    report = quality_table(params, beliefs, fee, closing, rho_list, cfg, (tau,), table,
                           trader, grid, cache_dir)
    return report.row(tau)


class QuarterCheck(NamedTuple):
    ratio: float
    stderr: float
    max_halving_error: float


def _quarter_block(start: int, count: int, params: AuctionParams, seed: int) -> Tuple[Moments, float]:
    zero = FeeSchedule.zero()
    close = params.horizon
    draws = RawDraws.draw(seed, params.horizon, start, count)
    block = realize(draws, params, (params.mu_star, params.mu_mm), arrival_measure(params, zero),
                    zero, ClosingRule.deterministic(close))
    n = block.cum_counts[:, close]
    sums = block.cum_sums[:, close]
    p_star = block.efficient_price
    price = clear_two_sided(sums, n, closed_form_mu_bar(n, sums, p_star))
    spread = price - p_star
    halved = 0.5 * (sums / n - p_star)
    error = np.abs(spread - halved) / np.maximum(np.abs(p_star), np.abs(halved))
    return Moments.of(np.square(spread)), float(error.max())


def quarter_check(params: AuctionParams, cfg: EstimatorConfig) -> QuarterCheck:
    """
    MQ(T) / MQ^0 when the trader knows P* and sends the unconstrained optimum
    at the close; the ratio should be one quarter.

    ``max_halving_error`` is the largest gap, relative to the price level,
    between P_cl - P* and half the no-trader spread over all paths.
    """
    parts = map_blocks(_quarter_block, cfg, params, cfg.seed)
    mq = merge_moments({'mq': moments} for moments, _ in parts)['mq']
    baseline = mq_no_trader(params)
    worst = max(error for _, error in parts)
    return QuarterCheck(mq.mean / baseline, mq.stderr / baseline, worst)
