"""
The exchange's outer problem.

For each candidate (fee family, coefficient, closing randomisation) the
trader's best response is recomputed (incentive compatibility), the
reservation constraint is screened, and the exchange's objective is scored
under the true measure with fee-distorted arrivals.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .engine import (
    EstimatorConfig, Moments, RawDraws, arrival_measure, map_blocks, merge_moments,
    realize, settle,
)
from .exceptions import InfeasibleMechanismError, ValidationError
from .model import AuctionParams, Beliefs, ClosingRule, FeeFamily, FeeSchedule, PathSample
from .trader import ArrivalValueCurve, MuTable, PolicyStore

logger = logging.getLogger(__name__)


class ObjectiveKind(Enum):
    TOTAL_SPREAD = "total_spread"
    EFFICIENCY_MINUS_FEE = "efficiency_minus_fee"


class FeeBase(Enum):
    ALL_ARRIVALS = "all_arrivals"
    STRATEGIC_ONLY = "strategic_only"


@dataclass(frozen=True)
class ObjectiveSpec:
    """Exchange objective; ``rho`` None is the quadratic (risk-neutral) form."""

    kind: ObjectiveKind = ObjectiveKind.TOTAL_SPREAD
    rho: Optional[float] = None
    fee_base: FeeBase = FeeBase.ALL_ARRIVALS

    def __post_init__(self):
        try:
            if isinstance(self.kind, str):
                object.__setattr__(self, 'kind', ObjectiveKind(self.kind))
            if isinstance(self.fee_base, str):
                object.__setattr__(self, 'fee_base', FeeBase(self.fee_base))
        except ValueError as e:
            raise ValidationError(f"Invalid objective: {e}", field='objective')
        if self.rho is not None and not (math.isfinite(self.rho) and self.rho > 0):
            raise ValidationError("rho must be positive when given", field='rho')

    def score(self, spread: np.ndarray, avg_fee: np.ndarray) -> np.ndarray:
        """Per-path objective from |P_cl - P*| and the average fee."""
        if self.kind is ObjectiveKind.TOTAL_SPREAD:
            if self.rho is None:
                return np.square(spread + avg_fee)
            return np.exp(self.rho * (spread + avg_fee))
        if self.rho is None:
            return np.square(spread) - avg_fee
        return np.exp(self.rho * (spread - avg_fee))

    def quality(self, spread: np.ndarray) -> np.ndarray:
        """The market-quality part alone: |.|^2 or exp(rho |.|)."""
        if self.rho is None:
            return np.square(spread)
        return np.exp(self.rho * spread)

    def label(self) -> str:
        suffix = '' if self.rho is None else f'^{self.rho:g}'
        return f"{self.kind.value}{suffix}"


def average_fee(path: PathSample, fee: FeeSchedule, base: FeeBase = FeeBase.ALL_ARRIVALS) -> float:
    """
    Average fee of one path.

    all_arrivals charges xi(t) to every market maker arriving in (t-1, t] up to
    the close (the resting order pays nothing) and divides by N at the close;
    strategic_only is xi(tau) when the trader made the close, else 0.
    """
    if base is FeeBase.STRATEGIC_ONLY:
        if path.trader_arrival <= path.closing_time:
            return float(fee.eval(path.trader_arrival))
        return 0.0
    charged = [float(fee.eval(math.ceil(s))) for s in path.mm_arrival_times if s <= path.closing_time]
    return math.fsum(charged) / (1 + len(charged))


@dataclass(frozen=True)
class MechanismResult:
    fee: FeeSchedule
    closing: ClosingRule
    tau_hat: int
    exchange_value: float
    fee_revenue: float
    mq_with_fee: float
    mq_zero_fee: float
    reservation_satisfied: bool
    exchange_value_se: float = float('nan')
    fee_revenue_se: float = float('nan')
    mq_with_fee_se: float = float('nan')
    mq_zero_fee_se: float = float('nan')
    trader_value: float = float('nan')
    reservation_rhs: float = float('nan')
    tau_zero_fee: int = 0
    randomization: float = 0.0

    @property
    def fee_gain(self) -> float:
        """Quality with fees minus the exchange's value."""
        return self.mq_with_fee - self.exchange_value

    def to_dict(self) -> Dict[str, Any]:
        return {
            'fee': self.fee.label(),
            'family': self.fee.family.value,
            'a': self.fee.a,
            'p': self.randomization,
            'closing': self.closing.label(),
            'tau_hat': self.tau_hat,
            'exchange_value': self.exchange_value,
            'exchange_value_se': self.exchange_value_se,
            'fee_revenue': self.fee_revenue,
            'fee_revenue_se': self.fee_revenue_se,
            'fee_gain': self.fee_gain,
            'mq_with_fee': self.mq_with_fee,
            'mq_with_fee_se': self.mq_with_fee_se,
            'mq_zero_fee': self.mq_zero_fee,
            'mq_zero_fee_se': self.mq_zero_fee_se,
            'tau_zero_fee': self.tau_zero_fee,
            'trader_value': self.trader_value,
            'reservation_rhs': self.reservation_rhs,
            'reservation_satisfied': self.reservation_satisfied,
        }


def results_frame(results: Sequence[MechanismResult]) -> pd.DataFrame:
    return pd.DataFrame.from_records([r.to_dict() for r in results])


def randomization_of(closing: ClosingRule, horizon: int) -> float:
    """p of a rule on {T-1, T}: a close fixed at T-1 is p = 1, any other fixed close p = 0."""
    if closing.is_deterministic:
        return 1.0 if closing.support[0] == horizon - 1 else 0.0
    p = closing.bernoulli_p
    return float("nan") if p is None else p


def _reservation(params: AuctionParams, curve: ArrivalValueCurve, tau_hat: int) -> Tuple[bool, float, float]:
    value = curve.value_at(tau_hat).value
    rhs = 0.5 * params.gamma * curve.volume_at(tau_hat).value
    return value >= rhs, value, rhs


def reservation_holds(
    fee: FeeSchedule,
    closing: ClosingRule,
    params: AuctionParams,
    beliefs: Beliefs,
    cfg: EstimatorConfig,
    store: Optional[PolicyStore] = None,
) -> bool:
    """V^fee at the best response against (gamma/2) times the expected executed volume."""
    store = store or PolicyStore()
    tau_hat, curve = store.best_response(params, beliefs, fee, closing, cfg)
    holds, value, rhs = _reservation(params, curve, tau_hat)
    logger.debug("Reservation at tau=%d: value %.6f vs %.6f", tau_hat, value, rhs)
    return holds


def _score_block(
    start: int,
    count: int,
    params: AuctionParams,
    fee: FeeSchedule,
    closing: ClosingRule,
    seed: int,
    policy: MuTable,
    tau: int,
    objective: ObjectiveSpec,
) -> Dict[str, Moments]:
    draws = RawDraws.draw(seed, params.horizon, start, count)
    truth = realize(draws, params, (params.mu_star, params.mu_mm),
                    arrival_measure(params, fee), fee, closing)
    outcome = settle(truth, params, fee, tau, policy)
    spread = np.abs(outcome.price - outcome.efficient_price)
    if objective.fee_base is FeeBase.ALL_ARRIVALS:
        avg_fee = outcome.avg_fee_all
    else:
        avg_fee = outcome.avg_fee_strategic
    return {
        'objective': Moments.of(objective.score(spread, avg_fee)),
        'revenue': Moments.of(avg_fee),
        'quality': Moments.of(objective.quality(spread)),
    }


def _score(
    params: AuctionParams,
    fee: FeeSchedule,
    closing: ClosingRule,
    policy: MuTable,
    tau: int,
    objective: ObjectiveSpec,
    cfg: EstimatorConfig,
) -> Dict[str, Moments]:
    parts = map_blocks(_score_block, cfg, params, fee, closing, cfg.seed, policy, tau, objective)
    return merge_moments(parts)


def evaluate_mechanism(
    fee: FeeSchedule,
    closing: ClosingRule,
    objective: ObjectiveSpec,
    params: AuctionParams,
    beliefs: Beliefs,
    cfg: EstimatorConfig,
    store: Optional[PolicyStore] = None,
) -> MechanismResult:
    closing.validate_against(params)
    store = store or PolicyStore()
    tau_hat, curve = store.best_response(params, beliefs, fee, closing, cfg)
    holds, value, rhs = _reservation(params, curve, tau_hat)
    scored = _score(params, fee, closing, store.table(params, beliefs, fee, closing, cfg),
                    tau_hat, objective, cfg)

    zero = FeeSchedule.zero()
    tau_zero, _ = store.best_response(params, beliefs, zero, closing, cfg)
    baseline = _score(params, zero, closing, store.table(params, beliefs, zero, closing, cfg),
                      tau_zero, objective, cfg)

    result = MechanismResult(
        fee=fee,
        closing=closing,
        tau_hat=tau_hat,
        exchange_value=scored['objective'].mean,
        fee_revenue=scored['revenue'].mean,
        mq_with_fee=scored['quality'].mean,
        mq_zero_fee=baseline['quality'].mean,
        reservation_satisfied=holds,
        exchange_value_se=scored['objective'].stderr,
        fee_revenue_se=scored['revenue'].stderr,
        mq_with_fee_se=scored['quality'].stderr,
        mq_zero_fee_se=baseline['quality'].stderr,
        trader_value=value,
        reservation_rhs=rhs,
        tau_zero_fee=tau_zero,
        randomization=randomization_of(closing, params.horizon),
    )
    logger.info("Candidate %s %s: tau=%d value=%.4f feasible=%s", fee.label(), closing.label(),
                tau_hat, result.exchange_value, holds)
    return result


DEFAULT_P_GRID = tuple(round(0.02 * i, 2) for i in range(11)) + (0.5, 1.0)


def default_a_grid(kind: ObjectiveKind) -> Tuple[float, ...]:
    if kind is ObjectiveKind.TOTAL_SPREAD:
        return tuple(round(0.001 * i, 3) for i in range(11))
    return tuple(round(0.01 * i, 2) for i in range(31))


def _candidates(
    fee_families: Sequence[FeeFamily],
    a_grid: Sequence[float],
    p_grid: Sequence[float],
    horizon: int,
) -> List[Tuple[FeeSchedule, ClosingRule, float]]:
    order = {FeeFamily.ZERO: 0, FeeFamily.LINEAR: 1, FeeFamily.SQUARE: 2}
    candidates = []
    for family in sorted(set(fee_families), key=order.__getitem__):
        coefficients = [0.0] if family is FeeFamily.ZERO else sorted(set(a_grid))
        for a in coefficients:
            for p in sorted(set(p_grid)):
                candidates.append((FeeSchedule(family, a), ClosingRule.bernoulli(p, horizon), p))
    return candidates


def sweep_mechanisms(
    objective: ObjectiveSpec,
    fee_families: Sequence[FeeFamily],
    a_grid: Sequence[float],
    p_grid: Sequence[float],
    params: AuctionParams,
    beliefs: Beliefs,
    cfg: EstimatorConfig,
    store: Optional[PolicyStore] = None,
) -> List[MechanismResult]:
    """Evaluate every (family, a, p) candidate in grid order."""
    if not fee_families or not a_grid or not p_grid:
        raise ValidationError("mechanism grids cannot be empty", field='grid')
    store = store or PolicyStore()
    candidates = _candidates(fee_families, a_grid, p_grid, params.horizon)
    logger.info("Sweeping %d mechanisms for %s", len(candidates), objective.label())
    return [
        evaluate_mechanism(fee, closing, objective, params, beliefs, cfg, store)
        for fee, closing, _ in candidates
    ]


def select_mechanism(results: Sequence[MechanismResult]) -> MechanismResult:
    """
    Feasible minimiser; ties go to the smaller a, then the smaller p, then the
    linear family before the square one.
    """
    feasible = [r for r in results if r.reservation_satisfied]
    if not feasible:
        raise InfeasibleMechanismError(
            f"All {len(results)} candidate mechanisms violate the reservation constraint",
            candidates=list(results))
    order = {FeeFamily.ZERO: 0, FeeFamily.LINEAR: 1, FeeFamily.SQUARE: 2}
    return min(feasible, key=lambda r: (r.exchange_value, r.fee.a, r.randomization,
                                        order[r.fee.family]))


def optimize_mechanism(
    objective: ObjectiveSpec,
    fee_families: Sequence[FeeFamily],
    a_grid: Sequence[float],
    p_grid: Sequence[float],
    params: AuctionParams,
    beliefs: Beliefs,
    cfg: EstimatorConfig,
    store: Optional[PolicyStore] = None,
) -> MechanismResult:
    results = sweep_mechanisms(objective, fee_families, a_grid, p_grid, params, beliefs, cfg, store)
    best = select_mechanism(results)
    logger.info("Optimal mechanism %s %s (tau=%d, value %.4f)", best.fee.label(),
                best.closing.label(), best.tau_hat, best.exchange_value)
    return best


def sweep_series(results: Sequence[MechanismResult]) -> pd.DataFrame:
    """
    Long-format curves against a, one series per fee family: the trader's
    arrival time and the exchange's value, each at the best p for that a.
    """
    records = []
    by_key: Dict[Tuple[FeeFamily, float], MechanismResult] = {}
    for r in results:
        key = (r.fee.family, r.fee.a)
        if r.reservation_satisfied and (key not in by_key or r.exchange_value < by_key[key].exchange_value):
            by_key[key] = r
    for (family, a), r in sorted(by_key.items(), key=lambda item: (item[0][0].value, item[0][1])):
        records.append({'series': f'tau_hat_{family.value}', 'x': a, 'y': float(r.tau_hat),
                        'stderr': 0.0})
        records.append({'series': f'value_{family.value}', 'x': a, 'y': r.exchange_value,
                        'stderr': r.exchange_value_se})
    return pd.DataFrame.from_records(records, columns=['series', 'x', 'y', 'stderr'])
