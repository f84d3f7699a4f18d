"""
Domain types for the periodic auction: market constants, the trader's beliefs,
the exchange's two levers (fees, closing-time law) and the per-path record.
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .exceptions import ValidationError

logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AuctionParams:
    """Market constants of one auction.

    Args:
        horizon: number of integer time steps T
        lam: market-maker arrivals per unit time
        K: slope of the linear supply function
        sigma: standard deviation of every price in the model
        mu_star: mean of the efficient price
        mu_mm: mean of the market makers' limit prices
        mu_bound_width: half-width of the trader's mean search interval, in sigmas
        time_grid: admissible arrival times, defaults to 1..T
        gamma: bid-ask spread of the continuous market (log-price units)
    """

    horizon: int
    lam: float
    K: float
    sigma: float
    mu_star: float
    mu_mm: float
    mu_bound_width: float = 4.0
    time_grid: Tuple[int, ...] = ()
    gamma: float = 0.0

    def __post_init__(self):
        if not self.time_grid and isinstance(self.horizon, int) and self.horizon >= 1:
            object.__setattr__(self, 'time_grid', tuple(range(1, self.horizon + 1)))
        else:
            object.__setattr__(self, 'time_grid', tuple(self.time_grid))

    @property
    def T(self) -> int:
        return self.horizon

    def with_updates(self, **changes: Any) -> 'AuctionParams':
        values = params_to_dict(self)
        values.update({('lambda' if k == 'lam' else k): v for k, v in changes.items()})
        if 'horizon' in changes and 'time_grid' not in changes:
            values['time_grid'] = []
        return params_from_dict(values)


def validate(params: AuctionParams) -> None:
    """Check every AuctionParams invariant, raising ValidationError on the first violation."""
    if not isinstance(params.horizon, int) or params.horizon < 2:
        raise ValidationError("horizon too short: need T >= 2", field='horizon')
    checks = [
        ('lambda', params.lam, "lambda must be positive"),
        ('K', params.K, "K must be positive"),
        ('sigma', params.sigma, "sigma must be positive"),
        ('mu_bound_width', params.mu_bound_width, "mu_bound_width must be positive"),
    ]
    for name, value, message in checks:
        if not (math.isfinite(value) and value > 0):
            raise ValidationError(message, field=name)
    for name in ('mu_star', 'mu_mm'):
        if not math.isfinite(getattr(params, name)):
            raise ValidationError(f"{name} must be finite", field=name)
    if not (math.isfinite(params.gamma) and params.gamma >= 0):
        raise ValidationError("gamma must be non-negative", field='gamma')

    grid = params.time_grid
    if not grid:
        raise ValidationError("time_grid cannot be empty", field='time_grid')
    if any(int(t) != t or t < 1 for t in grid):
        raise ValidationError("time_grid must hold positive integers", field='time_grid')
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValidationError("time_grid must be strictly increasing", field='time_grid')
    if grid[-1] != params.horizon:
        raise ValidationError("time_grid must end at the horizon", field='time_grid')


@dataclass(frozen=True)
class Beliefs:
    """The strategic trader's conjectured means; they define the measure E_g."""

    mu_g_star: float
    mu_g_mm: float

    @classmethod
    def perfect(cls, params: AuctionParams) -> 'Beliefs':
        return cls(params.mu_star, params.mu_mm)

    @classmethod
    def shifted(cls, params: AuctionParams, offset_sigmas: float) -> 'Beliefs':
        """Case (-) is offset -1, case (+) is offset +1."""
        shift = offset_sigmas * params.sigma
        return cls(params.mu_star + shift, params.mu_mm + shift)

    def is_perfect(self, params: AuctionParams) -> bool:
        return self.mu_g_star == params.mu_star and self.mu_g_mm == params.mu_mm


class FeeFamily(Enum):
    ZERO = "zero"
    LINEAR = "linear"
    SQUARE = "square"


_FEE_POWER = {FeeFamily.ZERO: 0, FeeFamily.LINEAR: 1, FeeFamily.SQUARE: 2}


@dataclass(frozen=True)
class FeeSchedule:
    """Per-share fee xi(t) charged to an order arriving in step (t-1, t]."""

    family: FeeFamily = FeeFamily.ZERO
    a: float = 0.0

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, 'family', FeeFamily(self.family))
        if not (math.isfinite(self.a) and self.a >= 0):
            raise ValidationError("fee coefficient must be non-negative", field='a')

    @classmethod
    def zero(cls) -> 'FeeSchedule':
        return cls(FeeFamily.ZERO, 0.0)

    @classmethod
    def parse(cls, text: str) -> 'FeeSchedule':
        """Parse "family:a", e.g. "square:0.24"; a bare "zero" is accepted."""
        family, _, coefficient = text.strip().partition(':')
        try:
            fee_family = FeeFamily(family.lower())
            a = float(coefficient) if coefficient else 0.0
        except ValueError:
            raise ValidationError(f"Invalid fee spec: {text!r}", field='fee')
        if fee_family is FeeFamily.ZERO:
            a = 0.0
        return cls(fee_family, a)

    @property
    def is_zero(self) -> bool:
        return self.family is FeeFamily.ZERO or self.a == 0.0

    def eval(self, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        if self.family is FeeFamily.ZERO:
            return np.zeros_like(t, dtype=float) if isinstance(t, np.ndarray) else 0.0
        return self.a * t ** _FEE_POWER[self.family]

    def label(self) -> str:
        if self.family is FeeFamily.ZERO:
            return "zero"
        return f"{self.family.value}:{self.a:g}"

    def to_dict(self) -> Dict[str, Any]:
        return {'family': self.family.value, 'a': self.a}


@dataclass(frozen=True)
class ClosingRule:
    """Law of the closing time: a finite distribution over time-grid points."""

    support: Tuple[int, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'support', tuple(int(t) for t in self.support))
        object.__setattr__(self, 'probs', tuple(float(p) for p in self.probs))
        if not self.support or len(self.support) != len(self.probs):
            raise ValidationError("closing support and probs must be non-empty and aligned",
                                  field='closing')
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise ValidationError("closing support must be strictly increasing", field='closing')
        if any(p < 0 for p in self.probs):
            raise ValidationError("closing probabilities must be non-negative", field='closing')
        if abs(sum(self.probs) - 1.0) > PROB_TOLERANCE:
            raise ValidationError("closing probabilities must sum to 1", field='closing')

    @classmethod
    def deterministic(cls, close: int) -> 'ClosingRule':
        return cls((close,), (1.0,))

    @classmethod
    def bernoulli(cls, p: float, horizon: int) -> 'ClosingRule':
        """Close at T-1 with probability p, else at T."""
        if not 0.0 <= p <= 1.0:
            raise ValidationError("randomization p must lie in [0, 1]", field='p')
        if p == 0.0:
            return cls.deterministic(horizon)
        if p == 1.0:
            return cls.deterministic(horizon - 1)
        return cls((horizon - 1, horizon), (p, 1.0 - p))

    @classmethod
    def parse(cls, text: str, horizon: int) -> 'ClosingRule':
        """Parse "p=<x>" (Bernoulli on {T-1, T}) or "close=<t>"."""
        key, _, value = text.strip().partition('=')
        try:
            if key == 'p':
                return cls.bernoulli(float(value), horizon)
            if key == 'close':
                return cls.deterministic(int(value))
        except ValueError:
            pass
        raise ValidationError(f"Invalid randomization spec: {text!r}", field='closing')

    def validate_against(self, params: AuctionParams) -> None:
        if not set(self.support) <= set(params.time_grid):
            raise ValidationError("closing support must lie on the time grid", field='closing')

    @property
    def is_deterministic(self) -> bool:
        return len(self.support) == 1

    @property
    def bernoulli_p(self) -> Optional[float]:
        """p of a two-point rule on {T-1, T} (0 or 1 for degenerate rules), else None."""
        if self.is_deterministic:
            return None
        if len(self.support) == 2 and self.support[1] - self.support[0] == 1:
            return self.probs[0]
        return None

    def draw(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0, 1) to closing times by inverse CDF."""
        cumulative = np.cumsum(self.probs)
        cumulative[-1] = 1.0
        index = np.searchsorted(cumulative, u, side='right')
        return np.asarray(self.support, dtype=np.int64)[np.minimum(index, len(self.support) - 1)]

    def label(self) -> str:
        if self.is_deterministic:
            return f"close={self.support[0]}"
        p = self.bernoulli_p
        if p is not None:
            return f"p={p:g}"
        return ";".join(f"{t}:{p:g}" for t, p in zip(self.support, self.probs))

    def to_dict(self) -> Dict[str, Any]:
        return {'support': list(self.support), 'probs': list(self.probs)}


@dataclass(frozen=True)
class InformationSet:
    """Sufficient statistic (t, N_t, sum of observed prices) of the trader's filtration."""

    t: int
    n: int
    sum_prices: float

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("an information set holds at least the resting order", field='n')
        if not math.isfinite(self.sum_prices):
            raise ValidationError("sum_prices must be finite", field='sum_prices')

    @property
    def mean_price(self) -> float:
        return self.sum_prices / self.n


@dataclass(frozen=True)
class PathSample:
    """One simulated auction.

    mm_prices[0] is the resting order present at time 0; mm_prices[i] for i >= 1
    belongs to the arrival at mm_arrival_times[i - 1].
    """

    mm_arrival_times: Tuple[float, ...]
    mm_prices: Tuple[float, ...]
    efficient_price: float
    closing_time: int
    trader_arrival: int
    trader_price: float
    clearing_price: float
    executed: bool
    trader_mu: float = float('nan')
    no_trader_price: float = float('nan')
    payoff: float = 0.0

    def prices_until(self, close: float) -> Tuple[float, ...]:
        kept = [self.mm_prices[0]]
        kept.extend(p for s, p in zip(self.mm_arrival_times, self.mm_prices[1:]) if s <= close)
        return tuple(kept)


# JSON interchange -----------------------------------------------------------

_PARAM_FIELDS = ('horizon', 'lambda', 'K', 'sigma', 'mu_star', 'mu_mm',
                 'mu_bound_width', 'time_grid', 'gamma')


def params_to_dict(params: AuctionParams) -> Dict[str, Any]:
    return {
        'horizon': params.horizon,
        'lambda': params.lam,
        'K': params.K,
        'sigma': params.sigma,
        'mu_star': params.mu_star,
        'mu_mm': params.mu_mm,
        'mu_bound_width': params.mu_bound_width,
        'time_grid': list(params.time_grid),
        'gamma': params.gamma,
    }


def params_from_dict(data: Dict[str, Any]) -> AuctionParams:
    unknown = set(data) - set(_PARAM_FIELDS)
    if unknown:
        name = sorted(unknown)[0]
        raise ValidationError(f"Unknown parameter field: {name}", field=name)
    missing = [k for k in ('horizon', 'lambda', 'K', 'sigma', 'mu_star', 'mu_mm') if k not in data]
    if missing:
        raise ValidationError(f"Missing parameter field: {missing[0]}", field=missing[0])
    try:
        params = AuctionParams(
            horizon=int(data['horizon']),
            lam=float(data['lambda']),
            K=float(data['K']),
            sigma=float(data['sigma']),
            mu_star=float(data['mu_star']),
            mu_mm=float(data['mu_mm']),
            mu_bound_width=float(data.get('mu_bound_width', 4.0)),
            time_grid=tuple(int(t) for t in data.get('time_grid') or ()),
            gamma=float(data.get('gamma', 0.0)),
        )
    except (TypeError, ValueError) as e:
        raise ValidationError(f"Invalid parameter document: {e}")
    validate(params)
    return params


def load_params(path: str) -> AuctionParams:
    with open(path, 'r', encoding='utf-8') as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"Parameter document is not valid JSON: {e}")
    logger.debug("Loaded parameters from %s", path)
    return params_from_dict(data)


def dump_params(params: AuctionParams, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(params_to_dict(params), fh, indent=2, sort_keys=True)
        fh.write('\n')


# Calibrated constants for the two stocks (Oct-2 to Dec-29 2023 daily bars).
PRESETS: Dict[str, AuctionParams] = {
    'apple': AuctionParams(horizon=10, lam=1.0, K=10.0, sigma=1.76,
                           mu_star=184.39, mu_mm=184.39, gamma=0.0039),
    'alphabet': AuctionParams(horizon=10, lam=1.0, K=10.0, sigma=2.11,
                              mu_star=134.24, mu_mm=134.24, gamma=0.0065),
}


def preset(name: str) -> AuctionParams:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ValidationError(f"Unknown stock preset: {name!r}", field='stock')
