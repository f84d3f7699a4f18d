"""
Stochastic machinery of the auction.

* fee-distorted arrival measures and the Poisson mixture over future arrivals;
* counter-based random streams: every path owns a fixed slice of a Philox
  counter space per stream, so a path's draws depend only on
  (seed, path index, stream) and never on batching or worker count;
* path realisation and settlement, vectorised over blocks of paths;
* two estimators of the trader's conditional objective given an
  information set: Gauss-Hermite quadrature over the mixture representation
  and plain Monte Carlo.
"""

import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Any, Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import special, stats

from .clearing import (
    ClearingOutcome, clear, clear_arrays, clear_no_trader, payoff_arrays, trader_payoff,
)
from .exceptions import ValidationError
from .model import (
    AuctionParams, Beliefs, ClosingRule, FeeSchedule, InformationSet, PathSample,
)

logger = logging.getLogger(__name__)

# (t, N_t array, sum-of-prices array) -> submitted-price means
Policy = Callable[[int, np.ndarray, np.ndarray], np.ndarray]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_HALF_ULP = 2.0 ** -54
_ROW_CHUNK = 32


class Method(Enum):
    MONTE_CARLO = "monte_carlo"
    QUADRATURE = "quadrature"

    @classmethod
    def parse(cls, text: str) -> 'Method':
        aliases = {'mc': cls.MONTE_CARLO, 'quad': cls.QUADRATURE}
        key = text.strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"Unknown estimator method: {text!r}", field='method')


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Estimator settings.

    Args:
        method: estimator used for the trader's conditional objective
        paths: Monte Carlo paths (outer simulations and MC conditional values)
        nodes: Gauss-Hermite nodes for the future-price dimension
        poisson_tail_eps: neglected mass of the future-arrival count
        seed: root seed of every random stream
        workers: process count for blocks and table cells; never changes results
        block_size: paths per block; part of the reduction order
    """

    method: Method = Method.QUADRATURE
    paths: int = 200_000
    nodes: int = 48
    poisson_tail_eps: float = 1e-10
    seed: int = 0
    workers: int = 1
    block_size: int = 8192

    def __post_init__(self):
        if isinstance(self.method, str):
            object.__setattr__(self, 'method', Method.parse(self.method))
        if self.paths < 1:
            raise ValidationError("paths must be at least 1", field='paths')
        if self.nodes < 2:
            raise ValidationError("nodes must be at least 2", field='nodes')
        if not 0.0 < self.poisson_tail_eps < 1.0:
            raise ValidationError("poisson_tail_eps must lie in (0, 1)", field='poisson_tail_eps')
        if not 0 <= self.seed < 2 ** 64:
            raise ValidationError("seed must be a non-negative 64-bit integer", field='seed')
        if self.workers < 1:
            raise ValidationError("workers must be at least 1", field='workers')
        if self.block_size < 1:
            raise ValidationError("block_size must be at least 1", field='block_size')

    @classmethod
    def from_env(cls, **overrides: Any) -> 'EstimatorConfig':
        """Defaults, then AUCTIONLAB_* environment variables, then explicit overrides."""
        env = {
            'seed': ('AUCTIONLAB_SEED', int),
            'paths': ('AUCTIONLAB_PATHS', int),
            'method': ('AUCTIONLAB_METHOD', Method.parse),
            'workers': ('AUCTIONLAB_THREADS', int),
        }
        values: Dict[str, Any] = {}
        for name, (variable, cast) in env.items():
            raw = os.getenv(variable)
            if raw:
                try:
                    values[name] = cast(raw)
                except ValueError:
                    raise ValidationError(f"Invalid {variable}: {raw!r}", field=name)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def replace(self, **changes: Any) -> 'EstimatorConfig':
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data['method'] = self.method.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EstimatorConfig':
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            name = sorted(unknown)[0]
            raise ValidationError(f"Unknown estimator field: {name}", field=name)
        return cls(**data)


class Estimate(NamedTuple):
    value: float
    stderr: float


@dataclass(frozen=True)
class Moments:
    """Count, mean and centred second moment of one scalar metric."""

    count: int
    mean: float
    m2: float

    @classmethod
    def of(cls, samples: np.ndarray) -> 'Moments':
        x = np.ascontiguousarray(samples, dtype=float)
        if x.size == 0:
            return cls(0, 0.0, 0.0)
        mean = float(x.mean())
        return cls(x.size, mean, float(np.square(x - mean).sum()))

    def merge(self, other: 'Moments') -> 'Moments':
        if self.count == 0:
            return other
        if other.count == 0:
            return self
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return Moments(count, mean, m2)

    @property
    def stderr(self) -> float:
        if self.count < 2:
            return float('nan')
        return math.sqrt(self.m2 / (self.count - 1) / self.count)

    @property
    def estimate(self) -> Estimate:
        return Estimate(self.mean, self.stderr)


def merge_moments(parts: Iterable[Dict[Any, Moments]]) -> Dict[Any, Moments]:
    """Merge per-block metric moments in block order."""
    merged: Dict[Any, Moments] = {}
    for part in parts:
        for key, moments in part.items():
            merged[key] = merged[key].merge(moments) if key in merged else moments
    return merged


def parallel_map(fn: Callable[..., Any], tasks: Sequence[Tuple[Any, ...]], workers: int) -> List[Any]:
    """Apply ``fn`` to every argument tuple; results come back in task order."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, *task) for task in tasks]
        return [future.result() for future in futures]


def map_blocks(fn: Callable[..., Any], cfg: EstimatorConfig, *args: Any) -> List[Any]:
    """Run ``fn(start, count, *args)`` over fixed-size path blocks covering cfg.paths."""
    tasks = [
        (start, min(cfg.block_size, cfg.paths - start)) + args
        for start in range(0, cfg.paths, cfg.block_size)
    ]
    return parallel_map(fn, tasks, cfg.workers)


# Random streams ------------------------------------------------------------

class Stream(IntEnum):
    ARRIVALS = 0
    STEP_PRICES = 1
    EFFICIENT = 2
    CLOSING = 3
    TRADER = 4
    RESTING = 5
    DETAIL = 6
    CONDITIONAL = 7


def stream_uniforms(seed: int, stream: Stream, start: int, count: int, width: int) -> np.ndarray:
    """
    Uniforms in (0, 1) for paths start..start+count-1, ``width`` per path.

    Path i reads Philox counters [i*L/4, (i+1)*L/4) of the stream's key, where L
    is ``width`` rounded up to a multiple of four. One double consumes one
    64-bit output, so the rows are the same whatever ``start`` a block uses.
    """
    lanes = -(-width // 4) * 4
    key = np.random.SeedSequence(seed, spawn_key=(int(stream),)).generate_state(2, dtype=np.uint64)
    bitgen = np.random.Philox(counter=int(start) * (lanes // 4), key=key)
    draws = np.random.Generator(bitgen).random((count, lanes))
    return draws[:, :width] + _HALF_ULP


def stream_normals(seed: int, stream: Stream, start: int, count: int, width: int) -> np.ndarray:
    return special.ndtri(stream_uniforms(seed, stream, start, count, width))


@dataclass(frozen=True)
class RawDraws:
    """Measure-free draws of a block of paths; means and fees are applied later."""

    u_arrivals: np.ndarray
    z_steps: np.ndarray
    z_star: np.ndarray
    z_trader: np.ndarray
    z_rest: np.ndarray
    u_close: np.ndarray

    @classmethod
    def draw(cls, seed: int, horizon: int, start: int, count: int) -> 'RawDraws':
        return cls(
            u_arrivals=stream_uniforms(seed, Stream.ARRIVALS, start, count, horizon),
            z_steps=stream_normals(seed, Stream.STEP_PRICES, start, count, horizon),
            z_star=stream_normals(seed, Stream.EFFICIENT, start, count, 1)[:, 0],
            z_trader=stream_normals(seed, Stream.TRADER, start, count, 1)[:, 0],
            z_rest=stream_normals(seed, Stream.RESTING, start, count, 1)[:, 0],
            u_close=stream_uniforms(seed, Stream.CLOSING, start, count, 1)[:, 0],
        )


# Arrival measures ----------------------------------------------------------

@dataclass(frozen=True)
class ArrivalMeasure:
    """Expected market-maker arrivals per step (t-1, t], t = 1..T."""

    per_step_mean: Tuple[float, ...]

    def cumulative(self, from_t: int, to_t: int) -> float:
        """Expected arrivals in (from_t, to_t]."""
        if from_t > to_t:
            raise ValueError("from_t must not exceed to_t")
        return math.fsum(self.per_step_mean[from_t:to_t])


def arrival_measure(params: AuctionParams, fee: FeeSchedule) -> ArrivalMeasure:
    steps = np.arange(1, params.horizon + 1, dtype=float)
    means = params.lam * np.exp(-np.asarray(fee.eval(steps), dtype=float))
    return ArrivalMeasure(tuple(float(m) for m in means))


def _poisson_pmf(m: np.ndarray, lam: float) -> np.ndarray:
    if lam <= 0.0:
        return (np.asarray(m) == 0).astype(float)
    return stats.poisson.pmf(m, lam)


def poisson_count_pmf(measure: ArrivalMeasure, from_t: int, to_t: int, m: int) -> float:
    """Probability of exactly m arrivals in (from_t, to_t]."""
    if m < 0:
        raise ValueError("count must be non-negative")
    return float(_poisson_pmf(np.asarray(m), measure.cumulative(from_t, to_t)))


def poisson_truncation(lam: float, eps: float) -> int:
    """Smallest M with P(count <= M) >= 1 - eps."""
    if lam <= 0.0:
        return 0
    return int(stats.poisson.ppf(1.0 - eps, lam))


def mixture_weights(
    t: int, measure: ArrivalMeasure, closing: ClosingRule, eps: float
) -> np.ndarray:
    """
    Weights w[m] of m further arrivals before the close, marginalised over the
    closing law. Closing times before t carry no weight, so the weights sum to
    P(close >= t) rather than one.
    """
    parts = []
    for close, prob in zip(closing.support, closing.probs):
        if close >= t and prob > 0.0:
            parts.append((prob, measure.cumulative(t, close)))
    if not parts:
        return np.zeros(0)
    top = max(poisson_truncation(lam, eps) for _, lam in parts)
    counts = np.arange(top + 1)
    weights = np.zeros(top + 1)
    for prob, lam in parts:
        weights += prob * _poisson_pmf(counts, lam)
    logger.debug("Poisson mixture at t=%d truncated at M=%d", t, top)
    return weights


def poisson_counts(u: np.ndarray, means: Sequence[float]) -> np.ndarray:
    """Inverse-CDF Poisson counts; one mean per column."""
    means = np.asarray(means, dtype=float)
    positive = means > 0.0
    counts = stats.poisson.ppf(u, np.where(positive, means, 1.0))
    return np.where(positive, counts, 0.0).astype(np.int64)


# Path realisation ----------------------------------------------------------

@dataclass(frozen=True)
class PathBlock:
    """
    A block of paths realised under one pair of means and one fee.

    Column t of the cumulative arrays describes the pool at time t; column 0 is
    the resting order alone.
    """

    counts: np.ndarray
    step_sums: np.ndarray
    cum_counts: np.ndarray
    cum_sums: np.ndarray
    cum_fees: np.ndarray
    efficient_price: np.ndarray
    z_trader: np.ndarray
    closing: np.ndarray

    @property
    def size(self) -> int:
        return self.counts.shape[0]


def realize(
    draws: RawDraws,
    params: AuctionParams,
    means: Tuple[float, float],
    measure: ArrivalMeasure,
    fee: FeeSchedule,
    closing: ClosingRule,
) -> PathBlock:
    """Apply (mean of P*, mean of market-maker prices) and the arrival measure to raw draws."""
    mean_star, mean_mm = means
    sigma = params.sigma
    horizon = params.horizon
    counts = poisson_counts(draws.u_arrivals, measure.per_step_mean)
    step_sums = counts * mean_mm + sigma * np.sqrt(counts) * draws.z_steps
    rest = mean_mm + sigma * draws.z_rest
    size = counts.shape[0]

    cum_counts = np.empty((size, horizon + 1), dtype=np.int64)
    cum_counts[:, 0] = 1
    cum_counts[:, 1:] = 1 + np.cumsum(counts, axis=1)
    cum_sums = np.empty((size, horizon + 1))
    cum_sums[:, 0] = rest
    cum_sums[:, 1:] = rest[:, None] + np.cumsum(step_sums, axis=1)
    fee_steps = np.asarray(fee.eval(np.arange(1, horizon + 1, dtype=float)), dtype=float)
    cum_fees = np.zeros((size, horizon + 1))
    cum_fees[:, 1:] = np.cumsum(counts * fee_steps, axis=1)

    return PathBlock(
        counts=counts,
        step_sums=step_sums,
        cum_counts=cum_counts,
        cum_sums=cum_sums,
        cum_fees=cum_fees,
        efficient_price=mean_star + sigma * draws.z_star,
        z_trader=draws.z_trader,
        closing=closing.draw(draws.u_close),
    )


@dataclass(frozen=True)
class Settlement:
    """Per-path outcome of one block for one trader arrival time."""

    mu_hat: np.ndarray
    trader_price: np.ndarray
    present: np.ndarray
    price: np.ndarray
    included: np.ndarray
    no_trader_price: np.ndarray
    efficient_price: np.ndarray
    payoff: np.ndarray
    volume: np.ndarray
    avg_fee_all: np.ndarray
    avg_fee_strategic: np.ndarray


def settle(
    block: PathBlock,
    params: AuctionParams,
    fee: FeeSchedule,
    tau: Optional[int],
    policy: Optional[Policy],
) -> Settlement:
    """Clear every path of the block with the trader arriving at ``tau`` (None: no trader)."""
    rows = np.arange(block.size)
    close = block.closing
    n_close = block.cum_counts[rows, close]
    sum_close = block.cum_sums[rows, close]
    no_trader = sum_close / n_close
    avg_fee_all = block.cum_fees[rows, close] / n_close

    if tau is None or policy is None:
        nothing = np.zeros(block.size)
        absent = np.zeros(block.size, dtype=bool)
        return Settlement(
            mu_hat=np.full(block.size, np.nan),
            trader_price=np.full(block.size, np.nan),
            present=absent,
            price=no_trader,
            included=absent,
            no_trader_price=no_trader,
            efficient_price=block.efficient_price,
            payoff=nothing,
            volume=nothing,
            avg_fee_all=avg_fee_all,
            avg_fee_strategic=nothing,
        )

    mu_hat = np.asarray(policy(tau, block.cum_counts[:, tau], block.cum_sums[:, tau]), dtype=float)
    trader_price = mu_hat + params.sigma * block.z_trader
    present = tau <= close
    price, included = clear_arrays(sum_close, n_close, trader_price, present)
    fee_at_arrival = float(fee.eval(tau))
    payoff = payoff_arrays(price, included, trader_price, block.efficient_price,
                           params.K, fee_at_arrival)
    executed = included & (trader_price <= price)
    volume = np.where(executed, params.K * (price - trader_price), 0.0)
    return Settlement(
        mu_hat=mu_hat,
        trader_price=trader_price,
        present=present,
        price=price,
        included=included,
        no_trader_price=no_trader,
        efficient_price=block.efficient_price,
        payoff=payoff,
        volume=volume,
        avg_fee_all=avg_fee_all,
        avg_fee_strategic=np.where(present, fee_at_arrival, 0.0),
    )


def sample_path(
    params: AuctionParams,
    means: Tuple[float, float],
    fee: FeeSchedule,
    closing: ClosingRule,
    arrival: int,
    policy: Policy,
    seed: int,
    path_index: int,
) -> PathSample:
    """
    Realise one auction in full detail.

    Counts, step sums, P*, the closing time and the trader's noise come from the
    same counter slices the block estimators use for ``path_index``. Arrival
    instants and the individual prices inside each step are drawn from a
    per-path detail stream, conditionally on the step's count and price sum.
    """
    if arrival not in params.time_grid:
        raise ValidationError(f"arrival {arrival} is not on the time grid", field='arrival')
    draws = RawDraws.draw(seed, params.horizon, path_index, 1)
    block = realize(draws, params, means, arrival_measure(params, fee), fee, closing)
    detail = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(int(Stream.DETAIL), int(path_index))))

    times: List[float] = []
    prices: List[float] = [float(block.cum_sums[0, 0])]
    for step in range(1, params.horizon + 1):
        k = int(block.counts[0, step - 1])
        if k == 0:
            continue
        offsets = np.sort(detail.random(k))[::-1]
        times.extend(float(step - u) for u in offsets)
        z = detail.standard_normal(k)
        step_prices = block.step_sums[0, step - 1] / k + params.sigma * (z - z.mean())
        prices.extend(float(p) for p in step_prices)

    close = int(block.closing[0])
    info = InformationSet(arrival, int(block.cum_counts[0, arrival]), float(block.cum_sums[0, arrival]))
    mu = float(np.asarray(policy(arrival, np.array([info.n]), np.array([info.sum_prices])))[0])
    trader_price = mu + params.sigma * float(block.z_trader[0])
    efficient_price = float(block.efficient_price[0])

    sample = PathSample(tuple(times), tuple(prices), efficient_price, close, arrival,
                        trader_price, float('nan'), False)
    pool = sample.prices_until(close)
    no_trader_price = clear_no_trader(pool)
    if arrival <= close:
        outcome = clear(pool, trader_price)
    else:
        outcome = ClearingOutcome(no_trader_price, False)
    payoff = trader_payoff(outcome, trader_price, efficient_price, params.K, float(fee.eval(arrival)))
    return dataclasses.replace(
        sample,
        clearing_price=outcome.price,
        executed=outcome.trader_included and trader_price <= outcome.price,
        trader_mu=mu,
        no_trader_price=no_trader_price,
        payoff=payoff,
    )


# Conditional objective -----------------------------------------------------

def _normal_pdf(z: np.ndarray) -> np.ndarray:
    return np.exp(-0.5 * z * z) * _INV_SQRT_2PI


def pool_payoff(
    total: np.ndarray,
    pool_size: int,
    mu: np.ndarray,
    reference: float,
    sigma: float,
    K: float,
    include_indicator: bool = True,
) -> np.ndarray:
    """
    E_P[1{P < S/N} K(P_cl - P)(P_cl - c)] for P ~ N(mu, sigma^2), where the close
    pool holds N market-maker orders summing to S and P_cl = (S + P)/(N + 1).

    Writing z = (S/N - mu)/sigma and b = S + mu - c(N + 1), truncated-normal
    moments give K N sigma / (N+1)^2 * [(z b - sigma) Phi(z) + b phi(z)].
    Without the indicator the trader always executes and the value is
    K/(N+1)^2 * [(S - N mu) b - N sigma^2].
    """
    n = float(pool_size)
    b = total + mu - reference * (n + 1.0)
    scale = K / (n + 1.0) ** 2
    if not include_indicator:
        return scale * ((total - n * mu) * b - n * sigma * sigma)
    z = (total / n - mu) / sigma
    return scale * n * sigma * ((z * b - sigma) * special.ndtr(z) + b * _normal_pdf(z))


def _reference_price(
    t: int, beliefs: Beliefs, fee: FeeSchedule, p_star: Optional[float]
) -> float:
    """Expected P* (or the known P*) plus the fee paid at t."""
    centre = beliefs.mu_g_star if p_star is None else p_star
    return centre + float(fee.eval(t))


def _quadrature_grid(
    t: int,
    n: int,
    sums: np.ndarray,
    mus: np.ndarray,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    p_star: Optional[float],
    include_indicator: bool,
) -> np.ndarray:
    weights = mixture_weights(t, arrival_measure(params, fee), closing, cfg.poisson_tail_eps)
    reference = _reference_price(t, beliefs, fee, p_star)
    x, w = hermgauss(cfg.nodes)
    unit_nodes = math.sqrt(2.0) * x
    node_weights = w / math.sqrt(math.pi)
    sigma = params.sigma

    result = np.zeros((sums.size, mus.size))
    mu_axis = mus[None, :, None]
    for lo in range(0, sums.size, _ROW_CHUNK):
        rows = sums[lo:lo + _ROW_CHUNK]
        block = np.zeros((rows.size, mus.size))
        for m, weight in enumerate(weights):
            if weight == 0.0:
                continue
            if m == 0:
                value = pool_payoff(rows[:, None], n, mus[None, :], reference,
                                    sigma, params.K, include_indicator)
            else:
                future = m * beliefs.mu_g_mm + sigma * math.sqrt(m) * unit_nodes
                totals = rows[:, None, None] + future[None, None, :]
                value = pool_payoff(totals, n + m, mu_axis, reference,
                                    sigma, params.K, include_indicator) @ node_weights
            block += weight * value
        result[lo:lo + rows.size] = block
    return result


def _monte_carlo_grid(
    t: int,
    n: int,
    sums: np.ndarray,
    mus: np.ndarray,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    p_star: Optional[float],
    include_indicator: bool,
) -> Tuple[np.ndarray, np.ndarray]:
    measure = arrival_measure(params, fee)
    sigma = params.sigma
    u = stream_uniforms(cfg.seed, Stream.CONDITIONAL, 0, cfg.paths, 5)
    close = closing.draw(u[:, 0])
    present = close >= t
    horizon_lam = {c: measure.cumulative(t, c) for c in closing.support if c >= t}
    lam = np.array([horizon_lam.get(int(c), 0.0) for c in close])
    future_count = _poisson_per_path(u[:, 1], lam)
    future_sum = future_count * beliefs.mu_g_mm + sigma * np.sqrt(future_count) * special.ndtri(u[:, 2])
    if p_star is None:
        efficient = beliefs.mu_g_star + sigma * special.ndtri(u[:, 3])
    else:
        efficient = np.full(cfg.paths, float(p_star))
    z_trader = special.ndtri(u[:, 4])
    fee_at_arrival = float(fee.eval(t))
    pool = (n + future_count).astype(float)

    means = np.zeros((sums.size, mus.size))
    errors = np.zeros((sums.size, mus.size))
    for i, s in enumerate(sums):
        totals = s + future_sum
        for j, mu in enumerate(mus):
            trader_price = mu + sigma * z_trader
            if include_indicator:
                price, included = clear_arrays(totals, pool, trader_price, present)
                payoff = payoff_arrays(price, included, trader_price, efficient,
                                       params.K, fee_at_arrival)
            else:
                price = (totals + trader_price) / (pool + 1.0)
                payoff = np.where(present, params.K * (price - trader_price)
                                  * (price - efficient - fee_at_arrival), 0.0)
            means[i, j], errors[i, j] = Moments.of(payoff).estimate
    return means, errors


def _poisson_per_path(u: np.ndarray, lam: np.ndarray) -> np.ndarray:
    positive = lam > 0.0
    counts = stats.poisson.ppf(u, np.where(positive, lam, 1.0))
    return np.where(positive, counts, 0.0).astype(np.int64)


def conditional_value_grid(
    t: int,
    n: int,
    sums: Sequence[float],
    mus: Sequence[float],
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    p_star: Optional[float] = None,
    include_indicator: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trader's conditional objective for every (sum of observed prices, mu) pair
    at decision time t with n observed orders.

    Returns (values, standard errors), both shaped (len(sums), len(mus));
    quadrature errors are reported as zero.
    """
    if n < 1:
        raise ValidationError("an information set holds at least the resting order", field='n')
    sums = np.atleast_1d(np.asarray(sums, dtype=float))
    mus = np.atleast_1d(np.asarray(mus, dtype=float))
    if cfg.method is Method.QUADRATURE:
        values = _quadrature_grid(t, n, sums, mus, params, beliefs, fee, closing, cfg,
                                  p_star, include_indicator)
        return values, np.zeros_like(values)
    return _monte_carlo_grid(t, n, sums, mus, params, beliefs, fee, closing, cfg,
                             p_star, include_indicator)


def conditional_value_estimate(
    info: InformationSet,
    mu: float,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    p_star: Optional[float] = None,
    include_indicator: bool = True,
) -> Estimate:
    values, errors = conditional_value_grid(info.t, info.n, [info.sum_prices], [mu], params,
                                            beliefs, fee, closing, cfg, p_star, include_indicator)
    return Estimate(float(values[0, 0]), float(errors[0, 0]))


def conditional_value(
    info: InformationSet,
    mu: float,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    p_star: Optional[float] = None,
    include_indicator: bool = True,
) -> float:
    """
    E_g[1{p_mu <= P_cl} K(P_cl - p_mu)(P_cl - P* - xi(t)) | F_t], marginalised
    over the closing law (closes before t contribute zero).
    """
    return conditional_value_estimate(info, mu, params, beliefs, fee, closing, cfg,
                                      p_star, include_indicator).value
