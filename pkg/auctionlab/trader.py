"""
Best response of the strategic seller.

The inner problem picks the mean of the submitted price for every information
set (t, N_t, sum of observed prices). ``MuTable`` tabulates that choice on a
grid so simulated paths can look it up; the outer problem scans arrival times
with common random numbers across them.
"""

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .engine import (
    EstimatorConfig, Estimate, Method, Moments, RawDraws, arrival_measure,
    conditional_value_grid, map_blocks, merge_moments, parallel_map, realize, settle,
)
from .exceptions import CacheError, ValidationError
from .model import (
    AuctionParams, Beliefs, ClosingRule, FeeSchedule, InformationSet, params_to_dict,
)

logger = logging.getLogger(__name__)

CACHE_FORMAT = 1


@dataclass(frozen=True)
class MuGrid:
    """
    Discretisation of the inner problem.

    Args:
        points: candidate means on the search interval (161 gives a step of sigma/20)
        sum_step: spacing of the tabulated sums, in sigmas
        sum_width: half-width of the tabulated sums around n*mean, in sigma*sqrt(n)
        count_width: tabulated counts reach 1 + L + count_width*sqrt(L), L the expected arrivals
    """

    points: int = 161
    sum_step: float = 0.25
    sum_width: float = 6.0
    count_width: float = 6.0

    def __post_init__(self):
        if self.points < 2:
            raise ValidationError("the mean grid needs at least two points", field='points')
        if self.sum_step <= 0 or self.sum_width <= 0 or self.count_width < 0:
            raise ValidationError("grid widths must be positive", field='grid')

    def candidates(self, params: AuctionParams, beliefs: Beliefs,
                   bound_width: Optional[float] = None) -> np.ndarray:
        half = (params.mu_bound_width if bound_width is None else bound_width) * params.sigma
        return np.linspace(beliefs.mu_g_star - half, beliefs.mu_g_star + half, self.points)

    def to_dict(self) -> Dict[str, Any]:
        return {'points': self.points, 'sum_step': self.sum_step,
                'sum_width': self.sum_width, 'count_width': self.count_width}


DEFAULT_GRID = MuGrid()


def _argmax_lowest(values: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Row-wise maximiser; np.argmax keeps the first, i.e. smallest, candidate on ties."""
    return candidates[np.argmax(values, axis=-1)]


def optimize_mu(
    info: InformationSet,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    grid: MuGrid = DEFAULT_GRID,
    p_star: Optional[float] = None,
    include_indicator: bool = True,
    bound_width: Optional[float] = None,
) -> float:
    """
    Mean of the submitted price maximising the conditional objective.

    ``p_star`` switches to full-information conditioning; ``include_indicator``
    False drops the sell-only execution condition. ``bound_width`` overrides
    the half-width of the search interval (in sigmas).
    """
    candidates = grid.candidates(params, beliefs, bound_width)
    values, _ = conditional_value_grid(info.t, info.n, [info.sum_prices], candidates, params,
                                       beliefs, fee, closing, cfg, p_star, include_indicator)
    return float(_argmax_lowest(values[0], candidates))


def closed_form_mu_bar(n, sum_prices, p_star):
    """
    Unconstrained full-information optimum (n(n+1)p* - (n-1)S) / (2n).

    Accepts scalars or numpy arrays.
    """
    if np.any(np.asarray(n) < 1):
        raise ValidationError("n must be at least 1", field='n')
    return (n * (n + 1) * p_star - (n - 1) * sum_prices) / (2 * n)


# Tabulated policy ----------------------------------------------------------

def count_limit(t: int, params: AuctionParams, fee: FeeSchedule, grid: MuGrid) -> int:
    """Largest tabulated N_t at decision time t."""
    expected = arrival_measure(params, fee).cumulative(0, t)
    return int(math.ceil(1.0 + expected + grid.count_width * math.sqrt(expected)))


def _sum_axis(n: int, params: AuctionParams, beliefs: Beliefs, grid: MuGrid) -> np.ndarray:
    low_mean = min(beliefs.mu_g_mm, params.mu_mm)
    high_mean = max(beliefs.mu_g_mm, params.mu_mm)
    spread = grid.sum_width * params.sigma * math.sqrt(n)
    lo = n * low_mean - spread
    hi = n * high_mean + spread
    step = grid.sum_step * params.sigma
    return lo + step * np.arange(int(math.floor((hi - lo) / step)) + 1)


def _tabulate_cell(
    t: int,
    n: int,
    sums: np.ndarray,
    candidates: np.ndarray,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
) -> np.ndarray:
    values, _ = conditional_value_grid(t, n, sums, candidates, params, beliefs, fee, closing, cfg)
    logger.debug("Tabulated t=%d n=%d over %d sums", t, n, sums.size)
    return _argmax_lowest(values, candidates)


def table_key(
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    grid: MuGrid,
    times: Sequence[int],
) -> str:
    """SHA-256 of the canonical JSON of everything a table depends on."""
    estimator: Dict[str, Any] = {'method': cfg.method.value}
    if cfg.method is Method.QUADRATURE:
        estimator.update(nodes=cfg.nodes, poisson_tail_eps=cfg.poisson_tail_eps)
    else:
        estimator.update(paths=cfg.paths, seed=cfg.seed)
    document = {
        'format': CACHE_FORMAT,
        'params': params_to_dict(params),
        'beliefs': [beliefs.mu_g_star, beliefs.mu_g_mm],
        'fee': fee.to_dict() if not fee.is_zero else FeeSchedule.zero().to_dict(),
        'closing': closing.to_dict(),
        'estimator': estimator,
        'grid': grid.to_dict(),
        'times': list(times),
    }
    canonical = json.dumps(document, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


class MuTable:
    """
    Tabulated inner optimum, read-only once built.

    Lookups snap the sum of observed prices to the nearest tabulated sum; cells
    outside the table are optimised directly.
    """

    def __init__(
        self,
        params: AuctionParams,
        beliefs: Beliefs,
        fee: FeeSchedule,
        closing: ClosingRule,
        cfg: EstimatorConfig,
        grid: MuGrid,
        cells: Dict[Tuple[int, int], Tuple[float, np.ndarray]],
        key: str,
    ):
        self.params = params
        self.beliefs = beliefs
        self.fee = fee
        self.closing = closing
        self.cfg = cfg
        self.grid = grid
        self.key = key
        self._cells = cells
        self._step = grid.sum_step * params.sigma
        candidates = grid.candidates(params, beliefs)
        self.bound_lo = float(candidates[0])
        self.bound_hi = float(candidates[-1])

    @property
    def times(self) -> Tuple[int, ...]:
        return tuple(sorted({t for t, _ in self._cells}))

    def count_limit(self, t: int) -> int:
        return max((n for s, n in self._cells if s == t), default=0)

    def cell(self, t: int, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """(tabulated sums, optimal means) of one (t, n) row."""
        lo, values = self._cells[(t, n)]
        return lo + self._step * np.arange(values.size), values

    @classmethod
    def build(
        cls,
        params: AuctionParams,
        beliefs: Beliefs,
        fee: FeeSchedule,
        closing: ClosingRule,
        cfg: EstimatorConfig,
        grid: MuGrid = DEFAULT_GRID,
        times: Optional[Iterable[int]] = None,
        cache_dir: Optional[str] = None,
    ) -> 'MuTable':
        times = tuple(params.time_grid if times is None else sorted(set(times)))
        key = table_key(params, beliefs, fee, closing, cfg, grid, times)
        cache_dir = cache_dir or os.getenv('AUCTIONLAB_CACHE_DIR')
        path = os.path.join(cache_dir, f"mutable-{key[:32]}.npz") if cache_dir else None
        if path and os.path.exists(path):
            logger.info("Policy cache hit: %s", path)
            return cls.load(path, params, beliefs, fee, closing, cfg, grid)

        candidates = grid.candidates(params, beliefs)
        tasks = []
        for t in times:
            for n in range(1, count_limit(t, params, fee, grid) + 1):
                tasks.append((t, n, _sum_axis(n, params, beliefs, grid), candidates,
                              params, beliefs, fee, closing, cfg))
        logger.info("Building policy table: %d cells for fee %s, closing %s",
                    len(tasks), fee.label(), closing.label())
        results = parallel_map(_tabulate_cell, tasks, cfg.workers)
        cells = {(task[0], task[1]): (float(task[2][0]), values)
                 for task, values in zip(tasks, results)}
        table = cls(params, beliefs, fee, closing, cfg, grid, cells, key)
        if path:
            logger.info("Policy cache miss, writing %s", path)
            table.save(path)
        return table

    def lookup(self, t: int, n: np.ndarray, sums: np.ndarray) -> np.ndarray:
        n = np.atleast_1d(np.asarray(n))
        sums = np.atleast_1d(np.asarray(sums, dtype=float))
        result = np.empty(sums.shape)
        fallback = 0
        for count in np.unique(n):
            mask = n == count
            picked = sums[mask]
            chosen = np.full(picked.shape, np.nan)
            cell = self._cells.get((t, int(count)))
            if cell is not None:
                lo, values = cell
                index = np.rint((picked - lo) / self._step).astype(np.int64)
                inside = (index >= 0) & (index < values.size)
                chosen[inside] = values[index[inside]]
            for i in np.flatnonzero(np.isnan(chosen)):
                chosen[i] = optimize_mu(InformationSet(t, int(count), float(picked[i])),
                                        self.params, self.beliefs, self.fee, self.closing,
                                        self.cfg, self.grid)
                fallback += 1
            result[mask] = chosen
        if fallback:
            logger.debug("%d information sets at t=%d optimised off-table", fallback, t)
        return result

    __call__ = lookup

    def save(self, path: str) -> None:
        keys = sorted(self._cells)
        lengths = [self._cells[k][1].size for k in keys]
        try:
            os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
            with open(path, 'wb') as fh:
                np.savez_compressed(
                    fh,
                    key=np.array(self.key),
                    cell_t=np.array([k[0] for k in keys], dtype=np.int64),
                    cell_n=np.array([k[1] for k in keys], dtype=np.int64),
                    cell_lo=np.array([self._cells[k][0] for k in keys]),
                    cell_len=np.array(lengths, dtype=np.int64),
                    values=np.concatenate([self._cells[k][1] for k in keys]) if keys else np.zeros(0),
                )
        except OSError as e:
            raise CacheError(f"Cannot write policy cache: {e}", path=path)

    @classmethod
    def load(
        cls,
        path: str,
        params: AuctionParams,
        beliefs: Beliefs,
        fee: FeeSchedule,
        closing: ClosingRule,
        cfg: EstimatorConfig,
        grid: MuGrid = DEFAULT_GRID,
    ) -> 'MuTable':
        try:
            with np.load(path, allow_pickle=False) as data:
                key = str(data['key'])
                offsets = np.concatenate([[0], np.cumsum(data['cell_len'])])
                values = data['values']
                cells = {
                    (int(t), int(n)): (float(lo), values[offsets[i]:offsets[i + 1]].copy())
                    for i, (t, n, lo) in enumerate(zip(data['cell_t'], data['cell_n'], data['cell_lo']))
                }
        except (OSError, KeyError, ValueError) as e:
            raise CacheError(f"Unreadable policy cache: {e}", path=path)
        times = sorted({t for t, _ in cells})
        if key != table_key(params, beliefs, fee, closing, cfg, grid, times):
            raise CacheError("Policy cache does not match the requested configuration", path=path)
        return cls(params, beliefs, fee, closing, cfg, grid, cells, key)


# Arrival time --------------------------------------------------------------

@dataclass(frozen=True)
class ArrivalValueCurve:
    """Trader's value and expected executed volume per arrival time."""

    times: Tuple[int, ...]
    values: Tuple[float, ...]
    stderrs: Tuple[float, ...]
    volumes: Tuple[float, ...] = ()
    volume_stderrs: Tuple[float, ...] = ()

    def __len__(self) -> int:
        return len(self.times)

    def best(self) -> int:
        """Maximising arrival time; the earliest one on ties."""
        return self.times[int(np.argmax(self.values))]

    def value_at(self, tau: int) -> Estimate:
        i = self.times.index(tau)
        return Estimate(self.values[i], self.stderrs[i])

    def volume_at(self, tau: int) -> Estimate:
        i = self.times.index(tau)
        return Estimate(self.volumes[i], self.volume_stderrs[i])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'curve': [
                {'tau': t, 'value': v, 'stderr': s}
                for t, v, s in zip(self.times, self.values, self.stderrs)
            ]
        }


def _arrival_block(
    start: int,
    count: int,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    seed: int,
    policy: MuTable,
    times: Tuple[int, ...],
) -> Dict[Any, Moments]:
    draws = RawDraws.draw(seed, params.horizon, start, count)
    block = realize(draws, params, (beliefs.mu_g_star, beliefs.mu_g_mm),
                    arrival_measure(params, fee), fee, closing)
    stats: Dict[Any, Moments] = {}
    for tau in times:
        outcome = settle(block, params, fee, tau, policy)
        stats[('value', tau)] = Moments.of(outcome.payoff)
        stats[('volume', tau)] = Moments.of(outcome.volume)
    return stats


def arrival_values(
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    times: Optional[Sequence[int]] = None,
    table: Optional[MuTable] = None,
    grid: MuGrid = DEFAULT_GRID,
    cache_dir: Optional[str] = None,
) -> ArrivalValueCurve:
    """V(tau) under beliefs and fee-distorted arrivals, same paths for every tau."""
    times = tuple(params.time_grid if times is None else times)
    for tau in times:
        if tau not in params.time_grid:
            raise ValidationError(f"arrival {tau} is not on the time grid", field='tau')
    if table is None:
        table = MuTable.build(params, beliefs, fee, closing, cfg, grid, times, cache_dir)
    parts = map_blocks(_arrival_block, cfg, params, beliefs, fee, closing, cfg.seed, table, times)
    stats = merge_moments(parts)
    value = [stats[('value', t)].estimate for t in times]
    volume = [stats[('volume', t)].estimate for t in times]
    return ArrivalValueCurve(
        times=times,
        values=tuple(v.value for v in value),
        stderrs=tuple(v.stderr for v in value),
        volumes=tuple(v.value for v in volume),
        volume_stderrs=tuple(v.stderr for v in volume),
    )


def value_of_arrival(
    tau: int,
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    table: Optional[MuTable] = None,
    grid: MuGrid = DEFAULT_GRID,
    cache_dir: Optional[str] = None,
) -> Estimate:
    curve = arrival_values(params, beliefs, fee, closing, cfg, (tau,), table, grid, cache_dir)
    return curve.value_at(tau)


def best_arrival(
    params: AuctionParams,
    beliefs: Beliefs,
    fee: FeeSchedule,
    closing: ClosingRule,
    cfg: EstimatorConfig,
    table: Optional[MuTable] = None,
    grid: MuGrid = DEFAULT_GRID,
    cache_dir: Optional[str] = None,
) -> Tuple[int, ArrivalValueCurve]:
    curve = arrival_values(params, beliefs, fee, closing, cfg, None, table, grid, cache_dir)
    tau_hat = curve.best()
    logger.info("Best arrival %d (value %.4f) for fee %s, closing %s",
                tau_hat, curve.value_at(tau_hat).value, fee.label(), closing.label())
    return tau_hat, curve


class PolicyStore:
    """In-process memo of tables and best responses, backed by the disk cache."""

    def __init__(self, cache_dir: Optional[str] = None, grid: MuGrid = DEFAULT_GRID):
        self.cache_dir = cache_dir
        self.grid = grid
        self._tables: Dict[str, MuTable] = {}
        self._responses: Dict[Tuple[str, int, int], Tuple[int, ArrivalValueCurve]] = {}

    def table(self, params: AuctionParams, beliefs: Beliefs, fee: FeeSchedule,
              closing: ClosingRule, cfg: EstimatorConfig) -> MuTable:
        key = table_key(params, beliefs, fee, closing, cfg, self.grid, params.time_grid)
        if key not in self._tables:
            self._tables[key] = MuTable.build(params, beliefs, fee, closing, cfg, self.grid,
                                              cache_dir=self.cache_dir)
        return self._tables[key]

    def best_response(self, params: AuctionParams, beliefs: Beliefs, fee: FeeSchedule,
                      closing: ClosingRule, cfg: EstimatorConfig) -> Tuple[int, ArrivalValueCurve]:
        table = self.table(params, beliefs, fee, closing, cfg)
        key = (table.key, cfg.seed, cfg.paths)
        if key not in self._responses:
            self._responses[key] = best_arrival(params, beliefs, fee, closing, cfg, table, self.grid)
        return self._responses[key]
