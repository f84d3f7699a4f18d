"""
Pinned configurations behind the published result tables, with a deviation
report comparing what this run produced against the published numbers.

Tables 1-2 are zero-fee quality tables (perfect and shifted beliefs), table 3
scans closing randomisation without fees, tables 4-5 search fee schedules for
the two exchange objectives.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from .bilevel import (
    DEFAULT_P_GRID, MechanismResult, ObjectiveKind, ObjectiveSpec, default_a_grid,
    results_frame, select_mechanism, sweep_mechanisms, sweep_series,
)
from .config import DEFAULT_RHOS
from .engine import EstimatorConfig
from .exceptions import ValidationError
from .model import Beliefs, ClosingRule, FeeFamily, FeeSchedule, preset
from .quality import quality_table
from .trader import DEFAULT_GRID, MuGrid, PolicyStore

logger = logging.getLogger(__name__)

TABLES = (1, 2, 3, 4, 5)
STOCKS = ('apple', 'alphabet')

_T1_COLUMNS = ('trader_value', 'mq', 'mq_rho_0.1', 'price_impact', 'expected_mu_hat')
_T2_COLUMNS = ('mq', 'mq_rho_0.1', 'mq_rho_1', 'price_impact', 'expected_mu_hat')

# Published values keyed by table, stock and row label.
PUBLISHED: Dict[Tuple[int, str], Dict[str, Dict[str, float]]] = {
    (1, 'apple'): {
        f'tau={t}': dict(zip(_T1_COLUMNS, row)) for t, row in enumerate([
            (0.5135, 3.2592, 1.1509, 0.0561, 185.2150),
            (0.7489, 3.2516, 1.1509, 0.0721, 185.2238),
            (0.9871, 3.2435, 1.1506, 0.0874, 185.2996),
            (1.2273, 3.2354, 1.1503, 0.1022, 185.3871),
            (1.4691, 3.2274, 1.1501, 0.1166, 185.4779),
            (1.7123, 3.2195, 1.1499, 0.1307, 185.5669),
            (1.9566, 3.2117, 1.1496, 0.1444, 185.6473),
            (2.2014, 3.2035, 1.1493, 0.1586, 185.7147),
            (2.4451, 3.1948, 1.1487, 0.1731, 185.7359),
            (2.6843, 3.1832, 1.1471, 0.1869, 185.5862),
        ], start=1)
    },
    (1, 'alphabet'): {
        f'tau={t}': dict(zip(_T1_COLUMNS, row)) for t, row in enumerate([
            (0.7381, 4.6863, 1.188, 0.0879, 135.6279),
            (1.0765, 4.6755, 1.1879, 0.1134, 135.7143),
            (1.4188, 4.6641, 1.1876, 0.1371, 135.829),
            (1.764, 4.6525, 1.1872, 0.1602, 135.9517),
            (2.1116, 4.6412, 1.1869, 0.1819, 136.0635),
            (2.4612, 4.6299, 1.1866, 0.2035, 136.1738),
            (2.8123, 4.6186, 1.1863, 0.225, 136.2715),
            (3.164, 4.607, 1.186, 0.2467, 136.3597),
            (3.5143, 4.5945, 1.1853, 0.2696, 136.4248),
            (3.8581, 4.5779, 1.1836, 0.2907, 136.3411),
        ], start=1)
    },
    (2, 'apple'): {
        **{f'minus_sigma tau={t}': dict(zip(_T2_COLUMNS, row)) for t, row in enumerate([
            (3.2765, 1.1514, 9.3008, 0.0747, 182.222),
            (3.2963, 1.1521, 9.3864, 0.1212, 181.1093),
            (3.3243, 1.1529, 9.512, 0.1728, 180.1473),
            (3.3596, 1.1538, 9.6727, 0.2279, 179.2896),
            (3.4, 1.1549, 9.8582, 0.283, 178.5356),
            (3.4445, 1.1561, 10.0647, 0.3374, 177.8721),
            (3.4898, 1.1574, 10.2765, 0.388, 177.3117),
            (3.5356, 1.1586, 10.4933, 0.4351, 176.8247),
            (3.5777, 1.1594, 10.6966, 0.4763, 176.3853),
            (3.6161, 1.1591, 10.8899, 0.5133, 175.8701),
        ], start=1)},
        **{f'plus_sigma tau={t}': dict(zip(_T2_COLUMNS, row)) for t, row in enumerate([
            (3.2763, 1.1514, 9.3202, 0.1737, 188.0503),
            (3.2772, 1.1516, 9.324, 0.2367, 188.8119),
            (3.2775, 1.1516, 9.3265, 0.2864, 189.388),
            (3.2778, 1.1515, 9.3288, 0.3251, 189.8009),
            (3.2781, 1.1515, 9.3309, 0.3551, 190.0937),
            (3.2785, 1.1515, 9.3327, 0.3779, 190.2949),
            (3.2787, 1.1515, 9.3339, 0.3955, 190.4307),
            (3.2786, 1.1514, 9.3341, 0.4089, 190.5091),
            (3.2777, 1.151, 9.3317, 0.4193, 190.5048),
            (3.274, 1.1496, 9.3206, 0.3307, 189.337),
        ], start=1)},
    },
    (3, 'apple'): {
        f'p={p:g}': {'mq': mq, 'tau_hat': tau} for p, mq, tau in [
            (0.0, 3.6659, 10), (0.06, 3.6456, 10), (0.07, 3.6422, 10), (0.08, 3.6365, 9),
            (0.09, 3.6374, 9), (0.1, 3.6384, 9), (0.5, 3.6764, 9), (1.0, 3.7244, 9),
        ]
    },
    (3, 'alphabet'): {
        f'p={p:g}': {'mq': mq, 'tau_hat': tau} for p, mq, tau in [
            (0.0, 5.2687, 10), (0.06, 5.2395, 10), (0.07, 5.2346, 10), (0.08, 5.2263, 9),
            (0.09, 5.2277, 9), (0.1, 5.2291, 9), (0.5, 5.2851, 9), (1.0, 5.3526, 9),
        ]
    },
    (4, 'apple'): {
        'rho=none': {'a': 0.003, 'p': 0.0, 'tau_hat': 6, 'exchange_value': 3.553, 'mq_zero_fee': 3.666},
        'rho=0.01': {'a': 0.001, 'p': 0.0, 'tau_hat': 10, 'exchange_value': 0.999, 'mq_zero_fee': 1.004},
        'rho=0.5': {'a': 0.001, 'p': 0.0, 'tau_hat': 10, 'exchange_value': 2.598, 'mq_zero_fee': 2.599},
        'rho=1.5': {'a': 0.002, 'p': 0.0, 'tau_hat': 7, 'exchange_value': 76.001, 'mq_zero_fee': 80.180},
    },
    (4, 'alphabet'): {
        'rho=none': {'a': 0.004, 'p': 0.0, 'tau_hat': 5, 'exchange_value': 5.064, 'mq_zero_fee': 5.269},
        'rho=0.01': {'a': 0.001, 'p': 0.0, 'tau_hat': 10, 'exchange_value': 1.002, 'mq_zero_fee': 1.007},
        'rho=0.5': {'a': 0.001, 'p': 0.1, 'tau_hat': 9, 'exchange_value': 3.313, 'mq_zero_fee': 3.326},
        'rho=1.5': {'a': 0.003, 'p': 0.0, 'tau_hat': 6, 'exchange_value': 294.589, 'mq_zero_fee': 318.554},
    },
    (5, 'apple'): {
        'rho=none': {'a': 0.24, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 0.417, 'fee_gain': 3.546,
                     'mq_with_fee': 3.963, 'mq_zero_fee': 3.666},
        'rho=0.01': {'a': 0.24, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 0.971, 'fee_gain': 0.035,
                     'mq_with_fee': 1.006, 'mq_zero_fee': 1.004},
        'rho=0.5': {'a': 0.24, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 0.466, 'fee_gain': 2.276,
                    'mq_with_fee': 2.742, 'mq_zero_fee': 2.599},
        'rho=1.5': {'a': 0.23, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 0.768, 'fee_gain': 153.904,
                    'mq_with_fee': 154.672, 'mq_zero_fee': 80.180},
    },
    (5, 'alphabet'): {
        'rho=none': {'a': 0.23, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 2.173, 'fee_gain': 3.537,
                     'mq_with_fee': 5.710, 'mq_zero_fee': 5.269},
        'rho=0.01': {'a': 0.24, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 0.974, 'fee_gain': 0.035,
                     'mq_with_fee': 1.009, 'mq_zero_fee': 1.007},
        'rho=0.5': {'a': 0.24, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 0.610, 'fee_gain': 2.981,
                    'mq_with_fee': 3.591, 'mq_zero_fee': 3.326},
        'rho=1.5': {'a': 0.22, 'p': 0.0, 'tau_hat': 1, 'exchange_value': 5.026, 'fee_gain': 982.068,
                    'mq_with_fee': 987.094, 'mq_zero_fee': 318.554},
    },
}

RANDOMIZATION_GRID = (0.0, 0.06, 0.07, 0.08, 0.09, 0.1, 0.5, 1.0)
OBJECTIVE_RHOS = (None, 0.01, 0.5, 1.5)


@dataclass(frozen=True)
class Reproduction:
    table: pd.DataFrame
    deviations: pd.DataFrame
    series: pd.DataFrame
    sweep: Optional[pd.DataFrame] = None


def _deviations(table_id: int, stock: str, produced: Dict[str, Dict[str, Tuple[float, float]]]) -> pd.DataFrame:
    """One row per published number: published, produced, stderr, deviation, relative deviation."""
    published = PUBLISHED.get((table_id, stock), {})
    records = []
    for key, metrics in published.items():
        for metric, value in metrics.items():
            got, stderr = produced.get(key, {}).get(metric, (math.nan, math.nan))
            deviation = got - value
            records.append({
                'table': table_id, 'stock': stock, 'row': key, 'metric': metric,
                'published': value, 'produced': got, 'stderr': stderr,
                'deviation': deviation,
                'relative': deviation / abs(value) if value else math.nan,
            })
    return pd.DataFrame.from_records(
        records, columns=['table', 'stock', 'row', 'metric', 'published', 'produced',
                          'stderr', 'deviation', 'relative'])


def _quality_rows(stock: str, cases: Sequence[str], rhos: Sequence[float], cfg: EstimatorConfig,
                  grid: MuGrid, cache_dir: Optional[str], table_id: int) -> Reproduction:
    params = preset(stock)
    frames, series, produced = [], [], {}
    for case in cases:
        beliefs = Beliefs.perfect(params) if case == 'perfect' else \
            Beliefs.shifted(params, -1.0 if case == 'minus_sigma' else 1.0)
        report = quality_table(params, beliefs, FeeSchedule.zero(),
                               ClosingRule.deterministic(params.horizon), rhos, cfg,
                               grid=grid, cache_dir=cache_dir)
        frame = report.to_frame()
        frame.insert(0, 'case', case)
        frames.append(frame)
        curves = report.series()
        curves.insert(0, 'case', case)
        series.append(curves)
        prefix = '' if table_id == 1 else f'{case} '
        for row in report.rows:
            entry = {'trader_value': row.trader_value, 'mq': row.mq, 'price_impact': row.price_impact,
                     'expected_mu_hat': row.expected_mu_hat}
            entry.update({f'mq_rho_{rho:g}': row.mq_rho[rho] for rho in report.rhos})
            produced[f'{prefix}tau={row.tau}'] = {k: tuple(v) for k, v in entry.items()}
        logger.info("%s %s: regulator's arrival %d", stock, case, report.regulator_arrival())
    return Reproduction(pd.concat(frames, ignore_index=True), _deviations(table_id, stock, produced),
                        pd.concat(series, ignore_index=True))


def _randomization_rows(stock: str, cfg: EstimatorConfig, store: PolicyStore) -> Reproduction:
    params = preset(stock)
    beliefs = Beliefs.shifted(params, -1.0)
    objective = ObjectiveSpec(ObjectiveKind.TOTAL_SPREAD)
    results = sweep_mechanisms(objective, [FeeFamily.ZERO], [0.0], RANDOMIZATION_GRID,
                               params, beliefs, cfg, store)
    best = select_mechanism(results)
    frame = results_frame(results)
    frame['optimal'] = [r is best for r in results]
    produced = {
        f'p={r.randomization:g}': {'mq': (r.exchange_value, r.exchange_value_se),
                                   'tau_hat': (float(r.tau_hat), 0.0)}
        for r in results
    }
    series = pd.DataFrame.from_records(
        [{'series': 'mq', 'x': r.randomization, 'y': r.exchange_value, 'stderr': r.exchange_value_se}
         for r in results] +
        [{'series': 'tau_hat', 'x': r.randomization, 'y': float(r.tau_hat), 'stderr': 0.0}
         for r in results],
        columns=['series', 'x', 'y', 'stderr'])
    logger.info("%s: optimal randomization p=%g", stock, best.randomization)
    return Reproduction(frame, _deviations(3, stock, produced), series)


def _fee_rows(table_id: int, stock: str, cfg: EstimatorConfig, store: PolicyStore,
              a_grid: Optional[Sequence[float]], p_grid: Sequence[float]) -> Reproduction:
    params = preset(stock)
    beliefs = Beliefs.shifted(params, -1.0)
    kind = ObjectiveKind.TOTAL_SPREAD if table_id == 4 else ObjectiveKind.EFFICIENCY_MINUS_FEE
    coefficients = tuple(a_grid) if a_grid is not None else default_a_grid(kind)
    best_rows: List[MechanismResult] = []
    sweeps, series, produced, labels = [], [], {}, []
    for rho in OBJECTIVE_RHOS:
        objective = ObjectiveSpec(kind, rho)
        label = 'rho=none' if rho is None else f'rho={rho:g}'
        results = sweep_mechanisms(objective, [FeeFamily.LINEAR, FeeFamily.SQUARE], coefficients,
                                   p_grid, params, beliefs, cfg, store)
        best = select_mechanism(results)
        best_rows.append(best)
        labels.append(label)
        sweep = results_frame(results)
        sweep.insert(0, 'objective', label)
        sweeps.append(sweep)
        curves = sweep_series(results)
        curves.insert(0, 'objective', label)
        series.append(curves)
        produced[label] = {
            'a': (best.fee.a, 0.0),
            'p': (best.randomization, 0.0),
            'tau_hat': (float(best.tau_hat), 0.0),
            'exchange_value': (best.exchange_value, best.exchange_value_se),
            'fee_gain': (best.fee_gain, math.nan),
            'mq_with_fee': (best.mq_with_fee, best.mq_with_fee_se),
            'mq_zero_fee': (best.mq_zero_fee, best.mq_zero_fee_se),
        }
    table = results_frame(best_rows)
    table.insert(0, 'objective', labels)
    return Reproduction(table, _deviations(table_id, stock, produced),
                        pd.concat(series, ignore_index=True), pd.concat(sweeps, ignore_index=True))


def reproduce(
    table_id: int,
    stock: str,
    cfg: EstimatorConfig,
    grid: MuGrid = DEFAULT_GRID,
    cache_dir: Optional[str] = None,
    rhos: Sequence[float] = DEFAULT_RHOS,
    a_grid: Optional[Sequence[float]] = None,
    p_grid: Sequence[float] = DEFAULT_P_GRID,
) -> Reproduction:
    if table_id not in TABLES:
        raise ValidationError(f"Unknown table id: {table_id}", field='table')
    stock = stock.lower()
    if stock not in STOCKS:
        raise ValidationError(f"Unknown stock: {stock!r}", field='stock')
    logger.info("Reproducing table %d for %s", table_id, stock)
    if table_id == 1:
        return _quality_rows(stock, ('perfect',), sorted({0.1, *rhos}), cfg, grid, cache_dir, 1)
    if table_id == 2:
        return _quality_rows(stock, ('minus_sigma', 'plus_sigma'), sorted({0.1, 1.0, *rhos}),
                             cfg, grid, cache_dir, 2)
    store = PolicyStore(cache_dir, grid)
    if table_id == 3:
        return _randomization_rows(stock, cfg, store)
    return _fee_rows(table_id, stock, cfg, store, a_grid, p_grid)
