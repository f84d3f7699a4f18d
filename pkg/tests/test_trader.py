#!/usr/bin/env python3
"""
策略交易者測試
Trader Best-Response Tests for auctionlab
"""

import os
import sys
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from auctionlab import trader
from auctionlab.engine import EstimatorConfig, pool_payoff
from auctionlab.exceptions import CacheError, ValidationError
from auctionlab.model import (
    AuctionParams, Beliefs, ClosingRule, FeeFamily, FeeSchedule, InformationSet, preset,
)
from auctionlab.trader import (
    ArrivalValueCurve, MuGrid, MuTable, PolicyStore, arrival_values, best_arrival,
    closed_form_mu_bar, count_limit, optimize_mu, table_key, value_of_arrival,
)

SMALL = AuctionParams(horizon=3, lam=1.0, K=10.0, sigma=1.0, mu_star=100.0, mu_mm=100.0)
GRID = MuGrid(points=41, sum_step=0.5, sum_width=3.0, count_width=2.0)
CFG = EstimatorConfig(nodes=12, paths=2000, block_size=500)
CLOSE = ClosingRule.deterministic(3)
ZERO = FeeSchedule.zero()


class TestInnerProblem(unittest.TestCase):
    """測試最適報價均值"""

    def test_closed_form(self):
        """測試完全資訊下的封閉解"""
        self.assertAlmostEqual(closed_form_mu_bar(3, 301.2, 100.5), 100.6)
        np.testing.assert_allclose(closed_form_mu_bar(np.array([1, 2]), np.array([100.0, 200.0]), 101.0),
                                   [101.0, (6 * 101.0 - 200.0) / 4])
        with self.assertRaises(ValidationError):
            closed_form_mu_bar(0, 0.0, 100.0)

    def test_closed_form_against_dense_search(self):
        """測試 50 組隨機資訊下封閉解為二次目標的最大值"""
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(1, 9))
            p_star = 100.0 + rng.uniform(-2.0, 2.0)
            total = n * 100.0 + rng.normal(0.0, np.sqrt(n))
            mu_bar = closed_form_mu_bar(n, total, p_star)
            mus = np.linspace(p_star - 10.0, p_star + 10.0, 10_000)
            values = pool_payoff(total, n, mus, p_star, 1.0, 10.0, include_indicator=False)
            with self.subTest(n=n, total=total, p_star=p_star):
                self.assertLessEqual(abs(mus[np.argmax(values)] - mu_bar), mus[1] - mus[0])

    def test_full_information_matches_closed_form(self):
        """測試 50 組隨機資訊下數值最適解與封閉解一致"""
        rng = np.random.default_rng(11)
        beliefs = Beliefs.perfect(SMALL)
        cfg = EstimatorConfig()
        step = 8.0 / (trader.DEFAULT_GRID.points - 1)
        for _ in range(50):
            n = int(rng.integers(1, 9))
            p_star = 100.0 + rng.uniform(-1.0, 1.0)
            total = n * p_star + rng.uniform(-4.0, 4.0)
            mu = optimize_mu(InformationSet(3, n, total), SMALL, beliefs, ZERO, CLOSE, cfg,
                             p_star=p_star, include_indicator=False)
            with self.subTest(n=n, total=total, p_star=p_star):
                self.assertAlmostEqual(mu, closed_form_mu_bar(n, total, p_star), delta=step)

    def test_upper_bound_binds_below_target(self):
        """測試觀察均價低於目標時報價停在上界"""
        beliefs = Beliefs.perfect(SMALL)
        candidates = GRID.candidates(SMALL, beliefs)
        low = optimize_mu(InformationSet(3, 3, 297.0), SMALL, beliefs, ZERO, CLOSE, CFG, GRID)
        self.assertEqual(low, candidates[-1])
        self.assertEqual(low, beliefs.mu_g_star + SMALL.mu_bound_width * SMALL.sigma)
        high = optimize_mu(InformationSet(3, 3, 303.0), SMALL, beliefs, ZERO, CLOSE, CFG, GRID)
        self.assertLess(high, candidates[-1])
        self.assertGreaterEqual(high, closed_form_mu_bar(3, 303.0, beliefs.mu_g_star)
                                - (candidates[1] - candidates[0]))

    def test_argmax_ties_pick_smaller_mean(self):
        """測試目標值平手時選較小的均值"""
        candidates = np.array([98.0, 99.0, 101.0, 102.0])
        np.testing.assert_array_equal(
            trader._argmax_lowest(np.array([[0.0, 2.0, 2.0, 0.0], [3.0, 1.0, 1.0, 3.0]]), candidates),
            [99.0, 98.0])
        grid = MuGrid(points=4)
        symmetric = (np.array([[0.0, 2.0, 2.0, 0.0]]), np.zeros((1, 4)))
        with patch.object(trader, 'conditional_value_grid', return_value=symmetric):
            mu = optimize_mu(InformationSet(1, 1, 100.0), SMALL, Beliefs.perfect(SMALL), ZERO,
                             CLOSE, CFG, grid)
        self.assertEqual(mu, grid.candidates(SMALL, Beliefs.perfect(SMALL))[1])

    def test_optimum_inside_bounds(self):
        """測試最適解位於搜尋區間內"""
        beliefs = Beliefs.shifted(SMALL, -1.0)
        mu = optimize_mu(InformationSet(1, 2, 200.0), SMALL, beliefs, ZERO, CLOSE, CFG, GRID)
        self.assertGreaterEqual(mu, beliefs.mu_g_star - 4.0)
        self.assertLessEqual(mu, beliefs.mu_g_star + 4.0)

    def test_count_limit_shrinks_with_fees(self):
        """測試手續費降低表格列數"""
        heavy = FeeSchedule(FeeFamily.SQUARE, 0.5)
        self.assertLess(count_limit(3, SMALL, heavy, GRID), count_limit(3, SMALL, ZERO, GRID))


class TestTableKey(unittest.TestCase):
    """測試快取鍵"""

    def test_quadrature_key_ignores_seed(self):
        """測試求積法的鍵與種子無關"""
        beliefs = Beliefs.perfect(SMALL)
        a = table_key(SMALL, beliefs, ZERO, CLOSE, EstimatorConfig(seed=1), GRID, (1, 2, 3))
        b = table_key(SMALL, beliefs, ZERO, CLOSE, EstimatorConfig(seed=2), GRID, (1, 2, 3))
        self.assertEqual(a, b)
        c = table_key(SMALL, beliefs, ZERO, CLOSE, EstimatorConfig(method='mc', seed=1), GRID, (1, 2, 3))
        d = table_key(SMALL, beliefs, ZERO, CLOSE, EstimatorConfig(method='mc', seed=2), GRID, (1, 2, 3))
        self.assertNotEqual(c, d)

    def test_zero_fee_normalized(self):
        """測試零手續費的不同寫法共用同一鍵"""
        beliefs = Beliefs.perfect(SMALL)
        a = table_key(SMALL, beliefs, ZERO, CLOSE, CFG, GRID, (1, 2, 3))
        b = table_key(SMALL, beliefs, FeeSchedule(FeeFamily.LINEAR, 0.0), CLOSE, CFG, GRID, (1, 2, 3))
        self.assertEqual(a, b)


class TestMuTable(unittest.TestCase):
    """測試最適報價表"""

    @classmethod
    def setUpClass(cls):
        cls.beliefs = Beliefs.perfect(SMALL)
        cls.table = MuTable.build(SMALL, cls.beliefs, ZERO, CLOSE, CFG, GRID)

    def test_cells_cover_time_grid(self):
        """測試表格涵蓋所有決策時點"""
        self.assertEqual(self.table.times, (1, 2, 3))
        for t in (1, 2, 3):
            self.assertEqual(self.table.count_limit(t), count_limit(t, SMALL, ZERO, GRID))

    def test_lookup_matches_direct_optimization(self):
        """測試查表結果與直接最佳化一致"""
        sums, values = self.table.cell(2, 3)
        picked = self.table.lookup(2, np.array([3]), np.array([sums[5]]))
        self.assertEqual(picked[0], values[5])
        direct = optimize_mu(InformationSet(2, 3, float(sums[5])), SMALL, self.beliefs, ZERO,
                             CLOSE, CFG, GRID)
        self.assertAlmostEqual(direct, values[5], delta=8.0 / (GRID.points - 1))

    def test_close_cells_pin_to_upper_bound(self):
        """測試收盤時均價不高於目標的資訊集合報價為上界"""
        self.assertEqual(self.table.bound_hi, GRID.candidates(SMALL, self.beliefs)[-1])
        self.assertEqual(self.table.bound_lo, GRID.candidates(SMALL, self.beliefs)[0])
        for n in (1, 3):
            sums, values = self.table.cell(3, n)
            below = sums < n * self.beliefs.mu_g_star + 1e-9
            with self.subTest(n=n):
                self.assertTrue(below.any())
                np.testing.assert_array_equal(values[below], self.table.bound_hi)
                self.assertTrue(np.all(values[~below] < self.table.bound_hi))

    def test_off_table_falls_back_to_optimizer(self):
        """測試表外資訊集合改用直接最佳化"""
        n = self.table.count_limit(1) + 3
        with patch.object(trader, 'optimize_mu', return_value=123.0) as mock_opt:
            picked = self.table(1, np.array([n, n]), np.array([100.0 * n, 100.0 * n + 1.0]))
        np.testing.assert_array_equal(picked, [123.0, 123.0])
        self.assertEqual(mock_opt.call_count, 2)
        info = mock_opt.call_args[0][0]
        self.assertEqual((info.t, info.n), (1, n))

    def test_cache_round_trip(self):
        """測試快取檔案讀寫"""
        with tempfile.TemporaryDirectory() as tmp:
            built = MuTable.build(SMALL, self.beliefs, ZERO, CLOSE, CFG, GRID, cache_dir=tmp)
            files = os.listdir(tmp)
            self.assertEqual(len(files), 1)
            self.assertTrue(files[0].startswith('mutable-'))
            with patch.object(trader, 'parallel_map') as mock_map:
                cached = MuTable.build(SMALL, self.beliefs, ZERO, CLOSE, CFG, GRID, cache_dir=tmp)
            mock_map.assert_not_called()
            np.testing.assert_array_equal(cached.cell(3, 2)[1], built.cell(3, 2)[1])

    def test_cache_mismatch(self):
        """測試快取內容與設定不符"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'table.npz')
            self.table.save(path)
            with self.assertRaises(CacheError):
                MuTable.load(path, SMALL, self.beliefs, FeeSchedule(FeeFamily.LINEAR, 0.1),
                             CLOSE, CFG, GRID)
            with open(path, 'wb') as fh:
                fh.write(b'not a cache')
            with self.assertRaises(CacheError) as context:
                MuTable.load(path, SMALL, self.beliefs, ZERO, CLOSE, CFG, GRID)
            self.assertEqual(context.exception.path, path)


class TestArrivalTime(unittest.TestCase):
    """測試最適到達時間"""

    def test_curve_tie_breaks_to_earliest(self):
        """測試平手時選擇最早時點"""
        curve = ArrivalValueCurve((1, 2, 3), (1.0, 3.0, 3.0), (0.1, 0.1, 0.1))
        self.assertEqual(curve.best(), 2)
        self.assertEqual(curve.value_at(3).value, 3.0)
        self.assertEqual(len(curve), 3)

    def test_off_grid_arrival_rejected(self):
        """測試不在時間格點上的到達時間"""
        with self.assertRaises(ValidationError):
            arrival_values(SMALL, Beliefs.perfect(SMALL), ZERO, CLOSE, CFG, times=(5,), grid=GRID)

    def test_best_arrival(self):
        """測試到達時間曲線"""
        beliefs = Beliefs.perfect(SMALL)
        table = MuTable.build(SMALL, beliefs, ZERO, CLOSE, CFG, GRID)
        tau_hat, curve = best_arrival(SMALL, beliefs, ZERO, CLOSE, CFG, table, GRID)
        self.assertEqual(curve.times, (1, 2, 3))
        self.assertEqual(tau_hat, curve.best())
        self.assertTrue(all(v >= 0.0 for v in curve.volumes))
        single = value_of_arrival(2, SMALL, beliefs, ZERO, CLOSE, CFG, table, GRID)
        self.assertAlmostEqual(single.value, curve.value_at(2).value, places=12)

    def test_value_nondecreasing_in_arrival(self):
        """測試無手續費且資訊完整時 V(tau) 隨到達時間不減"""
        params = SMALL.with_updates(horizon=4)
        close = ClosingRule.deterministic(4)
        curve = arrival_values(params, Beliefs.perfect(params), ZERO, close,
                               CFG.replace(paths=4000, block_size=1000), grid=GRID)
        self.assertEqual(curve.times, (1, 2, 3, 4))
        for i in range(3):
            with self.subTest(tau=curve.times[i]):
                slack = 3.0 * np.hypot(curve.stderrs[i], curve.stderrs[i + 1])
                self.assertGreaterEqual(curve.values[i + 1], curve.values[i] - slack)
        self.assertGreater(curve.values[-1], curve.values[0])

    def test_policy_store_memoizes(self):
        """測試策略快取只建表一次"""
        store = PolicyStore(grid=GRID)
        beliefs = Beliefs.perfect(SMALL)
        with patch.object(MuTable, 'build', wraps=MuTable.build) as mock_build:
            first = store.best_response(SMALL, beliefs, ZERO, CLOSE, CFG)
            second = store.best_response(SMALL, beliefs, ZERO, CLOSE, CFG)
        self.assertEqual(mock_build.call_count, 1)
        self.assertIs(first, second)


@unittest.skipUnless(os.getenv('AUCTIONLAB_SLOW_TESTS') == '1', "set AUCTIONLAB_SLOW_TESTS=1")
class TestPublishedBestResponse(unittest.TestCase):
    """測試已發表的最適到達時間"""

    def test_perfect_information_waits_for_the_close(self):
        """測試無手續費且資訊完整時於收盤到達"""
        params = preset('apple')
        tau_hat, _ = best_arrival(params, Beliefs.perfect(params), ZERO,
                                  ClosingRule.deterministic(10), EstimatorConfig.from_env())
        self.assertEqual(tau_hat, 10)

    def test_randomized_close_moves_arrival(self):
        """測試 p = 0.1 時提早至 T-1"""
        params = preset('apple')
        tau_hat, _ = best_arrival(params, Beliefs.shifted(params, -1.0), ZERO,
                                  ClosingRule.bernoulli(0.1, 10), EstimatorConfig.from_env())
        self.assertEqual(tau_hat, 9)

    def test_square_fee_moves_arrival_to_start(self):
        """測試平方手續費 0.24t^2 時最早到達"""
        params = preset('apple')
        tau_hat, _ = best_arrival(params, Beliefs.shifted(params, -1.0),
                                  FeeSchedule(FeeFamily.SQUARE, 0.24), ClosingRule.deterministic(10),
                                  EstimatorConfig.from_env())
        self.assertEqual(tau_hat, 1)


if __name__ == '__main__':
    unittest.main()
