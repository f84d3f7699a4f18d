#!/usr/bin/env python3
"""
命令列介面測試
Command Line Tests for auctionlab
"""

import io
import json
import logging
import os
import sys
import tempfile
import unittest
from unittest.mock import Mock, patch

import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from auctionlab import cli
from auctionlab.bilevel import MechanismResult
from auctionlab.exceptions import CacheError
from auctionlab.model import ClosingRule, FeeFamily, FeeSchedule
from auctionlab.reproduce import Reproduction
from auctionlab.trader import ArrivalValueCurve

FIXTURES = os.path.join(os.path.dirname(__file__), 'fixtures')


def _mechanism(feasible=True):
    return MechanismResult(FeeSchedule(FeeFamily.LINEAR, 0.003), ClosingRule.deterministic(10), 6,
                           3.553, 0.01, 3.56, 3.666, feasible, trader_value=0.2,
                           reservation_rhs=0.3)


class TestCliBasics(unittest.TestCase):
    """測試命令列基本行為"""

    @patch('sys.stdout', new_callable=io.StringIO)
    def test_help(self, mock_stdout):
        """測試說明文字"""
        self.assertEqual(cli.main(['--help']), 0)
        self.assertIn('market-quality', mock_stdout.getvalue())

    @patch('sys.stderr', new_callable=io.StringIO)
    def test_usage_errors(self, mock_stderr):
        """測試用法錯誤回傳 2"""
        self.assertEqual(cli.main([]), 2)
        self.assertEqual(cli.main(['reproduce', '--table', '9']), 2)
        self.assertEqual(cli.main(['--method', 'newton', 'best-response']), 2)

    @patch('sys.stdout', new_callable=io.StringIO)
    def test_calibrate(self, mock_stdout):
        """測試校準子命令"""
        with tempfile.TemporaryDirectory() as tmp:
            output = os.path.join(tmp, 'calibration.json')
            code = cli.main(['calibrate', os.path.join(FIXTURES, 'bars_fixture.csv'),
                             '--output', output])
            self.assertEqual(code, 0)
            with open(output, encoding='utf-8') as fh:
                written = json.load(fh)
        with open(os.path.join(FIXTURES, 'bars_fixture_expected.json'), encoding='utf-8') as fh:
            expected = json.load(fh)
        self.assertAlmostEqual(written['mu'], expected['mu'])
        self.assertAlmostEqual(written['sigma'], expected['sigma'])
        self.assertAlmostEqual(written['gamma'], expected['gamma'], delta=1e-6)
        self.assertEqual(json.loads(mock_stdout.getvalue())['n_days'], 3)

    @patch('sys.stderr', new_callable=io.StringIO)
    def test_calibrate_missing_file(self, mock_stderr):
        """測試找不到輸入檔"""
        code = cli.main(['calibrate', os.path.join(FIXTURES, 'missing.csv')])
        self.assertNotEqual(code, 0)
        self.assertIn('error', mock_stderr.getvalue())

    @patch('sys.stderr', new_callable=io.StringIO)
    def test_calibrate_bad_data(self, mock_stderr):
        """測試格式錯誤的資料回傳 3"""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'bars.csv')
            with open(path, 'w', encoding='utf-8') as fh:
                fh.write("date,open,high,low,close\n2023-10-02,x,11,9,10\n")
            self.assertEqual(cli.main(['calibrate', path]), 3)
        self.assertIn('line 2', mock_stderr.getvalue())

    @patch('sys.stderr', new_callable=io.StringIO)
    def test_validation_error(self, mock_stderr):
        """測試無效設定回傳 3"""
        self.assertEqual(cli.main(['best-response', '--fee', 'cubic:1']), 3)
        self.assertIn('Invalid fee spec', mock_stderr.getvalue())

    @patch('sys.stderr', new_callable=io.StringIO)
    @patch.dict(os.environ, {'AUCTIONLAB_LOG_LEVEL': 'chatty'})
    def test_invalid_log_level(self, mock_stderr):
        """測試無效的日誌等級回傳 3"""
        self.assertEqual(cli.main(['calibrate', os.path.join(FIXTURES, 'bars_fixture.csv')]), 3)
        self.assertIn("Unknown log level: 'CHATTY'", mock_stderr.getvalue())

    @patch('logging.basicConfig')
    @patch.dict(os.environ, {'AUCTIONLAB_LOG_LEVEL': ' warning '})
    def test_log_level_from_environment(self, mock_basic):
        """測試由環境變數設定日誌等級"""
        cli.configure_logging()
        self.assertEqual(mock_basic.call_args[1]['level'], logging.WARNING)
        cli.configure_logging(verbose=True)
        self.assertEqual(mock_basic.call_args[1]['level'], logging.DEBUG)


class TestCliCommands(unittest.TestCase):
    """測試各子命令的輸出檔案"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = self.tmp.name

    def tearDown(self):
        self.tmp.cleanup()

    @patch.object(cli, 'quality_table')
    def test_market_quality(self, mock_quality):
        """測試市場品質子命令"""
        report = Mock()
        report.baseline = 3.40723
        report.regulator_arrival.return_value = 10
        report.series.return_value = pd.DataFrame({'series': ['mq_rho_0.1'], 'x': [1], 'y': [1.1],
                                                   'stderr': [0.0]})
        mock_quality.return_value = report
        code = cli.main(['--stock', 'alphabet', '--seed', '3', '--threads', '1', '--out', self.out,
                         'market-quality', '--beliefs', 'minus_sigma', '--rho', '0.1,0.5',
                         '--no-trader'])
        self.assertEqual(code, 0)
        args, kwargs = mock_quality.call_args
        self.assertEqual(args[0].sigma, 2.11)
        self.assertEqual(args[4], (0.1, 0.5))
        self.assertEqual(args[5].seed, 3)
        self.assertFalse(kwargs['trader'])
        report.to_csv.assert_called_once_with(os.path.join(self.out, 'quality.csv'))
        self.assertTrue(os.path.exists(os.path.join(self.out, 'mq_rho_series.csv')))

    @patch('sys.stdout', new_callable=io.StringIO)
    @patch.object(cli, 'best_arrival')
    def test_best_response(self, mock_best, mock_stdout):
        """測試最適到達時間子命令"""
        curve = ArrivalValueCurve((1, 2), (0.5, 0.7), (0.01, 0.01), (1.0, 1.0), (0.1, 0.1))
        mock_best.return_value = (2, curve)
        code = cli.main(['--out', self.out, '--threads', '1', 'best-response',
                         '--fee', 'square:0.24', '--randomization', 'p=0.08'])
        self.assertEqual(code, 0)
        with open(os.path.join(self.out, 'best_response.json'), encoding='utf-8') as fh:
            data = json.load(fh)
        self.assertEqual(data['tau_hat'], 2)
        self.assertEqual(data['fee'], {'family': 'square', 'a': 0.24})
        self.assertEqual(data['closing']['support'], [9, 10])
        self.assertEqual(len(data['curve']), 2)

    @patch('sys.stdout', new_callable=io.StringIO)
    @patch.object(cli, 'sweep_mechanisms')
    def test_optimize(self, mock_sweep, mock_stdout):
        """測試機制最佳化子命令"""
        mock_sweep.return_value = [_mechanism()]
        code = cli.main(['--out', self.out, '--threads', '1', 'optimize',
                         '--objective', 'total_spread', '--a-grid', '0:0.01:0.001',
                         '--p-grid', '0,0.1', '--families', 'linear'])
        self.assertEqual(code, 0)
        args = mock_sweep.call_args[0]
        self.assertEqual(len(args[2]), 11)
        self.assertEqual(args[3], (0.0, 0.1))
        for name in ('optimum.json', 'sweep.csv', 'sweep_series.csv'):
            self.assertTrue(os.path.exists(os.path.join(self.out, name)))
        with open(os.path.join(self.out, 'optimum.json'), encoding='utf-8') as fh:
            self.assertEqual(json.load(fh)['tau_hat'], 6)

    @patch('sys.stderr', new_callable=io.StringIO)
    @patch.object(cli, 'sweep_mechanisms')
    def test_optimize_infeasible(self, mock_sweep, mock_stderr):
        """測試無可行機制回傳 4"""
        mock_sweep.return_value = [_mechanism(feasible=False)]
        code = cli.main(['--out', self.out, '--threads', '1', 'optimize'])
        self.assertEqual(code, 4)
        self.assertIn('infeasible', mock_stderr.getvalue())
        self.assertIn('linear:0.003', mock_stderr.getvalue())

    @patch('sys.stderr', new_callable=io.StringIO)
    @patch.object(cli, 'sweep_mechanisms', side_effect=CacheError("Unreadable policy cache"))
    def test_cache_error(self, mock_sweep, mock_stderr):
        """測試快取錯誤回傳 5"""
        self.assertEqual(cli.main(['--out', self.out, '--threads', '1', 'optimize']), 5)

    @patch.object(cli, 'reproduce')
    def test_reproduce(self, mock_reproduce):
        """測試重現子命令的輸出"""
        mock_reproduce.return_value = Reproduction(
            table=pd.DataFrame({'p': [0.0, 0.08]}),
            deviations=pd.DataFrame({'relative': [0.01, -0.02]}),
            series=pd.DataFrame({'series': ['mq'], 'x': [0.0], 'y': [3.6], 'stderr': [0.0]}),
        )
        code = cli.main(['--out', self.out, '--threads', '1', 'reproduce', '--table', '3',
                         '--stock', 'alphabet'])
        self.assertEqual(code, 0)
        self.assertEqual(mock_reproduce.call_args[0][:2], (3, 'alphabet'))
        for name in ('table3_alphabet.csv', 'table3_alphabet_deviations.csv',
                     'table3_alphabet_series.csv'):
            self.assertTrue(os.path.exists(os.path.join(self.out, name)))
        self.assertFalse(os.path.exists(os.path.join(self.out, 'table3_alphabet_sweep.csv')))

    @patch('sys.stdout', new_callable=io.StringIO)
    @patch.object(cli, 'quarter_check')
    def test_quarter_check(self, mock_check, mock_stdout):
        """測試四分之一檢查子命令"""
        from auctionlab.quality import QuarterCheck
        mock_check.return_value = QuarterCheck(0.251, 0.002, 1e-15)
        self.assertEqual(cli.main(['--out', self.out, '--threads', '1', 'quarter-check']), 0)
        self.assertAlmostEqual(json.loads(mock_stdout.getvalue())['ratio'], 0.251)


if __name__ == '__main__':
    unittest.main()
