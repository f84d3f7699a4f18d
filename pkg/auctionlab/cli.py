"""
auctionlab command line.

    auctionlab [global flags] calibrate INPUT [--output PATH]
    auctionlab [global flags] market-quality [--beliefs ...] [--fee ...] [--randomization ...]
    auctionlab [global flags] best-response [--beliefs ...] [--fee ...] [--randomization ...]
    auctionlab [global flags] optimize [--objective ...] [--a-grid ...] [--p-grid ...]
    auctionlab [global flags] reproduce --table {1,2,3,4,5} [--stock {apple,alphabet}]
    auctionlab [global flags] quarter-check

Results go to files under --out (JSON documents are also echoed to stdout);
logs go to stderr.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from . import __version__
from .bilevel import results_frame, select_mechanism, sweep_mechanisms, sweep_series
from .calibration import calibrate, load_bars
from .config import RunConfig
from .exceptions import AuctionLabError, CacheError, InfeasibleMechanismError, ValidationError
from .model import params_to_dict
from .quality import quality_table, quarter_check
from .reproduce import STOCKS, TABLES, reproduce
from .trader import PolicyStore, best_arrival

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='auctionlab',
        description='Periodic-auction mechanism design lab',
    )
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--params', help='AuctionParams JSON document')
    parser.add_argument('--stock', choices=STOCKS, help='calibrated preset (default apple)')
    parser.add_argument('--seed', type=int, help='root seed (env AUCTIONLAB_SEED)')
    parser.add_argument('--paths', type=int, help='Monte Carlo paths (env AUCTIONLAB_PATHS)')
    parser.add_argument('--method', choices=('mc', 'quad'), help='conditional-value estimator')
    parser.add_argument('--threads', type=int, help='worker processes (default: all cores)')
    parser.add_argument('--out', help='output directory (env AUCTIONLAB_OUT, default ./out)')
    parser.add_argument('--config', help='JSON run config; explicit flags win over it')
    parser.add_argument('--cache-dir', help='policy table cache (env AUCTIONLAB_CACHE_DIR)')
    parser.add_argument('--verbose', '-v', action='store_true', help='debug logging')

    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    cal = commands.add_parser('calibrate', help='estimate mu, sigma, gamma from daily bars')
    cal.add_argument('input', help='CSV with date,open,high,low,close')
    cal.add_argument('--output', help='write the JSON result here as well')

    def scenario(sub: argparse.ArgumentParser) -> None:
        sub.add_argument('--beliefs', help='perfect | minus_sigma | plus_sigma | explicit:a,b')
        sub.add_argument('--fee', help='fee schedule "family:a", e.g. square:0.24')
        sub.add_argument('--randomization', help='"p=<x>" or "close=<t>"')

    mq = commands.add_parser('market-quality', help='quality table over arrival times')
    scenario(mq)
    mq.add_argument('--rho', help='comma list of risk-aversion levels')
    mq.add_argument('--no-trader', action='store_true', help='market makers only')

    br = commands.add_parser('best-response', help="trader's optimal arrival time")
    scenario(br)

    opt = commands.add_parser('optimize', help="solve the exchange's design problem on a grid")
    opt.add_argument('--beliefs', help='perfect | minus_sigma | plus_sigma | explicit:a,b')
    opt.add_argument('--objective', choices=('total_spread', 'efficiency_minus_fee'))
    opt.add_argument('--objective-rho', type=float, help='risk aversion; omit for quadratic')
    opt.add_argument('--fee-base', choices=('all_arrivals', 'strategic_only'))
    opt.add_argument('--families', help='comma list of linear, square, zero')
    opt.add_argument('--a-grid', help='coefficients: list or start:stop:step')
    opt.add_argument('--p-grid', help='closing randomizations: list or start:stop:step')

    rep = commands.add_parser('reproduce', help='rerun a published table with a deviation report')
    rep.add_argument('--table', type=int, choices=TABLES, required=True)
    rep.add_argument('--stock', dest='table_stock', choices=STOCKS)

    commands.add_parser('quarter-check', help='full-information MQ(T) / MQ^0 ratio')
    return parser


def configure_logging(verbose: bool = False) -> None:
    name = 'DEBUG' if verbose else os.getenv('AUCTIONLAB_LOG_LEVEL', 'INFO').strip().upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ValidationError(f"Unknown log level: {name!r}", field='AUCTIONLAB_LOG_LEVEL')
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    names = ('params', 'stock', 'seed', 'paths', 'method', 'threads', 'fee', 'rho', 'a_grid',
             'p_grid', 'families', 'objective', 'objective_rho', 'fee_base', 'beliefs',
             'randomization', 'out', 'cache_dir')
    return {name: getattr(args, name, None) for name in names}


def _output(config: RunConfig, name: str) -> str:
    os.makedirs(config.out_dir, exist_ok=True)
    return os.path.join(config.out_dir, name)


def _write_json(data: Dict[str, Any], path: Optional[str]) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    if path:
        with open(path, 'w', encoding='utf-8') as fh:
            fh.write(text + '\n')
        logger.info("Wrote %s", path)
    print(text)


def cmd_calibrate(args: argparse.Namespace) -> int:
    result = calibrate(load_bars(args.input))
    data = result.to_dict()
    data['params'] = result.to_params_fragment()
    _write_json(data, args.output)
    return EXIT_OK


def cmd_market_quality(config: RunConfig, args: argparse.Namespace) -> int:
    report = quality_table(
        config.params, config.trader_beliefs, config.fee, config.closing, config.rhos,
        config.estimator, trader=not args.no_trader, grid=config.grid, cache_dir=config.cache_dir,
    )
    path = _output(config, 'quality.csv')
    report.to_csv(path)
    report.series().to_csv(_output(config, 'mq_rho_series.csv'), index=False, float_format='%.10g')
    logger.info("Wrote %s (no-trader MQ %.5f, regulator's arrival %d)",
                path, report.baseline, report.regulator_arrival())
    return EXIT_OK


def cmd_best_response(config: RunConfig, args: argparse.Namespace) -> int:
    tau_hat, curve = best_arrival(config.params, config.trader_beliefs, config.fee, config.closing,
                                  config.estimator, grid=config.grid, cache_dir=config.cache_dir)
    data = {
        'tau_hat': tau_hat,
        'value': curve.value_at(tau_hat).value,
        'stderr': curve.value_at(tau_hat).stderr,
        'fee': config.fee.to_dict(),
        'closing': config.closing.to_dict(),
        'beliefs': config.beliefs,
        'seed': config.seed,
        **curve.to_dict(),
    }
    _write_json(data, _output(config, 'best_response.json'))
    return EXIT_OK


def cmd_optimize(config: RunConfig, args: argparse.Namespace) -> int:
    store = PolicyStore(config.cache_dir, config.grid)
    results = sweep_mechanisms(config.objective, config.families, config.coefficients,
                               config.p_grid, config.params, config.trader_beliefs,
                               config.estimator, store)
    results_frame(results).to_csv(_output(config, 'sweep.csv'), index=False, float_format='%.10g')
    sweep_series(results).to_csv(_output(config, 'sweep_series.csv'), index=False,
                                 float_format='%.10g')
    best = select_mechanism(results)
    data = best.to_dict()
    data['objective'] = config.objective.label()
    data['params'] = params_to_dict(config.params)
    _write_json(data, _output(config, 'optimum.json'))
    return EXIT_OK


def cmd_reproduce(config: RunConfig, args: argparse.Namespace) -> int:
    stock = args.table_stock or args.stock or 'apple'
    result = reproduce(args.table, stock, config.estimator, config.grid, config.cache_dir,
                       config.rhos, config.a_grid, config.p_grid)
    stem = f'table{args.table}_{stock}'
    float_format = '%.10g'
    result.table.to_csv(_output(config, f'{stem}.csv'), index=False, float_format=float_format)
    result.deviations.to_csv(_output(config, f'{stem}_deviations.csv'), index=False,
                             float_format=float_format)
    result.series.to_csv(_output(config, f'{stem}_series.csv'), index=False,
                         float_format=float_format)
    if result.sweep is not None:
        result.sweep.to_csv(_output(config, f'{stem}_sweep.csv'), index=False,
                            float_format=float_format)
    worst = result.deviations['relative'].abs().max()
    logger.info("Table %d (%s): largest relative deviation %.4g", args.table, stock, worst)
    return EXIT_OK


def cmd_quarter_check(config: RunConfig, args: argparse.Namespace) -> int:
    check = quarter_check(config.params, config.estimator)
    _write_json(check._asdict(), _output(config, 'quarter_check.json'))
    return EXIT_OK


COMMANDS = {
    'market-quality': cmd_market_quality,
    'best-response': cmd_best_response,
    'optimize': cmd_optimize,
    'reproduce': cmd_reproduce,
    'quarter-check': cmd_quarter_check,
}


def _report_infeasible(error: InfeasibleMechanismError) -> None:
    print(f"infeasible: {error}", file=sys.stderr)
    closest: List[Any] = sorted(error.candidates,
                                key=lambda r: r.reservation_rhs - r.trader_value)[:5]
    for r in closest:
        print(f"  {r.fee.label()} {r.closing.label()}: tau={r.tau_hat} value={r.trader_value:.6g}"
              f" < reservation {r.reservation_rhs:.6g}", file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    try:
        configure_logging(args.verbose)
        if args.command == 'calibrate':
            return cmd_calibrate(args)
        config = RunConfig.resolve(_flags(args), args.config)
        return COMMANDS[args.command](config, args)
    except InfeasibleMechanismError as e:
        _report_infeasible(e)
        return EXIT_INFEASIBLE
    except CacheError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except AuctionLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == '__main__':
    sys.exit(main())
